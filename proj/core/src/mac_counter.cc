#include "topicmatch/mac_counter.h"

namespace topicmatch {
namespace {

thread_local MacCounter* active_counter = nullptr;
thread_local std::string active_stage = "other";

}  // namespace

void MacCounter::add(std::uint64_t macs) { counts_[active_stage] += macs; }

std::uint64_t MacCounter::stage(const std::string& name) const {
  auto it = counts_.find(name);
  return it == counts_.end() ? 0 : it->second;
}

std::uint64_t MacCounter::total() const {
  std::uint64_t sum = 0;
  for (const auto& [name, count] : counts_) sum += count;
  return sum;
}

ScopedMacCounter::ScopedMacCounter(MacCounter& counter) : previous_(active_counter) {
  active_counter = &counter;
}

ScopedMacCounter::~ScopedMacCounter() { active_counter = previous_; }

ScopedMacStage::ScopedMacStage(const std::string& stage) : previous_(active_stage) {
  active_stage = stage;
}

ScopedMacStage::~ScopedMacStage() { active_stage = previous_; }

void count_macs(std::uint64_t macs) {
  if (active_counter != nullptr && macs > 0) active_counter->add(macs);
}

}  // namespace topicmatch
