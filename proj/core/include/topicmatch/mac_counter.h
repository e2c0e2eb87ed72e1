#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace topicmatch {

// Tallies multiply-accumulates performed by the tensor kernels while it is
// installed on the current thread. Kernels report into the stage named by the
// innermost ScopedMacStage; work outside any stage lands in "other".
class MacCounter {
 public:
  void add(std::uint64_t macs);

  const std::map<std::string, std::uint64_t>& by_stage() const { return counts_; }
  std::uint64_t stage(const std::string& name) const;
  std::uint64_t total() const;
  void reset() { counts_.clear(); }

 private:
  std::map<std::string, std::uint64_t> counts_;
};

// Installs a counter for the lifetime of the guard.
class ScopedMacCounter {
 public:
  explicit ScopedMacCounter(MacCounter& counter);
  ~ScopedMacCounter();
  ScopedMacCounter(const ScopedMacCounter&) = delete;
  ScopedMacCounter& operator=(const ScopedMacCounter&) = delete;

 private:
  MacCounter* previous_;
};

class ScopedMacStage {
 public:
  explicit ScopedMacStage(const std::string& stage);
  ~ScopedMacStage();
  ScopedMacStage(const ScopedMacStage&) = delete;
  ScopedMacStage& operator=(const ScopedMacStage&) = delete;

 private:
  std::string previous_;
};

// Called by kernels; no-op when no counter is installed.
void count_macs(std::uint64_t macs);

}  // namespace topicmatch
