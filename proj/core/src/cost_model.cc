#include "topicmatch/cost_model.h"

#include <algorithm>
#include <numeric>

#include "topicmatch/errors.h"

namespace topicmatch {
namespace {

using u64 = std::uint64_t;

u64 conv(u64 out_h, u64 out_w, u64 cin, u64 cout, u64 k) { return out_h * out_w * cin * cout * k * k; }

u64 backbone_macs(int height, int width, const BackboneWidths& w) {
  const u64 h2 = height / 2, w2 = width / 2, h4 = height / 4, w4 = width / 4;
  const u64 h8 = height / 8, w8 = width / 8;
  const u64 f = w.fine, m = w.mid, c = w.coarse;
  return conv(h2, w2, 1, f, 3) + conv(h4, w4, f, m, 3) + conv(h8, w8, m, c, 3) +
         conv(h8, w8, c, c, 1) + conv(h8, w8, c, m, 1) + conv(h4, w4, m, m, 1) +
         conv(h4, w4, m, m, 3) + conv(h4, w4, m, f, 1) + conv(h2, w2, f, f, 1) +
         conv(h2, w2, f, f, 3) + conv(h2, w2, f, f, 1);
}

std::vector<int> default_covis(const std::vector<int>& pa, const std::vector<int>& pb, int k) {
  std::vector<int> order(pa.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return static_cast<long long>(pa[x]) * pb[x] > static_cast<long long>(pa[y]) * pb[y];
  });
  order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(k)));
  return order;
}

}  // namespace

std::uint64_t CostModel::total() const {
  u64 t = 0;
  for (const auto& [name, v] : stages) t += v;
  return t;
}

std::uint64_t CostModel::coarse_total() const {
  u64 t = 0;
  for (const char* s : {"context_pool", "topic_inference", "context_merge", "dual_softmax"}) {
    auto it = stages.find(s);
    if (it != stages.end()) t += it->second;
  }
  return t;
}

std::uint64_t attention_macs(u64 nq, u64 nk, u64 d) {
  return 6 * nq * d * d + 2 * nk * d * d + 2 * nq * nk * d;
}

double augment_topic_macs(double a, double b, double d) {
  return 16.0 * (a + b) * d * d + 2.0 * (a + b) * (a + b) * d;
}

std::vector<int> label_populations(const std::vector<int>& labels, int num_topics) {
  std::vector<int> pop(static_cast<std::size_t>(num_topics), 0);
  for (int l : labels) {
    require(l >= 0 && l < num_topics, ErrorCode::kPopulationMismatch, "label outside [0, K)");
    ++pop[static_cast<std::size_t>(l)];
  }
  return pop;
}

CostModel count_ops(const CostInputs& in) {
  require(in.height >= 0 && in.width >= 0 && in.height % 8 == 0 && in.width % 8 == 0,
          ErrorCode::kShapeError, "image dimensions must be nonnegative multiples of 8");
  require(in.num_topics >= 1 && in.matches >= 0, ErrorCode::kConfigError,
          "num_topics must be positive and matches nonnegative");
  CostModel out;
  for (const char* s : {"backbone", "context_pool", "topic_inference", "context_merge",
                        "dual_softmax", "fine"}) {
    out.stages[s] = 0;
  }
  const u64 n = static_cast<u64>(in.height / 8) * static_cast<u64>(in.width / 8);
  if (n == 0) return out;
  const u64 k = in.num_topics, d = in.widths.coarse;

  if (in.variant == Variant::kPlus || !in.populations_a.empty() || !in.populations_b.empty()) {
    for (const auto* pop : {&in.populations_a, &in.populations_b}) {
      require(pop->size() == k, ErrorCode::kPopulationMismatch,
              "populations must list one count per topic");
      require(std::all_of(pop->begin(), pop->end(), [](int p) { return p >= 0; }) &&
                  static_cast<u64>(std::accumulate(pop->begin(), pop->end(), 0LL)) == n,
              ErrorCode::kPopulationMismatch,
              "populations must be nonnegative and sum to N = " + std::to_string(n));
    }
  }

  out.stages["backbone"] = 2 * backbone_macs(in.height, in.width, in.widths);
  out.stages["context_pool"] = 2 * attention_macs(k, n, d);
  out.stages["topic_inference"] = 2 * n * k * d;
  if (in.variant == Variant::kFast) {
    out.stages["context_merge"] = 2 * (n * k * d + 5 * n * d * d);
  } else {
    const std::vector<int> covis =
        in.covis.empty() ? default_covis(in.populations_a, in.populations_b, in.k_covis) : in.covis;
    u64 merge = 0;
    for (int t : covis) {
      require(t >= 0 && static_cast<u64>(t) < k, ErrorCode::kPopulationMismatch,
              "covisible topic outside [0, K)");
      const u64 a = in.populations_a[static_cast<std::size_t>(t)];
      const u64 b = in.populations_b[static_cast<std::size_t>(t)];
      if (a == 0 || b == 0) continue;
      merge += 16 * (a + b) * d * d + 2 * (a + b) * (a + b) * d;
    }
    out.stages["context_merge"] = merge;
  }
  out.stages["dual_softmax"] = n * n * d;

  const u64 np = static_cast<u64>(in.window) * in.window;
  const u64 df = in.widths.fine;
  const u64 ht = in.token_hidden > 0 ? static_cast<u64>(in.token_hidden) : 2 * np;
  const u64 hc = in.channel_hidden > 0 ? static_cast<u64>(in.channel_hidden) : 2 * df;
  out.stages["fine"] = static_cast<u64>(in.matches) * (12 * df * np * (ht + hc) + 4 * np * df + 4 * np);
  return out;
}

}  // namespace topicmatch
