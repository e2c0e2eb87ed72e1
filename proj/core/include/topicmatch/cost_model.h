#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "topicmatch/backbone.h"
#include "topicmatch/topic_matcher.h"

namespace topicmatch {

// Shape inputs of one image pair (both images share height and width).
struct CostInputs {
  int height = 0;
  int width = 0;
  BackboneWidths widths;
  int num_topics = 100;
  Variant variant = Variant::kFast;
  int k_covis = 8;
  // Plus variant: per-topic label counts of each image (length K, summing to
  // the coarse feature count N).
  std::vector<int> populations_a;
  std::vector<int> populations_b;
  // Topics that receive augmentation. Empty: the k_covis topics with the
  // largest population product, ties to the lower index.
  std::vector<int> covis;
  int window = 5;
  int token_hidden = 0;
  int channel_hidden = 0;
  int matches = 0;  // refined pairs
};

// Multiply-accumulate counts per stage. Stage names match the instrumented
// counter: backbone, context_pool, topic_inference, context_merge,
// dual_softmax, fine.
struct CostModel {
  std::map<std::string, std::uint64_t> stages;

  std::uint64_t total() const;
  // context_pool + topic_inference + context_merge + dual_softmax.
  std::uint64_t coarse_total() const;
};

// One pre-norm attention block with feed-forward width 2D:
// 6 Nq D^2 + 2 Nk D^2 + 2 Nq Nk D.
std::uint64_t attention_macs(std::uint64_t nq, std::uint64_t nk, std::uint64_t dim);

// Self-attention in both member sets plus cross-attention both ways for one
// topic with populations a and b: 16 (a + b) D^2 + 2 (a + b)^2 D.
double augment_topic_macs(double a, double b, double dim);

// Throws PopulationMismatch when populations are inconsistent with N or K.
CostModel count_ops(const CostInputs& in);

// Label counts per topic for K topics.
std::vector<int> label_populations(const std::vector<int>& labels, int num_topics);

}  // namespace topicmatch
