#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "topicmatch/autograd.h"
#include "topicmatch/backbone.h"
#include "topicmatch/nn.h"
#include "topicmatch/rng.h"

namespace topicmatch {

enum class Variant { kFast, kPlus };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct MatcherConfig {
  int num_topics = 100;
  double tau = 0.2;
  int k_covis = 8;
  Variant variant = Variant::kFast;
  double temperature = 0.1;
  int attention_heads = 4;
  int mc_samples = 1;
  double topic_dropout = 0.1;

  // Throws ConfigError when an invariant does not hold.
  void validate() const;
};

struct AttentionOptions {
  int heads = 4;
  bool pre_norm = true;
  bool residual = true;
  bool feed_forward = true;
};

// Multi-head attention sublayer plus feed-forward sublayer, pre-norm residual.
struct AttentionParams {
  AttentionOptions options;
  LayerNorm norm_query, norm_source, norm_ffn;
  Linear query, key, value, output;
  Mlp ffn;

  AttentionParams() = default;
  AttentionParams(Rng& rng, int dim, const AttentionOptions& options);

  int dim() const { return query.in_features(); }
  void collect(const std::string& prefix, NamedParameters& out);
};

// query: Nq x D, source: Nk x D -> Nq x D.
ag::Var attend(const AttentionParams& p, const ag::Var& query, const ag::Var& source);

struct TopicBank {
  ag::Parameter topics;  // K x D
  double dropout_rate = 0.1;

  int num_topics() const { return static_cast<int>(topics.value().rows()); }
  int dim() const { return static_cast<int>(topics.value().cols()); }
};

struct PooledTopics {
  ag::Var local;  // K x D
  int source_image_id = 0;
};

struct TopicDistribution {
  ag::Var theta;                 // N x K, rows on the simplex
  Eigen::VectorXd image_level;   // K, normalized column sum of theta
};

struct CoarseMatch {
  int i = 0;
  int j = 0;
  double confidence = 0.0;
  bool operator==(const CoarseMatch&) const = default;
};
using CoarseMatchSet = std::vector<CoarseMatch>;

// Context merging for the fast variant: the received context is theta * T^
// followed by an output projection and a feed-forward sublayer.
struct MergeParams {
  Linear output;
  LayerNorm norm_ffn;
  Mlp ffn;
  bool feed_forward = true;

  MergeParams() = default;
  MergeParams(Rng& rng, int dim);
  void collect(const std::string& prefix, NamedParameters& out);
};

struct MatcherParams {
  TopicBank bank;
  AttentionParams pool;
  MergeParams merge;            // fast variant
  AttentionParams self_attn;    // plus variant
  AttentionParams cross_attn;   // plus variant
  Variant variant = Variant::kFast;

  void collect(NamedParameters& out, const std::string& prefix = "matcher");
};

MatcherParams init_matcher(std::uint64_t seed, int dim, const MatcherConfig& cfg);

// Coarse map (D x N) to tokens (N x D).
ag::Var coarse_tokens(const FeaturePyramid& pyr);

// Dropout over topic rows; survivors scaled by 1/(1-rate). Identity in eval.
ag::Var drop_topics(const TopicBank& bank, Mode mode, Rng* rng);

PooledTopics context_pool(const AttentionParams& pool, const ag::Var& topics,
                          const ag::Var& tokens, int source_image_id = 0);

TopicDistribution infer_topic_distribution(const PooledTopics& pooled, const ag::Var& tokens);

struct CoassignProbability {
  double same = 0.0;
  double different = 1.0;
};
CoassignProbability coassign_probability(std::span<const double> theta_i,
                                         std::span<const double> theta_j);

// Top-k of the elementwise product of the image-level distributions, sorted by
// descending score with ties to the lower topic index.
std::vector<int> covisible_topics(const TopicDistribution& a, const TopicDistribution& b,
                                  int k_covis);
std::vector<int> covisible_topics(const Eigen::VectorXd& image_a, const Eigen::VectorXd& image_b,
                                  int k_covis);

// Train: one categorical draw per row. Eval: argmax with ties to the lower index.
std::vector<int> assign_topics(const ag::Matrix& theta, Mode mode, Rng* rng);

struct AugmentResult {
  ag::Var features_a;
  ag::Var features_b;
  std::vector<int> skipped_topics;  // covisible topics absent from one image
  std::vector<int> population_a;    // members per covisible topic, in covis order
  std::vector<int> population_b;
};

// Per covisible topic: self-attention within each image's member set, then
// cross-attention between the two sets. Other features pass through unchanged.
AugmentResult in_topic_augment(const ag::Var& features_a, const ag::Var& features_b,
                               std::span<const int> labels_a, std::span<const int> labels_b,
                               std::span<const int> covis, const AttentionParams& self_attn,
                               const AttentionParams& cross_attn);

// Expected topic context per feature, theta * T^ (N x D).
ag::Var expected_context(const ag::Var& theta, const PooledTopics& pooled);

ag::Var merge_context(const MergeParams& merge, const ag::Var& tokens, const PooledTopics& pooled,
                      const TopicDistribution& dist);

// Row softmax times column softmax of <a_i, b_j> / temperature.
ag::Var dual_softmax(const ag::Var& features_a, const ag::Var& features_b, double temperature);

// Mutual nearest neighbours with confidence at least tau, ordered by i.
CoarseMatchSet extract_coarse_matches(const ag::Matrix& p_c, double tau);

struct CoarseResult {
  CoarseMatchSet matches;
  TopicDistribution dist_a;
  TopicDistribution dist_b;
  ag::Var p_c;
  ag::Var features_a;  // merged coarse tokens
  ag::Var features_b;
  std::vector<int> covis;
  std::vector<int> labels_a;
  std::vector<int> labels_b;
  std::vector<int> skipped_topics;
};

// Context pooling on both images with a shared bank, topic inference, variant
// specific context merging, dual-softmax and match extraction. `rng` drives
// topic dropout and label sampling in train mode and may be null in eval.
CoarseResult coarse_match(const FeaturePyramid& a, const FeaturePyramid& b,
                          const MatcherParams& params, const MatcherConfig& cfg, Mode mode,
                          Rng* rng);

}  // namespace topicmatch
