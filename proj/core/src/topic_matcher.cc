#include "topicmatch/topic_matcher.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "topicmatch/errors.h"
#include "topicmatch/mac_counter.h"

namespace topicmatch {

std::string variant_name(Variant v) { return v == Variant::kFast ? "fast" : "plus"; }

Variant parse_variant(const std::string& name) {
  if (name == "fast") return Variant::kFast;
  if (name == "plus") return Variant::kPlus;
  fail(ErrorCode::kConfigError, "unknown variant '" + name + "' (expected fast|plus)");
}

void MatcherConfig::validate() const {
  require(num_topics >= 1, ErrorCode::kConfigError, "num_topics must be >= 1");
  require(k_covis >= 1 && k_covis <= num_topics, ErrorCode::kConfigError,
          "k_covis must lie in [1, num_topics]");
  require(tau > 0.0 && tau <= 1.0, ErrorCode::kConfigError, "tau must lie in (0, 1]");
  require(temperature > 0.0, ErrorCode::kConfigError, "temperature must be positive");
  require(attention_heads >= 1, ErrorCode::kConfigError, "attention_heads must be >= 1");
  require(mc_samples >= 1, ErrorCode::kConfigError, "mc_samples must be >= 1");
  require(topic_dropout >= 0.0 && topic_dropout < 1.0, ErrorCode::kConfigError,
          "topic_dropout must lie in [0, 1)");
}

AttentionParams::AttentionParams(Rng& rng, int dim, const AttentionOptions& opts)
    : options(opts),
      norm_query(dim),
      norm_source(dim),
      norm_ffn(dim),
      query(rng, dim, dim),
      key(rng, dim, dim),
      value(rng, dim, dim),
      output(rng, dim, dim, 0.3),
      ffn(rng, dim, 2 * dim, dim, 0.3) {}

void AttentionParams::collect(const std::string& prefix, NamedParameters& out) {
  norm_query.collect(prefix + ".norm_query", out);
  norm_source.collect(prefix + ".norm_source", out);
  norm_ffn.collect(prefix + ".norm_ffn", out);
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  output.collect(prefix + ".output", out);
  ffn.collect(prefix + ".ffn", out);
}

ag::Var attend(const AttentionParams& p, const ag::Var& query, const ag::Var& source) {
  const AttentionOptions& o = p.options;
  const int dim = static_cast<int>(query.cols());
  require(source.cols() == dim && p.dim() == dim, ErrorCode::kShapeError,
          "attention: feature width mismatch");
  require(o.heads >= 1 && dim % o.heads == 0, ErrorCode::kShapeError,
          "attention: width not divisible by head count");
  const ag::Var q_in = o.pre_norm ? p.norm_query(query) : query;
  const ag::Var s_in = o.pre_norm ? p.norm_source(source) : source;
  const ag::Var q = p.query(q_in);
  const ag::Var k = p.key(s_in);
  const ag::Var v = p.value(s_in);

  const int dh = dim / o.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ag::Var> heads;
  heads.reserve(static_cast<std::size_t>(o.heads));
  for (int h = 0; h < o.heads; ++h) {
    const ag::Var qh = o.heads == 1 ? q : ag::slice_cols(q, h * dh, dh);
    const ag::Var kh = o.heads == 1 ? k : ag::slice_cols(k, h * dh, dh);
    const ag::Var vh = o.heads == 1 ? v : ag::slice_cols(v, h * dh, dh);
    const ag::Var weights = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), scale));
    heads.push_back(ag::matmul(weights, vh));
  }
  const ag::Var mixed = o.heads == 1 ? heads[0] : ag::concat_cols(heads);
  ag::Var x = p.output(mixed);
  if (o.residual) x = ag::add(query, x);
  if (o.feed_forward) x = ag::add(x, p.ffn(o.pre_norm ? p.norm_ffn(x) : x));
  return x;
}

MergeParams::MergeParams(Rng& rng, int dim)
    : output(rng, dim, dim, 0.3), norm_ffn(dim), ffn(rng, dim, 2 * dim, dim, 0.3) {}

void MergeParams::collect(const std::string& prefix, NamedParameters& out) {
  output.collect(prefix + ".output", out);
  norm_ffn.collect(prefix + ".norm_ffn", out);
  ffn.collect(prefix + ".ffn", out);
}

void MatcherParams::collect(NamedParameters& out, const std::string& prefix) {
  out.emplace_back(prefix + ".topics", &bank.topics);
  pool.collect(prefix + ".pool", out);
  if (variant == Variant::kFast) {
    merge.collect(prefix + ".merge", out);
  } else {
    self_attn.collect(prefix + ".self_attn", out);
    cross_attn.collect(prefix + ".cross_attn", out);
  }
}

MatcherParams init_matcher(std::uint64_t seed, int dim, const MatcherConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  MatcherParams p;
  p.variant = cfg.variant;
  p.bank.topics = ag::Parameter(fan_in_uniform(rng, cfg.num_topics, dim, dim));
  p.bank.dropout_rate = cfg.topic_dropout;
  AttentionOptions opts;
  opts.heads = cfg.attention_heads;
  p.pool = AttentionParams(rng, dim, opts);
  p.merge = MergeParams(rng, dim);
  p.self_attn = AttentionParams(rng, dim, opts);
  p.cross_attn = AttentionParams(rng, dim, opts);
  return p;
}

ag::Var coarse_tokens(const FeaturePyramid& pyr) { return ag::transpose(pyr.coarse); }

ag::Var drop_topics(const TopicBank& bank, Mode mode, Rng* rng) {
  if (mode == Mode::kEval || bank.dropout_rate <= 0.0) return bank.topics.var();
  require(rng != nullptr, ErrorCode::kConfigError, "topic dropout needs a random source");
  const int k = bank.num_topics();
  const double keep = 1.0 - bank.dropout_rate;
  ag::Matrix mask(k, bank.dim());
  for (int r = 0; r < k; ++r) {
    mask.row(r).setConstant(rng->uniform() < bank.dropout_rate ? 0.0 : 1.0 / keep);
  }
  return ag::mul(bank.topics.var(), ag::constant(std::move(mask)));
}

PooledTopics context_pool(const AttentionParams& pool, const ag::Var& topics,
                          const ag::Var& tokens, int source_image_id) {
  require(topics.cols() == tokens.cols(), ErrorCode::kShapeError,
          "context_pool: topic width " + std::to_string(topics.cols()) +
              " differs from feature width " + std::to_string(tokens.cols()));
  return PooledTopics{attend(pool, topics, tokens), source_image_id};
}

TopicDistribution infer_topic_distribution(const PooledTopics& pooled, const ag::Var& tokens) {
  require(pooled.local.cols() == tokens.cols(), ErrorCode::kShapeError,
          "infer_topic_distribution: width mismatch");
  TopicDistribution dist;
  dist.theta = ag::softmax_rows(ag::matmul_nt(tokens, pooled.local));
  const ag::Matrix& theta = dist.theta.value();
  dist.image_level = theta.colwise().sum().transpose();
  const double total = dist.image_level.sum();
  if (total > 0.0) dist.image_level /= total;
  return dist;
}

CoassignProbability coassign_probability(std::span<const double> theta_i,
                                         std::span<const double> theta_j) {
  require(theta_i.size() == theta_j.size(), ErrorCode::kShapeError,
          "coassign_probability: length mismatch");
  double same = 0.0;
  for (std::size_t k = 0; k < theta_i.size(); ++k) same += theta_i[k] * theta_j[k];
  same = std::clamp(same, 0.0, 1.0);
  return CoassignProbability{same, 1.0 - same};
}

std::vector<int> covisible_topics(const Eigen::VectorXd& image_a, const Eigen::VectorXd& image_b,
                                  int k_covis) {
  require(image_a.size() == image_b.size(), ErrorCode::kShapeError,
          "covisible_topics: topic count mismatch");
  const int k = static_cast<int>(image_a.size());
  require(k_covis >= 1 && k_covis <= k, ErrorCode::kConfigError,
          "k_covis must lie in [1, K]");
  Eigen::VectorXd score = image_a.cwiseProduct(image_b);
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return score(x) > score(y); });
  order.resize(static_cast<std::size_t>(k_covis));
  return order;
}

std::vector<int> covisible_topics(const TopicDistribution& a, const TopicDistribution& b,
                                  int k_covis) {
  return covisible_topics(a.image_level, b.image_level, k_covis);
}

std::vector<int> assign_topics(const ag::Matrix& theta, Mode mode, Rng* rng) {
  std::vector<int> labels(static_cast<std::size_t>(theta.rows()));
  for (ag::Index r = 0; r < theta.rows(); ++r) {
    int pick = 0;
    if (mode == Mode::kEval) {
      for (ag::Index c = 1; c < theta.cols(); ++c) {
        if (theta(r, c) > theta(r, pick)) pick = static_cast<int>(c);
      }
    } else {
      require(rng != nullptr, ErrorCode::kConfigError, "topic sampling needs a random source");
      const double u = rng->uniform() * theta.row(r).sum();
      double acc = 0.0;
      pick = static_cast<int>(theta.cols()) - 1;
      for (ag::Index c = 0; c < theta.cols(); ++c) {
        acc += theta(r, c);
        if (u < acc) {
          pick = static_cast<int>(c);
          break;
        }
      }
      // Never land on a zero-probability topic through rounding at the tail.
      while (pick > 0 && theta(r, pick) <= 0.0) --pick;
    }
    labels[static_cast<std::size_t>(r)] = pick;
  }
  return labels;
}

AugmentResult in_topic_augment(const ag::Var& features_a, const ag::Var& features_b,
                               std::span<const int> labels_a, std::span<const int> labels_b,
                               std::span<const int> covis, const AttentionParams& self_attn,
                               const AttentionParams& cross_attn) {
  require(static_cast<ag::Index>(labels_a.size()) == features_a.rows() &&
              static_cast<ag::Index>(labels_b.size()) == features_b.rows(),
          ErrorCode::kShapeError, "in_topic_augment: label count mismatch");
  require(!covis.empty(), ErrorCode::kConfigError, "in_topic_augment: no covisible topics");
  AugmentResult out;
  out.features_a = features_a;
  out.features_b = features_b;
  for (int topic : covis) {
    std::vector<ag::Index> members_a, members_b;
    for (std::size_t i = 0; i < labels_a.size(); ++i) {
      if (labels_a[i] == topic) members_a.push_back(static_cast<ag::Index>(i));
    }
    for (std::size_t j = 0; j < labels_b.size(); ++j) {
      if (labels_b[j] == topic) members_b.push_back(static_cast<ag::Index>(j));
    }
    out.population_a.push_back(static_cast<int>(members_a.size()));
    out.population_b.push_back(static_cast<int>(members_b.size()));
    if (members_a.empty() || members_b.empty()) {
      out.skipped_topics.push_back(topic);
      continue;
    }
    const ag::Var sub_a = ag::gather_rows(features_a, members_a);
    const ag::Var sub_b = ag::gather_rows(features_b, members_b);
    const ag::Var self_a = attend(self_attn, sub_a, sub_a);
    const ag::Var self_b = attend(self_attn, sub_b, sub_b);
    const ag::Var cross_a = attend(cross_attn, self_a, self_b);
    const ag::Var cross_b = attend(cross_attn, self_b, self_a);
    out.features_a = ag::scatter_rows(out.features_a, members_a, cross_a);
    out.features_b = ag::scatter_rows(out.features_b, members_b, cross_b);
  }
  return out;
}

ag::Var expected_context(const ag::Var& theta, const PooledTopics& pooled) {
  return ag::matmul(theta, pooled.local);
}

ag::Var merge_context(const MergeParams& merge, const ag::Var& tokens, const PooledTopics& pooled,
                      const TopicDistribution& dist) {
  require(tokens.cols() == pooled.local.cols() && dist.theta.rows() == tokens.rows() &&
              dist.theta.cols() == pooled.local.rows(),
          ErrorCode::kShapeError, "merge_context: shape mismatch");
  ag::Var x = ag::add(tokens, merge.output(expected_context(dist.theta, pooled)));
  if (merge.feed_forward) x = ag::add(x, merge.ffn(merge.norm_ffn(x)));
  return x;
}

ag::Var dual_softmax(const ag::Var& features_a, const ag::Var& features_b, double temperature) {
  require(temperature > 0.0, ErrorCode::kConfigError, "dual_softmax temperature must be positive");
  const ag::Var sim = ag::scale(ag::matmul_nt(features_a, features_b), 1.0 / temperature);
  const ag::Var by_row = ag::softmax_rows(sim);
  const ag::Var by_col = ag::transpose(ag::softmax_rows(ag::transpose(sim)));
  return ag::mul(by_row, by_col);
}

CoarseMatchSet extract_coarse_matches(const ag::Matrix& p, double tau) {
  const ag::Index rows = p.rows(), cols = p.cols();
  CoarseMatchSet out;
  if (rows == 0 || cols == 0) return out;
  std::vector<ag::Index> best_in_row(static_cast<std::size_t>(rows), 0);
  std::vector<ag::Index> best_in_col(static_cast<std::size_t>(cols), 0);
  for (ag::Index i = 0; i < rows; ++i) {
    for (ag::Index j = 0; j < cols; ++j) {
      if (p(i, j) > p(i, best_in_row[i])) best_in_row[i] = j;
      if (p(i, j) > p(best_in_col[j], j)) best_in_col[j] = i;
    }
  }
  for (ag::Index i = 0; i < rows; ++i) {
    const ag::Index j = best_in_row[i];
    if (best_in_col[j] == i && p(i, j) >= tau) {
      out.push_back(CoarseMatch{static_cast<int>(i), static_cast<int>(j), p(i, j)});
    }
  }
  return out;
}

CoarseResult coarse_match(const FeaturePyramid& a, const FeaturePyramid& b,
                          const MatcherParams& params, const MatcherConfig& cfg, Mode mode,
                          Rng* rng) {
  cfg.validate();
  require(a.coarse_dim() == b.coarse_dim() && a.coarse_dim() == params.bank.dim(),
          ErrorCode::kShapeError, "coarse_match: channel width mismatch");
  require(params.bank.num_topics() == cfg.num_topics, ErrorCode::kConfigError,
          "coarse_match: topic bank size differs from config");
  const ag::Var tokens_a = coarse_tokens(a);
  const ag::Var tokens_b = coarse_tokens(b);

  CoarseResult out;
  PooledTopics pooled_a, pooled_b;
  {
    ScopedMacStage stage("context_pool");
    const ag::Var topics = drop_topics(params.bank, mode, rng);
    pooled_a = context_pool(params.pool, topics, tokens_a, 0);
    pooled_b = context_pool(params.pool, topics, tokens_b, 1);
  }
  {
    ScopedMacStage stage("topic_inference");
    out.dist_a = infer_topic_distribution(pooled_a, tokens_a);
    out.dist_b = infer_topic_distribution(pooled_b, tokens_b);
  }
  if (cfg.variant == Variant::kFast) {
    ScopedMacStage stage("context_merge");
    out.features_a = merge_context(params.merge, tokens_a, pooled_a, out.dist_a);
    out.features_b = merge_context(params.merge, tokens_b, pooled_b, out.dist_b);
  } else {
    out.labels_a = assign_topics(out.dist_a.theta.value(), mode, rng);
    out.labels_b = assign_topics(out.dist_b.theta.value(), mode, rng);
    out.covis = covisible_topics(out.dist_a, out.dist_b, cfg.k_covis);
    ScopedMacStage stage("context_merge");
    AugmentResult aug = in_topic_augment(tokens_a, tokens_b, out.labels_a, out.labels_b,
                                         out.covis, params.self_attn, params.cross_attn);
    out.features_a = aug.features_a;
    out.features_b = aug.features_b;
    out.skipped_topics = std::move(aug.skipped_topics);
  }
  {
    ScopedMacStage stage("dual_softmax");
    out.p_c = dual_softmax(out.features_a, out.features_b, cfg.temperature);
  }
  out.matches = extract_coarse_matches(out.p_c.value(), cfg.tau);
  return out;
}

}  // namespace topicmatch
