#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "topicmatch/backbone.h"
#include "topicmatch/fine_refiner.h"
#include "topicmatch/topic_matcher.h"

namespace topicmatch {

struct ModelConfig {
  BackboneWidths widths;
  MatcherConfig matcher;
  FineConfig fine;
  std::uint64_t seed = 0;

  void validate() const;
  // Architecture-defining fields only, as canonical JSON text.
  std::string architecture_json() const;
  // SHA-256 of architecture_json().
  std::string hash() const;
  // Full config (architecture plus runtime knobs such as tau) as JSON text.
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

struct Model {
  ModelConfig config;
  BackboneParams backbone;
  MatcherParams matcher;
  FineParams fine;

  NamedParameters parameters();
  NamedBuffers buffers();
};

Model init_model(const ModelConfig& cfg);

// Order-independent digest of every parameter and buffer value.
std::string parameter_digest(Model& model);

struct MatchOutput {
  FeaturePyramid pyramid_a;
  FeaturePyramid pyramid_b;
  CoarseResult coarse;
  FineResult fine;
  std::map<std::string, double> stage_ms;
};

// Standardizes both images, extracts pyramids, runs coarse matching and fine
// refinement on the coarse matches. MAC stages: backbone, context_pool,
// topic_inference, context_merge, dual_softmax, fine.
MatchOutput run_matching(const Model& model, const ImageTensor& a, const ImageTensor& b);

// Train-mode forward. Fine refinement runs on `fine_pairs` when given,
// otherwise on the extracted coarse matches.
MatchOutput run_matching_train(Model& model, const ImageTensor& a, const ImageTensor& b, Rng& rng,
                               const CoarseMatchSet* fine_pairs);

}  // namespace topicmatch
