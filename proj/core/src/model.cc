#include "topicmatch/model.h"

#include <algorithm>
#include <chrono>
#include <cstring>

#include "json.hpp"

#include "topicmatch/errors.h"
#include "topicmatch/io.h"
#include "topicmatch/mac_counter.h"

namespace topicmatch {
namespace {

using json = nlohmann::json;

class StageTimer {
 public:
  StageTimer(std::map<std::string, double>& sink, const std::string& name)
      : sink_(sink), name_(name), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    sink_[name_] += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::map<std::string, double>& sink_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

json architecture(const ModelConfig& c) {
  return json{{"format", 1},
              {"widths", {c.widths.fine, c.widths.mid, c.widths.coarse}},
              {"num_topics", c.matcher.num_topics},
              {"attention_heads", c.matcher.attention_heads},
              {"variant", variant_name(c.matcher.variant)},
              {"window", c.fine.window},
              {"token_hidden", c.fine.token_hidden},
              {"channel_hidden", c.fine.channel_hidden}};
}

}  // namespace

void ModelConfig::validate() const {
  require(widths.fine > 0 && widths.mid > 0 && widths.coarse > 0, ErrorCode::kConfigError,
          "backbone widths must be positive");
  require(widths.coarse % matcher.attention_heads == 0, ErrorCode::kConfigError,
          "coarse width must be divisible by the attention head count");
  matcher.validate();
  fine.validate();
}

std::string ModelConfig::architecture_json() const { return architecture(*this).dump(); }

std::string ModelConfig::hash() const {
  const std::string text = architecture_json();
  return sha256_hex(std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string ModelConfig::to_json() const {
  json j = architecture(*this);
  j["seed"] = seed;
  j["tau"] = matcher.tau;
  j["k_covis"] = matcher.k_covis;
  j["temperature"] = matcher.temperature;
  j["mc_samples"] = matcher.mc_samples;
  j["topic_dropout"] = matcher.topic_dropout;
  j["fine_temperature"] = fine.temperature;
  j["fixed_center"] = fine.fixed_center;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const json j = json::parse(text);
    const auto w = j.at("widths").get<std::vector<int>>();
    require(w.size() == 3, ErrorCode::kConfigError, "widths must hold three values");
    c.widths = BackboneWidths{w[0], w[1], w[2]};
    c.matcher.num_topics = j.at("num_topics").get<int>();
    c.matcher.attention_heads = j.at("attention_heads").get<int>();
    c.matcher.variant = parse_variant(j.at("variant").get<std::string>());
    c.fine.window = j.at("window").get<int>();
    c.fine.token_hidden = j.at("token_hidden").get<int>();
    c.fine.channel_hidden = j.at("channel_hidden").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.matcher.tau = j.at("tau").get<double>();
    c.matcher.k_covis = j.at("k_covis").get<int>();
    c.matcher.temperature = j.at("temperature").get<double>();
    c.matcher.mc_samples = j.at("mc_samples").get<int>();
    c.matcher.topic_dropout = j.at("topic_dropout").get<double>();
    c.fine.temperature = j.at("fine_temperature").get<double>();
    c.fine.fixed_center = j.at("fixed_center").get<bool>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfigError, std::string("malformed model config: ") + e.what());
  }
  return c;
}

NamedParameters Model::parameters() {
  NamedParameters out;
  NamedBuffers unused;
  backbone.collect(out, unused);
  matcher.collect(out);
  fine.collect(out);
  return out;
}

NamedBuffers Model::buffers() {
  NamedParameters unused;
  NamedBuffers out;
  backbone.collect(unused, out);
  return out;
}

Model init_model(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.config = cfg;
  m.backbone = init_backbone(cfg.seed * 3 + 1, cfg.widths);
  m.matcher = init_matcher(cfg.seed * 3 + 2, cfg.widths.coarse, cfg.matcher);
  m.fine = init_fine(cfg.seed * 3 + 3, cfg.widths.fine, cfg.fine);
  return m;
}

std::string parameter_digest(Model& model) {
  std::vector<std::pair<std::string, const ag::Matrix*>> all;
  for (auto& [name, p] : model.parameters()) all.emplace_back(name, &p->value());
  for (auto& [name, b] : model.buffers()) all.emplace_back(name, b);
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  std::vector<std::uint8_t> bytes;
  for (const auto& [name, m] : all) {
    bytes.insert(bytes.end(), name.begin(), name.end());
    const auto* raw = reinterpret_cast<const std::uint8_t*>(m->data());
    bytes.insert(bytes.end(), raw, raw + m->size() * sizeof(double));
  }
  return sha256_hex(bytes);
}

MatchOutput run_matching(const Model& model, const ImageTensor& a, const ImageTensor& b) {
  MatchOutput out;
  {
    StageTimer t(out.stage_ms, "backbone");
    ScopedMacStage stage("backbone");
    out.pyramid_a = extract_pyramid(standardize_image(a), model.backbone);
    out.pyramid_b = extract_pyramid(standardize_image(b), model.backbone);
  }
  {
    StageTimer t(out.stage_ms, "coarse");
    out.coarse = coarse_match(out.pyramid_a, out.pyramid_b, model.matcher, model.config.matcher,
                              Mode::kEval, nullptr);
  }
  {
    StageTimer t(out.stage_ms, "fine");
    out.fine = refine_matches(out.pyramid_a, out.pyramid_b, out.coarse.matches, model.fine,
                              model.config.fine);
  }
  return out;
}

MatchOutput run_matching_train(Model& model, const ImageTensor& a, const ImageTensor& b, Rng& rng,
                               const CoarseMatchSet* fine_pairs) {
  MatchOutput out;
  {
    StageTimer t(out.stage_ms, "backbone");
    ScopedMacStage stage("backbone");
    out.pyramid_a = extract_pyramid(standardize_image(a), model.backbone, Mode::kTrain);
    out.pyramid_b = extract_pyramid(standardize_image(b), model.backbone, Mode::kTrain);
  }
  {
    StageTimer t(out.stage_ms, "coarse");
    out.coarse = coarse_match(out.pyramid_a, out.pyramid_b, model.matcher, model.config.matcher,
                              Mode::kTrain, &rng);
  }
  {
    StageTimer t(out.stage_ms, "fine");
    out.fine = refine_matches(out.pyramid_a, out.pyramid_b,
                              fine_pairs != nullptr ? *fine_pairs : out.coarse.matches, model.fine,
                              model.config.fine);
  }
  return out;
}

}  // namespace topicmatch
