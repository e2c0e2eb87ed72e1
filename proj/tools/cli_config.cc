#include "cli_config.h"

#include <functional>
#include <map>

#include "json.hpp"

#include "topicmatch/errors.h"
#include "topicmatch/io.h"

namespace topicmatch::cli {
namespace {

using json = nlohmann::json;
using Setter = std::function<void(const json&)>;

template <typename T>
Setter set(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

std::map<std::string, Setter> model_keys(ModelConfig& m) {
  return {
      {"widths",
       [&m](const json& v) {
         const auto w = v.get<std::vector<int>>();
         require(w.size() == 3, ErrorCode::kConfigError, "model.widths needs three values");
         m.widths = BackboneWidths{w[0], w[1], w[2]};
       }},
      {"num_topics", set(m.matcher.num_topics)},
      {"attention_heads", set(m.matcher.attention_heads)},
      {"variant", [&m](const json& v) { m.matcher.variant = parse_variant(v.get<std::string>()); }},
      {"k_covis", set(m.matcher.k_covis)},
      {"tau", set(m.matcher.tau)},
      {"temperature", set(m.matcher.temperature)},
      {"topic_dropout", set(m.matcher.topic_dropout)},
      {"mc_samples", set(m.matcher.mc_samples)},
      {"window", set(m.fine.window)},
      {"fine_temperature", set(m.fine.temperature)},
      {"token_hidden", set(m.fine.token_hidden)},
      {"channel_hidden", set(m.fine.channel_hidden)},
      {"fixed_center", set(m.fine.fixed_center)},
      {"seed", set(m.seed)},
  };
}

std::map<std::string, Setter> train_keys(TrainConfig& t) {
  return {
      {"lr", set(t.lr)},
      {"epochs", set(t.epochs)},
      {"batch_size", set(t.batch_size)},
      {"seed", set(t.seed)},
      {"lambda_c", set(t.weights.lambda_c)},
      {"lambda_f", set(t.weights.lambda_f)},
      {"checkpoint_every", set(t.checkpoint_every)},
      {"grad_clip", set(t.grad_clip)},
      {"max_fine_matches", set(t.max_fine_matches)},
      {"n_negatives", set(t.n_negatives)},
      {"validate_each_epoch", set(t.validate_each_epoch)},
  };
}

std::map<std::string, Setter> data_keys(SceneParams& p) {
  return {
      {"width", set(p.width)},
      {"height", set(p.height)},
      {"octaves", set(p.octaves)},
      {"base_period", set(p.base_period)},
      {"persistence", set(p.persistence)},
      {"focal_scale", set(p.focal_scale)},
      {"max_rotation_deg", set(p.max_rotation_deg)},
      {"max_tilt_deg", set(p.max_tilt_deg)},
      {"min_baseline", set(p.min_baseline)},
      {"max_baseline", set(p.max_baseline)},
      {"depth_jitter", set(p.depth_jitter)},
      {"min_overlap", set(p.min_overlap)},
      {"noise_sigma", set(p.noise_sigma)},
      {"brightness", set(p.brightness)},
      {"contrast_min", set(p.contrast_min)},
      {"contrast_max", set(p.contrast_max)},
      {"jitter", set(p.jitter)},
  };
}

std::map<std::string, Setter> eval_keys(EvalConfig& e) {
  return {
      {"ransac_threshold", set(e.ransac_threshold)},
      {"ransac_iters", set(e.ransac_iters)},
      {"ransac_seed", set(e.ransac_seed)},
      {"auc_thresholds", set(e.auc_thresholds)},
      {"precision_thresholds", set(e.precision_thresholds)},
  };
}

void apply_section(const json& section, const std::string& name,
                   const std::map<std::string, Setter>& keys) {
  require(section.is_object(), ErrorCode::kConfigError, "config section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    const auto it = keys.find(key);
    require(it != keys.end(), ErrorCode::kConfigError, "unknown config key '" + name + "." + key + "'");
    try {
      it->second(value);
    } catch (const json::exception&) {
      fail(ErrorCode::kConfigError, "config key '" + name + "." + key + "' has the wrong type");
    }
  }
}

}  // namespace

void apply_config_text(const std::string& text, Settings& s) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  require(doc.is_object(), ErrorCode::kConfigError, "config must be a JSON object");
  if (doc.contains("schema_version")) {
    require(doc["schema_version"].is_number_integer() &&
                doc["schema_version"].get<int>() == kConfigSchemaVersion,
            ErrorCode::kConfigError, "unsupported config schema_version");
  }
  for (const auto& [key, value] : doc.items()) {
    if (key == "schema_version") continue;
    if (key == "model") {
      apply_section(value, key, model_keys(s.train.model));
    } else if (key == "train") {
      apply_section(value, key, train_keys(s.train));
    } else if (key == "data") {
      apply_section(value, key, data_keys(s.scene));
    } else if (key == "eval") {
      apply_section(value, key, eval_keys(s.eval));
    } else {
      fail(ErrorCode::kConfigError, "unknown config section '" + key + "'");
    }
  }
}

void apply_config_file(const std::filesystem::path& path, Settings& s) {
  const auto bytes = read_file(path);
  apply_config_text(std::string(bytes.begin(), bytes.end()), s);
}

std::string settings_to_json(const Settings& s) {
  const ModelConfig& m = s.train.model;
  const TrainConfig& t = s.train;
  const SceneParams& p = s.scene;
  const EvalConfig& e = s.eval;
  const json doc = {
      {"schema_version", kConfigSchemaVersion},
      {"model",
       {{"widths", {m.widths.fine, m.widths.mid, m.widths.coarse}},
        {"num_topics", m.matcher.num_topics},
        {"attention_heads", m.matcher.attention_heads},
        {"variant", variant_name(m.matcher.variant)},
        {"k_covis", m.matcher.k_covis},
        {"tau", m.matcher.tau},
        {"temperature", m.matcher.temperature},
        {"topic_dropout", m.matcher.topic_dropout},
        {"mc_samples", m.matcher.mc_samples},
        {"window", m.fine.window},
        {"fine_temperature", m.fine.temperature},
        {"token_hidden", m.fine.token_hidden},
        {"channel_hidden", m.fine.channel_hidden},
        {"fixed_center", m.fine.fixed_center},
        {"seed", m.seed}}},
      {"train",
       {{"lr", t.lr},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"seed", t.seed},
        {"lambda_c", t.weights.lambda_c},
        {"lambda_f", t.weights.lambda_f},
        {"checkpoint_every", t.checkpoint_every},
        {"grad_clip", t.grad_clip},
        {"max_fine_matches", t.max_fine_matches},
        {"n_negatives", t.n_negatives},
        {"validate_each_epoch", t.validate_each_epoch}}},
      {"data",
       {{"width", p.width},
        {"height", p.height},
        {"octaves", p.octaves},
        {"base_period", p.base_period},
        {"persistence", p.persistence},
        {"focal_scale", p.focal_scale},
        {"max_rotation_deg", p.max_rotation_deg},
        {"max_tilt_deg", p.max_tilt_deg},
        {"min_baseline", p.min_baseline},
        {"max_baseline", p.max_baseline},
        {"depth_jitter", p.depth_jitter},
        {"min_overlap", p.min_overlap},
        {"noise_sigma", p.noise_sigma},
        {"brightness", p.brightness},
        {"contrast_min", p.contrast_min},
        {"contrast_max", p.contrast_max},
        {"jitter", p.jitter}}},
      {"eval",
       {{"ransac_threshold", e.ransac_threshold},
        {"ransac_iters", e.ransac_iters},
        {"ransac_seed", e.ransac_seed},
        {"auc_thresholds", e.auc_thresholds},
        {"precision_thresholds", e.precision_thresholds}}},
  };
  return doc.dump(2);
}

}  // namespace topicmatch::cli
