#include "topicmatch/checkpoint.h"

#include <cstring>

#include "json.hpp"

#include "topicmatch/errors.h"
#include "topicmatch/io.h"

namespace topicmatch {
namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'T', 'M', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::size_t kDigestBytes = 32;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t pos) {
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  return v;
}

std::vector<std::uint8_t> digest(const std::vector<std::uint8_t>& bytes, std::size_t n) {
  const std::string hex = sha256_hex(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n)));
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>(std::stoi(hex.substr(i, 2), nullptr, 16)));
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model& model, const AdamState* adam,
                     std::int64_t step) {
  std::vector<std::pair<std::string, const ag::Matrix*>> tensors;
  for (auto& [name, p] : model.parameters()) tensors.emplace_back("param/" + name, &p->value());
  for (auto& [name, b] : model.buffers()) tensors.emplace_back("buffer/" + name, b);
  if (adam != nullptr) {
    for (const auto& [name, m] : adam->m) tensors.emplace_back("adam_m/" + name, &m);
    for (const auto& [name, v] : adam->v) tensors.emplace_back("adam_v/" + name, &v);
  }
  json entries = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : tensors) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(m->size()) * sizeof(double);
    entries.push_back({{"name", name},
                       {"shape", {m->rows(), m->cols()}},
                       {"dtype", "f64"},
                       {"offset", offset},
                       {"bytes", bytes}});
    offset += bytes;
  }
  const json header = {{"tensors", entries},
                       {"config", json::parse(model.config.to_json())},
                       {"config_hash", model.config.hash()},
                       {"step", step},
                       {"adam_step", adam != nullptr ? adam->step : 0}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, m] : tensors) {
    const auto* raw = reinterpret_cast<const std::uint8_t*>(m->data());
    out.insert(out.end(), raw, raw + m->size() * sizeof(double));
  }
  const auto d = digest(out, out.size());
  out.insert(out.end(), d.begin(), d.end());
  write_file(path, out);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const Error&) {
    fail(ErrorCode::kIOError, "cannot read checkpoint " + path.string());
  }
  const std::size_t fixed = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  require(bytes.size() >= fixed, ErrorCode::kIOError, "checkpoint is truncated");
  require(std::memcmp(bytes.data(), kMagic, sizeof kMagic) == 0, ErrorCode::kVersionMismatch,
          "not a checkpoint file (bad magic)");
  const auto version = get<std::uint32_t>(bytes, sizeof kMagic);
  require(version == kCheckpointVersion, ErrorCode::kVersionMismatch,
          "checkpoint format version " + std::to_string(version) + ", expected " +
              std::to_string(kCheckpointVersion));
  require(bytes.size() >= fixed + kDigestBytes, ErrorCode::kIOError, "checkpoint is truncated");
  const std::size_t body = bytes.size() - kDigestBytes;
  const auto d = digest(bytes, body);
  require(std::equal(d.begin(), d.end(), bytes.begin() + static_cast<std::ptrdiff_t>(body)),
          ErrorCode::kIOError, "checkpoint digest mismatch (truncated or corrupt)");

  const auto header_len = get<std::uint64_t>(bytes, sizeof kMagic + sizeof(std::uint32_t));
  require(fixed + header_len <= body, ErrorCode::kIOError, "checkpoint header overruns file");
  CheckpointData data;
  try {
    const json header = json::parse(bytes.begin() + fixed,
                                    bytes.begin() + static_cast<std::ptrdiff_t>(fixed + header_len));
    data.config = ModelConfig::from_json(header.at("config").dump());
    data.config_hash = header.at("config_hash").get<std::string>();
    data.step = header.at("step").get<std::int64_t>();
    const std::size_t payload = fixed + header_len;
    for (const auto& e : header.at("tensors")) {
      const auto shape = e.at("shape").get<std::vector<ag::Index>>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto n = e.at("bytes").get<std::uint64_t>();
      require(shape.size() == 2 && static_cast<std::uint64_t>(shape[0] * shape[1]) * sizeof(double) == n,
              ErrorCode::kIOError, "tensor shape and byte count disagree");
      require(payload + offset + n <= body, ErrorCode::kIOError, "tensor payload overruns file");
      ag::Matrix m(shape[0], shape[1]);
      std::memcpy(m.data(), bytes.data() + payload + offset, n);
      data.tensors.emplace(e.at("name").get<std::string>(), std::move(m));
    }
    data.adam_step = header.at("adam_step").get<std::int64_t>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kIOError, std::string("malformed checkpoint header: ") + e.what());
  }
  return data;
}

void restore_model(const CheckpointData& data, Model& model, AdamState* adam, bool force) {
  if (!force) {
    require(data.config_hash == model.config.hash(), ErrorCode::kConfigHashMismatch,
            "checkpoint architecture " + data.config_hash.substr(0, 12) +
                " differs from the model's " + model.config.hash().substr(0, 12));
  }
  auto take = [&](const std::string& key, ag::Matrix& dst) {
    auto it = data.tensors.find(key);
    require(it != data.tensors.end(), ErrorCode::kConfigHashMismatch,
            "checkpoint lacks tensor " + key);
    require(it->second.rows() == dst.rows() && it->second.cols() == dst.cols(),
            ErrorCode::kConfigHashMismatch, "shape mismatch for tensor " + key);
    dst = it->second;
  };
  for (auto& [name, p] : model.parameters()) take("param/" + name, p->value());
  for (auto& [name, b] : model.buffers()) take("buffer/" + name, *b);
  if (adam != nullptr) {
    adam->m.clear();
    adam->v.clear();
    for (const auto& [key, m] : data.tensors) {
      if (key.starts_with("adam_m/")) adam->m[key.substr(7)] = m;
      if (key.starts_with("adam_v/")) adam->v[key.substr(7)] = m;
    }
    adam->step = data.adam_step;
  }
}

Model load_model(const std::filesystem::path& path) {
  const CheckpointData data = read_checkpoint(path);
  Model model = init_model(data.config);
  restore_model(data, model, nullptr);
  return model;
}

}  // namespace topicmatch
