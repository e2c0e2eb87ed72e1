#include "topicmatch/synth_data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <tuple>

#include "json.hpp"

#include "topicmatch/errors.h"
#include "topicmatch/io.h"
#include "topicmatch/rng.h"

namespace topicmatch {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr int kMaxPoseDraws = 10;
constexpr double kDegToRad = M_PI / 180.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, int octave, std::int64_t ix, std::int64_t iy) {
  std::uint64_t h = splitmix64(seed ^ (static_cast<std::uint64_t>(octave) << 56));
  h = splitmix64(h ^ static_cast<std::uint64_t>(ix));
  h = splitmix64(h ^ static_cast<std::uint64_t>(iy));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

Vec3 random_unit(Rng& rng) {
  Vec3 v;
  do {
    v = Vec3(rng.normal(), rng.normal(), rng.normal());
  } while (v.norm() < 1e-9);
  return v.normalized();
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

struct Plane {
  Vec3 normal;
  double distance = 1.0;
};

// Plane-induced map from A pixels to B pixels: K R^T (I - t n^T / d) K^-1.
Mat3 plane_homography(const CameraPose& pose, const Plane& plane) {
  const Mat3& k = pose.intrinsics;
  return k * pose.rotation.transpose() *
         (Mat3::Identity() - pose.translation * plane.normal.transpose() / plane.distance) *
         k.inverse();
}

// Every corner ray of B must meet the plane in front of both cameras.
bool corners_visible(const CameraPose& pose, const Plane& plane, int width, int height) {
  const Mat3 k_inv = pose.intrinsics.inverse();
  const double side = plane.distance - plane.normal.dot(pose.translation);
  if (side <= 1e-6) return false;
  for (const Vec2& c : {Vec2(0, 0), Vec2(width - 1, 0), Vec2(width - 1, height - 1),
                        Vec2(0, height - 1)}) {
    const Vec3 ray = pose.rotation * (k_inv * c.homogeneous());
    const double denom = plane.normal.dot(ray);
    if (denom <= 1e-9) return false;
    const double lambda = side / denom;
    if (lambda <= 0.0) return false;
    if ((lambda * ray + pose.translation).z() <= 1e-6) return false;
  }
  return true;
}

json params_to_json(const SceneParams& p) {
  return json{{"width", p.width},
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
              {"jitter", p.jitter}};
}

SceneParams params_from_json(const json& j) {
  SceneParams p;
  p.width = j.at("width").get<int>();
  p.height = j.at("height").get<int>();
  p.octaves = j.at("octaves").get<int>();
  p.base_period = j.at("base_period").get<double>();
  p.persistence = j.at("persistence").get<double>();
  p.focal_scale = j.at("focal_scale").get<double>();
  p.max_rotation_deg = j.at("max_rotation_deg").get<double>();
  p.max_tilt_deg = j.at("max_tilt_deg").get<double>();
  p.min_baseline = j.at("min_baseline").get<double>();
  p.max_baseline = j.at("max_baseline").get<double>();
  p.depth_jitter = j.at("depth_jitter").get<double>();
  p.min_overlap = j.at("min_overlap").get<double>();
  p.noise_sigma = j.at("noise_sigma").get<double>();
  p.brightness = j.at("brightness").get<double>();
  p.contrast_min = j.at("contrast_min").get<double>();
  p.contrast_max = j.at("contrast_max").get<double>();
  p.jitter = j.at("jitter").get<bool>();
  return p;
}

std::vector<double> flatten(const Mat3& m) {
  std::vector<double> out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out.push_back(m(r, c));
  }
  return out;
}

Mat3 unflatten(const std::vector<double>& v) {
  require(v.size() == 9, ErrorCode::kIOError, "expected a 3x3 array");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = v[static_cast<std::size_t>(r * 3 + c)];
  }
  return m;
}

ArrayRecord write_array(const fs::path& root, const std::string& rel, const std::string& dtype,
                        std::vector<int> shape, const std::vector<std::uint8_t>& bytes) {
  write_file(root / rel, bytes);
  return ArrayRecord{rel, dtype, std::move(shape), sha256_hex(bytes)};
}

std::vector<std::uint8_t> read_checked(const fs::path& root, const ArrayRecord& rec) {
  const fs::path path = root / rec.path;
  require(fs::exists(path), ErrorCode::kMissingFile, "missing array file " + path.string());
  auto bytes = read_file(path);
  require(sha256_hex(bytes) == rec.sha256, ErrorCode::kChecksumMismatch,
          "checksum mismatch for " + path.string());
  return bytes;
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".ppm" || ext == ".png";
}

}  // namespace

void SceneParams::validate() const {
  require(width > 0 && height > 0 && width % 8 == 0 && height % 8 == 0, ErrorCode::kConfigError,
          "scene dimensions must be positive multiples of 8");
  require(octaves >= 1 && base_period > 0.0 && persistence > 0.0, ErrorCode::kConfigError,
          "texture parameters must be positive");
  require(focal_scale > 0.0, ErrorCode::kConfigError, "focal_scale must be positive");
  require(max_rotation_deg >= 0.0 && max_rotation_deg < 90.0 && max_tilt_deg >= 0.0 &&
              max_tilt_deg < 80.0,
          ErrorCode::kConfigError, "rotation and tilt ranges must lie in [0, 90)");
  require(min_baseline > 0.0 && max_baseline >= min_baseline, ErrorCode::kConfigError,
          "baseline range must be positive and ordered");
  require(depth_jitter >= 0.0 && depth_jitter < 1.0, ErrorCode::kConfigError,
          "depth_jitter must lie in [0, 1)");
  require(min_overlap >= 0.0 && min_overlap <= 1.0, ErrorCode::kConfigError,
          "min_overlap must lie in [0, 1]");
  require(noise_sigma >= 0.0 && brightness >= 0.0 && contrast_min > 0.0 &&
              contrast_max >= contrast_min,
          ErrorCode::kConfigError, "photometric jitter ranges are invalid");
}

double value_noise(std::uint64_t seed, double x, double y, const SceneParams& p) {
  double total = 0.0, norm = 0.0, amp = 1.0, period = p.base_period;
  for (int o = 0; o < p.octaves; ++o) {
    const double u = x / period, v = y / period;
    const double fu = std::floor(u), fv = std::floor(v);
    const auto ix = static_cast<std::int64_t>(fu), iy = static_cast<std::int64_t>(fv);
    const double su = smooth(u - fu), sv = smooth(v - fv);
    const double top = (1 - su) * lattice(seed, o, ix, iy) + su * lattice(seed, o, ix + 1, iy);
    const double bot =
        (1 - su) * lattice(seed, o, ix, iy + 1) + su * lattice(seed, o, ix + 1, iy + 1);
    total += amp * ((1 - sv) * top + sv * bot);
    norm += amp;
    amp *= p.persistence;
    period *= 0.5;
  }
  // Stretch the contrast: averaged octaves cluster around 0.5.
  return std::clamp(0.5 + 2.0 * (total / norm - 0.5), 0.0, 1.0);
}

ScenePair generate_scene_pair(std::uint64_t seed, const SceneParams& p) {
  p.validate();
  Rng rng(seed);
  const int w = p.width, h = p.height;
  const GridShape grid{w / 8, h / 8};

  CameraPose pose;
  pose.intrinsics << p.focal_scale * w, 0, 0.5 * (w - 1), 0, p.focal_scale * w, 0.5 * (h - 1), 0,
      0, 1;
  Homography hom;
  std::vector<IndexPair> gt;
  bool ok = false;
  for (int attempt = 0; attempt < kMaxPoseDraws && !ok; ++attempt) {
    const double tilt = rng.uniform(0.0, p.max_tilt_deg) * kDegToRad;
    const double azimuth = rng.uniform(0.0, 2.0 * M_PI);
    const Plane plane{Vec3(std::sin(tilt) * std::cos(azimuth), std::sin(tilt) * std::sin(azimuth),
                           std::cos(tilt)),
                      1.0};
    const Vec3 axis = random_unit(rng);
    const double angle = rng.uniform(0.0, p.max_rotation_deg) * kDegToRad;
    pose.rotation = Eigen::AngleAxisd(angle, axis).toRotationMatrix();

    // B looks at the plane point hit by A's optical axis, from a jittered
    // distance, then moves sideways by the baseline.
    const Vec3 target(0.0, 0.0, plane.distance / plane.normal.z());
    const Vec3 view = pose.rotation.col(2);
    const double range = target.norm() * (1.0 + p.depth_jitter * rng.uniform(-1.0, 1.0));
    Vec3 side = random_unit(rng);
    side = (side - side.dot(view) * view);
    if (side.norm() < 1e-9) side = pose.rotation.col(0);
    side.normalize();
    const double baseline = rng.uniform(p.min_baseline, p.max_baseline) * target.norm();
    pose.translation = target - range * view + baseline * side;
    if (pose.translation.norm() <= 1e-9 || !corners_visible(pose, plane, w, h)) continue;
    try {
      hom = Homography(plane_homography(pose, plane));
    } catch (const Error&) {
      continue;
    }
    gt = gt_coarse_matches(hom, grid, grid, 8);
    ok = static_cast<double>(gt.size()) >= p.min_overlap * grid.size() && !gt.empty();
  }
  require(ok, ErrorCode::kDegeneratePose,
          "no usable relative pose after " + std::to_string(kMaxPoseDraws) + " draws");

  ScenePair out;
  out.seed = seed;
  out.pose_rel = pose;
  out.homography = hom;
  out.fundamental = fundamental_from_pose(pose);
  out.gt_coarse = std::move(gt);
  out.original_width_a = out.original_width_b = w;
  out.original_height_a = out.original_height_b = h;

  const std::uint64_t texture = rng.next_u64();
  out.image_a.pixels.resize(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.image_a.pixels(y, x) = quantize(value_noise(texture, x, y, p));
  }

  double brightness = 0.0, contrast = 1.0;
  if (p.jitter) {
    brightness = rng.uniform(-p.brightness, p.brightness);
    contrast = std::exp(rng.uniform(std::log(p.contrast_min), std::log(p.contrast_max)));
  }
  const Mat3 inv = hom.inverse().matrix();
  out.image_b.pixels.resize(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec2 src = (inv * Vec3(x, y, 1.0)).hnormalized();
      double v = value_noise(texture, src.x(), src.y(), p);
      if (p.jitter) v = (v - 0.5) * contrast + 0.5 + brightness + p.noise_sigma * rng.normal();
      out.image_b.pixels(y, x) = quantize(v);
    }
  }
  return out;
}

std::vector<const PairRecord*> DatasetManifest::split(const std::string& name) const {
  std::vector<const PairRecord*> out;
  for (const auto& p : pairs) {
    if (p.split == name) out.push_back(&p);
  }
  return out;
}

const PairRecord& DatasetManifest::find(const std::string& id) const {
  for (const auto& p : pairs) {
    if (p.id == id) return p;
  }
  fail(ErrorCode::kMissingFile, "no pair with id '" + id + "' in manifest");
}

std::string pair_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%04d", index);
  return buf;
}

std::uint64_t pair_seed(std::uint64_t dataset_seed, int index) {
  return splitmix64(dataset_seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

DatasetManifest build_dataset(int n_pairs, const fs::path& out_dir, const SceneParams& params,
                              std::uint64_t seed) {
  require(n_pairs > 0, ErrorCode::kEmptyDataset, "n must be positive");
  params.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "arrays", ec);
  require(!ec && fs::is_directory(out_dir / "arrays"), ErrorCode::kIOError,
          "cannot create dataset directories under " + out_dir.string());

  DatasetManifest m;
  m.root = out_dir;
  m.seed = seed;
  m.params = params;
  for (int i = 0; i < n_pairs; ++i) {
    PairRecord rec;
    rec.id = pair_id(i);
    rec.seed = pair_seed(seed, i);
    rec.split = i % 10 == 9 ? "val" : "train";
    const ScenePair s = generate_scene_pair(rec.seed, params);
    rec.image_a = "images/" + rec.id + "_a.pgm";
    rec.image_b = "images/" + rec.id + "_b.pgm";
    write_pgm(out_dir / rec.image_a, s.image_a.pixels);
    write_pgm(out_dir / rec.image_b, s.image_b.pixels);
    rec.original_width_a = rec.original_width_b = params.width;
    rec.original_height_a = rec.original_height_b = params.height;

    const std::string base = "arrays/" + rec.id + "_";
    rec.arrays["homography"] = write_array(out_dir, base + "homography.f64", "f64", {3, 3},
                                           encode_f64(flatten(s.homography.matrix())));
    rec.arrays["fundamental"] = write_array(out_dir, base + "fundamental.f64", "f64", {3, 3},
                                            encode_f64(flatten(s.fundamental.matrix())));
    rec.arrays["rotation"] = write_array(out_dir, base + "rotation.f64", "f64", {3, 3},
                                         encode_f64(flatten(s.pose_rel.rotation)));
    rec.arrays["intrinsics"] = write_array(out_dir, base + "intrinsics.f64", "f64", {3, 3},
                                           encode_f64(flatten(s.pose_rel.intrinsics)));
    const Vec3& t = s.pose_rel.translation;
    rec.arrays["translation"] =
        write_array(out_dir, base + "translation.f64", "f64", {3}, encode_f64({t.x(), t.y(), t.z()}));
    std::vector<std::int32_t> gt;
    for (const auto& [a, b] : s.gt_coarse) {
      gt.push_back(a);
      gt.push_back(b);
    }
    rec.arrays["gt_coarse"] = write_array(out_dir, base + "gt_coarse.i32", "i32",
                                          {static_cast<int>(s.gt_coarse.size()), 2}, encode_i32(gt));
    rec.arrays["image_a"] = ArrayRecord{rec.image_a, "u8", {params.height, params.width},
                                        sha256_file(out_dir / rec.image_a)};
    rec.arrays["image_b"] = ArrayRecord{rec.image_b, "u8", {params.height, params.width},
                                        sha256_file(out_dir / rec.image_b)};
    m.pairs.push_back(std::move(rec));
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  json pairs = json::array();
  for (const auto& p : m.pairs) {
    json arrays = json::object();
    for (const auto& [name, a] : p.arrays) {
      arrays[name] = {{"path", a.path}, {"dtype", a.dtype}, {"shape", a.shape}, {"sha256", a.sha256}};
    }
    pairs.push_back({{"id", p.id},
                     {"image_a", p.image_a},
                     {"image_b", p.image_b},
                     {"seed", p.seed},
                     {"split", p.split},
                     {"arrays", arrays},
                     {"original_size_a", {p.original_width_a, p.original_height_a}},
                     {"original_size_b", {p.original_width_b, p.original_height_b}}});
  }
  json doc = {{"version", m.version},
              {"has_ground_truth", m.has_ground_truth},
              {"seed", m.seed},
              {"pairs", pairs}};
  if (m.has_ground_truth) doc["generator"] = params_to_json(m.params);
  std::ofstream out(path);
  require(out.good(), ErrorCode::kIOError, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
  require(out.good(), ErrorCode::kIOError, "write failed for " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  require(fs::exists(path), ErrorCode::kMissingFile, "missing manifest " + path.string());
  std::ifstream in(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kIOError, "malformed manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.version = doc.at("version").get<int>();
    require(m.version == kManifestVersion, ErrorCode::kVersionMismatch,
            "manifest version " + std::to_string(m.version) + " is not supported");
    m.root = path.parent_path();
    m.has_ground_truth = doc.at("has_ground_truth").get<bool>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    if (m.has_ground_truth) m.params = params_from_json(doc.at("generator"));
    for (const auto& jp : doc.at("pairs")) {
      PairRecord p;
      p.id = jp.at("id").get<std::string>();
      p.image_a = jp.at("image_a").get<std::string>();
      p.image_b = jp.at("image_b").get<std::string>();
      p.seed = jp.at("seed").get<std::uint64_t>();
      p.split = jp.at("split").get<std::string>();
      for (const auto& [name, ja] : jp.at("arrays").items()) {
        p.arrays[name] = ArrayRecord{ja.at("path").get<std::string>(),
                                     ja.at("dtype").get<std::string>(),
                                     ja.at("shape").get<std::vector<int>>(),
                                     ja.at("sha256").get<std::string>()};
      }
      const auto sa = jp.at("original_size_a").get<std::vector<int>>();
      const auto sb = jp.at("original_size_b").get<std::vector<int>>();
      p.original_width_a = sa.at(0);
      p.original_height_a = sa.at(1);
      p.original_width_b = sb.at(0);
      p.original_height_b = sb.at(1);
      m.pairs.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kIOError, "malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

ScenePair load_pair(const DatasetManifest& m, const std::string& id) {
  const PairRecord& rec = m.find(id);
  ScenePair s;
  s.seed = rec.seed;
  s.has_ground_truth = m.has_ground_truth;
  auto load_image = [&](const std::string& rel, ImageTensor& img, int& ow, int& oh) {
    const fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : m.root / rel;
    require(fs::exists(p), ErrorCode::kMissingFile, "missing image " + p.string());
    PaddedImage padded = load_padded_image(p);
    img = std::move(padded.image);
    ow = padded.original_width;
    oh = padded.original_height;
  };
  load_image(rec.image_a, s.image_a, s.original_width_a, s.original_height_a);
  load_image(rec.image_b, s.image_b, s.original_width_b, s.original_height_b);
  if (!m.has_ground_truth) return s;

  auto array = [&](const std::string& name) -> const ArrayRecord& {
    auto it = rec.arrays.find(name);
    require(it != rec.arrays.end(), ErrorCode::kMissingFile,
            "pair " + id + " has no array '" + name + "'");
    return it->second;
  };
  for (const char* img : {"image_a", "image_b"}) {
    auto it = rec.arrays.find(img);
    if (it != rec.arrays.end()) read_checked(m.root, it->second);
  }
  s.homography = Homography(unflatten(decode_f64(read_checked(m.root, array("homography")))));
  s.fundamental = FundamentalMatrix::from_normalized(unflatten(decode_f64(read_checked(m.root, array("fundamental")))));
  s.pose_rel.rotation = unflatten(decode_f64(read_checked(m.root, array("rotation"))));
  s.pose_rel.intrinsics = unflatten(decode_f64(read_checked(m.root, array("intrinsics"))));
  const auto t = decode_f64(read_checked(m.root, array("translation")));
  require(t.size() == 3, ErrorCode::kIOError, "translation must hold 3 values");
  s.pose_rel.translation = Vec3(t[0], t[1], t[2]);
  const auto gt = decode_i32(read_checked(m.root, array("gt_coarse")));
  require(gt.size() % 2 == 0, ErrorCode::kIOError, "gt_coarse must hold index pairs");
  for (std::size_t k = 0; k < gt.size(); k += 2) s.gt_coarse.emplace_back(gt[k], gt[k + 1]);
  return s;
}

PaddedImage pad_to_multiple(const ag::Matrix& gray, int multiple) {
  require(gray.rows() > 0 && gray.cols() > 0, ErrorCode::kUnreadableImage, "empty image");
  PaddedImage out;
  out.original_height = static_cast<int>(gray.rows());
  out.original_width = static_cast<int>(gray.cols());
  const int h = (out.original_height + multiple - 1) / multiple * multiple;
  const int w = (out.original_width + multiple - 1) / multiple * multiple;
  out.image.pixels.resize(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out.image.pixels(y, x) =
          gray(std::min(y, out.original_height - 1), std::min(x, out.original_width - 1));
    }
  }
  return out;
}

PaddedImage load_padded_image(const fs::path& path) { return pad_to_multiple(read_gray_image(path)); }

Pairing parse_pairing(const std::string& name) {
  if (name == "sequential") return Pairing::kSequential;
  if (name == "all-pairs") return Pairing::kAllPairs;
  fail(ErrorCode::kConfigError, "unknown pairing '" + name + "' (expected sequential|all-pairs)");
}

DatasetManifest ingest_image_folder(const fs::path& dir, Pairing pairing) {
  require(fs::is_directory(dir), ErrorCode::kNoImages, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(fs::absolute(entry.path()));
  }
  require(!files.empty(), ErrorCode::kNoImages, "no images in " + dir.string());
  std::sort(files.begin(), files.end());

  std::vector<std::pair<int, int>> sizes;
  for (const auto& f : files) {
    const ag::Matrix g = read_gray_image(f);
    sizes.emplace_back(static_cast<int>(g.cols()), static_cast<int>(g.rows()));
  }
  DatasetManifest m;
  m.root = fs::absolute(dir);
  m.has_ground_truth = false;
  auto add = [&](std::size_t a, std::size_t b) {
    PairRecord p;
    p.id = pair_id(static_cast<int>(m.pairs.size()));
    p.image_a = files[a].string();
    p.image_b = files[b].string();
    p.split = "val";
    std::tie(p.original_width_a, p.original_height_a) = sizes[a];
    std::tie(p.original_width_b, p.original_height_b) = sizes[b];
    m.pairs.push_back(std::move(p));
  };
  if (pairing == Pairing::kSequential) {
    for (std::size_t i = 0; i + 1 < files.size(); ++i) add(i, i + 1);
  } else {
    for (std::size_t i = 0; i < files.size(); ++i) {
      for (std::size_t j = i + 1; j < files.size(); ++j) add(i, j);
    }
  }
  return m;
}

}  // namespace topicmatch
