#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "topicmatch/backbone.h"
#include "topicmatch/geometry.h"

namespace topicmatch {

inline constexpr int kManifestVersion = 1;

struct SceneParams {
  int width = 128;
  int height = 128;
  int octaves = 5;
  double base_period = 64.0;      // pixels per lattice cell of the coarsest octave
  double persistence = 0.6;
  double focal_scale = 1.0;       // focal length in units of image width
  double max_rotation_deg = 25.0;
  double max_tilt_deg = 20.0;     // plane normal tilt away from the optical axis of A
  double min_baseline = 0.05;     // lateral camera offset relative to plane depth
  double max_baseline = 0.2;
  double depth_jitter = 0.15;     // relative depth change of B along its viewing ray
  double min_overlap = 0.3;       // fraction of A cells that must have a gt match
  double noise_sigma = 0.02;
  double brightness = 0.2;
  double contrast_min = 0.8;
  double contrast_max = 1.25;
  bool jitter = true;

  void validate() const;
};

struct ScenePair {
  ImageTensor image_a;
  ImageTensor image_b;
  Homography homography;       // A -> B
  FundamentalMatrix fundamental;
  std::vector<IndexPair> gt_coarse;
  CameraPose pose_rel;
  std::uint64_t seed = 0;
  bool has_ground_truth = true;
  int original_width_a = 0;
  int original_height_a = 0;
  int original_width_b = 0;
  int original_height_b = 0;
};

// Deterministic per seed. Retries up to 10 pose draws when the geometry is
// degenerate or the overlap is below min_overlap, then throws DegeneratePose.
ScenePair generate_scene_pair(std::uint64_t seed, const SceneParams& params);

// Procedural texture value in [0, 1] at continuous plane coordinates.
double value_noise(std::uint64_t seed, double x, double y, const SceneParams& params);

struct ArrayRecord {
  std::string path;  // relative to the manifest directory
  std::string dtype; // "f64" or "i32"
  std::vector<int> shape;
  std::string sha256;
};

struct PairRecord {
  std::string id;
  std::string image_a;
  std::string image_b;
  std::uint64_t seed = 0;
  std::string split = "train";
  std::map<std::string, ArrayRecord> arrays;
  int original_width_a = 0;
  int original_height_a = 0;
  int original_width_b = 0;
  int original_height_b = 0;
};

struct DatasetManifest {
  int version = kManifestVersion;
  std::filesystem::path root;  // directory the relative paths resolve against
  bool has_ground_truth = true;
  std::uint64_t seed = 0;
  SceneParams params;
  std::vector<PairRecord> pairs;

  std::vector<const PairRecord*> split(const std::string& name) const;
  const PairRecord& find(const std::string& id) const;
};

std::string pair_id(int index);
std::uint64_t pair_seed(std::uint64_t dataset_seed, int index);

// Writes images/, arrays/ and manifest.json under out_dir. Every tenth pair
// (index % 10 == 9) goes to the val split.
DatasetManifest build_dataset(int n_pairs, const std::filesystem::path& out_dir,
                              const SceneParams& params, std::uint64_t seed);

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Verifies checksums of every array before decoding.
ScenePair load_pair(const DatasetManifest& m, const std::string& id);

// Grayscale image padded on the bottom and right (edge replication) to
// multiples of 8.
struct PaddedImage {
  ImageTensor image;
  int original_width = 0;
  int original_height = 0;
};
PaddedImage pad_to_multiple(const ag::Matrix& gray, int multiple = 8);
PaddedImage load_padded_image(const std::filesystem::path& path);

enum class Pairing { kSequential, kAllPairs };
Pairing parse_pairing(const std::string& name);

// Images (PGM, PPM, PNG) of a directory in lexicographic order. Paths in the
// manifest are absolute; no ground truth is recorded.
DatasetManifest ingest_image_folder(const std::filesystem::path& dir, Pairing pairing);

}  // namespace topicmatch
