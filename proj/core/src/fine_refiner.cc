#include "topicmatch/fine_refiner.h"

#include <cmath>
#include <limits>

#include "topicmatch/errors.h"
#include "topicmatch/mac_counter.h"

namespace topicmatch {
namespace {

ag::Matrix mask_to_bias(const ag::Matrix& mask) {
  ag::Matrix bias(mask.rows(), mask.cols());
  for (ag::Index i = 0; i < mask.size(); ++i) {
    bias.data()[i] = mask.data()[i] > 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  return bias;
}

// Heat rows times the shared grid: M x N_p by N_p x 2.
ag::Var expected_coords(const ag::Var& heat, const ag::Matrix& grid) {
  return ag::matmul(heat, ag::constant(grid));
}

std::vector<double> row_peaks(const ag::Matrix& heat) {
  std::vector<double> out(static_cast<std::size_t>(heat.rows()));
  for (ag::Index r = 0; r < heat.rows(); ++r) out[static_cast<std::size_t>(r)] = heat.row(r).maxCoeff();
  return out;
}

}  // namespace

void FineConfig::validate() const {
  require(window >= 1 && window % 2 == 1, ErrorCode::kConfigError, "fine window must be odd");
  require(temperature > 0.0, ErrorCode::kConfigError, "fine temperature must be positive");
  require(token_hidden >= 0 && channel_hidden >= 0, ErrorCode::kConfigError,
          "mixer hidden widths must be nonnegative");
}

ag::Matrix grid_map(int window) {
  ag::Matrix g(static_cast<ag::Index>(window) * window, 2);
  for (int v = 0; v < window; ++v) {
    for (int u = 0; u < window; ++u) {
      g(v * window + u, 0) = u;
      g(v * window + u, 1) = v;
    }
  }
  return g;
}

PatchBatch crop_patches(const FeaturePyramid& a, const FeaturePyramid& b,
                        const CoarseMatchSet& matches, int window) {
  require(window >= 1 && window % 2 == 1, ErrorCode::kConfigError, "fine window must be odd");
  require(a.fine_dim() == b.fine_dim(), ErrorCode::kShapeError, "crop_patches: fine widths differ");
  const int np = window * window;
  const int half = window / 2;
  const int ratio = FeaturePyramid::kCoarseStride / FeaturePyramid::kFineStride;
  const auto m = static_cast<ag::Index>(matches.size());

  PatchBatch out;
  out.window = window;
  out.mask_a = ag::Matrix::Zero(m, np);
  out.mask_b = ag::Matrix::Zero(m, np);
  std::vector<ag::Index> rows_a(static_cast<std::size_t>(m * np), -1);
  std::vector<ag::Index> rows_b(static_cast<std::size_t>(m * np), -1);

  auto fill = [&](const FeaturePyramid& pyr, int coarse_index, ag::Index k, ag::Matrix& mask,
                  std::vector<ag::Index>& rows, std::vector<Vec2>& origins) {
    require(coarse_index >= 0 && coarse_index < pyr.coarse_height * pyr.coarse_width,
            ErrorCode::kShapeError, "crop_patches: coarse index out of range");
    const int cx = (coarse_index % pyr.coarse_width) * ratio - half;
    const int cy = (coarse_index / pyr.coarse_width) * ratio - half;
    origins.emplace_back(cx, cy);
    for (int v = 0; v < window; ++v) {
      for (int u = 0; u < window; ++u) {
        const int fx = cx + u, fy = cy + v;
        if (fx < 0 || fy < 0 || fx >= pyr.fine_width || fy >= pyr.fine_height) continue;
        mask(k, v * window + u) = 1.0;
        rows[static_cast<std::size_t>(k * np + v * window + u)] = fy * pyr.fine_width + fx;
      }
    }
  };
  for (ag::Index k = 0; k < m; ++k) {
    fill(a, matches[static_cast<std::size_t>(k)].i, k, out.mask_a, rows_a, out.origin_a);
    fill(b, matches[static_cast<std::size_t>(k)].j, k, out.mask_b, rows_b, out.origin_b);
  }
  out.patches_a = ag::gather_rows(ag::transpose(a.fine), rows_a);
  out.patches_b = ag::gather_rows(ag::transpose(b.fine), rows_b);
  return out;
}

MixerBlock::MixerBlock(Rng& rng, int tokens, int channels, int token_hidden, int channel_hidden)
    : token_norm(channels),
      token_mlp(rng, tokens, token_hidden, tokens, 0.3),
      channel_norm(channels),
      channel_mlp(rng, channels, channel_hidden, channels, 0.3) {}

void MixerBlock::set_zero() {
  token_mlp.set_zero();
  channel_mlp.set_zero();
}

void MixerBlock::collect(const std::string& prefix, NamedParameters& out) {
  token_norm.collect(prefix + ".token_norm", out);
  token_mlp.collect(prefix + ".token_mlp", out);
  channel_norm.collect(prefix + ".channel_norm", out);
  channel_mlp.collect(prefix + ".channel_mlp", out);
}

ag::Var mixer_block(const MixerBlock& block, const ag::Var& x) {
  const ag::Index np = block.tokens();
  const ag::Index d = x.cols();
  require(np > 0 && x.rows() % np == 0, ErrorCode::kShapeError,
          "mixer_block: rows are not a multiple of the token count " + std::to_string(np));
  require(block.channel_mlp.fc1.in_features() == d, ErrorCode::kShapeError,
          "mixer_block: channel width mismatch");
  // Token mixing acts on each channel of each patch: (M*D x N_p) rows.
  const ag::Var per_channel = ag::block_transpose(block.token_norm(x), np);
  const ag::Var x1 = ag::add(x, ag::block_transpose(block.token_mlp(per_channel), d));
  return ag::add(x1, block.channel_mlp(block.channel_norm(x1)));
}

void FineParams::collect(NamedParameters& out, const std::string& prefix) {
  shared1.collect(prefix + ".shared1", out);
  shared2.collect(prefix + ".shared2", out);
  detect1.collect(prefix + ".detect1", out);
  detect2.collect(prefix + ".detect2", out);
  head.collect(prefix + ".head", out);
}

FineParams init_fine(std::uint64_t seed, int dim, const FineConfig& cfg) {
  cfg.validate();
  require(dim > 0, ErrorCode::kShapeError, "fine width must be positive");
  Rng rng(seed);
  const int np = cfg.patch_cells();
  const int ht = cfg.token_hidden > 0 ? cfg.token_hidden : 2 * np;
  const int hc = cfg.channel_hidden > 0 ? cfg.channel_hidden : 2 * dim;
  FineParams p;
  p.shared1 = MixerBlock(rng, np, dim, ht, hc);
  p.shared2 = MixerBlock(rng, np, dim, ht, hc);
  p.detect1 = MixerBlock(rng, np, dim, ht, hc);
  p.detect2 = MixerBlock(rng, np, dim, ht, hc);
  p.head = Linear(rng, dim, 1, 0.3);
  return p;
}

SoftArgmax soft_argmax(const ag::Var& scores, const ag::Matrix& mask, const ag::Matrix& grid,
                       double temperature) {
  require(temperature > 0.0, ErrorCode::kConfigError, "temperature must be positive");
  require(scores.rows() == mask.rows() && scores.cols() == mask.cols() &&
              grid.rows() == scores.cols(),
          ErrorCode::kShapeError, "soft_argmax: shape mismatch");
  SoftArgmax out;
  out.heat = ag::softmax_rows(
      ag::add(ag::scale(scores, 1.0 / temperature), ag::constant(mask_to_bias(mask))));
  out.coords = expected_coords(out.heat, grid);
  return out;
}

Keypoint detect_keypoint(const FineParams& params, const ag::Var& patches, const ag::Matrix& mask,
                         const ag::Matrix& grid, const FineConfig& cfg) {
  const ag::Index np = grid.rows();
  require(patches.rows() == mask.rows() * np, ErrorCode::kShapeError,
          "detect_keypoint: patch rows do not match mask");
  Keypoint out;
  const ag::Var z = mixer_block(params.detect2, mixer_block(params.detect1, patches));
  out.scores = ag::reshape(params.head(z), mask.rows(), np);
  if (cfg.fixed_center) {
    ag::Matrix one_hot = ag::Matrix::Zero(mask.rows(), np);
    one_hot.col(np / 2).setOnes();
    out.heat = ag::constant(std::move(one_hot));
    out.coords = expected_coords(out.heat, grid);
  } else {
    SoftArgmax sa = soft_argmax(out.scores, mask, grid, cfg.temperature);
    out.heat = sa.heat;
    out.coords = sa.coords;
  }
  out.descriptor = ag::block_weighted_sum(out.heat, patches);
  return out;
}

PatchMatch match_in_patch(const ag::Var& descriptors, const ag::Var& patches,
                          const ag::Matrix& mask, const ag::Matrix& grid) {
  require(descriptors.rows() == mask.rows() && patches.rows() == mask.rows() * grid.rows() &&
              mask.cols() == grid.rows(),
          ErrorCode::kShapeError, "match_in_patch: shape mismatch");
  PatchMatch out;
  out.heat = ag::softmax_rows(
      ag::add(ag::block_dot(descriptors, patches), ag::constant(mask_to_bias(mask))));
  out.coords = expected_coords(out.heat, grid);
  out.descriptor = ag::block_weighted_sum(out.heat, patches);
  out.confidence = row_peaks(out.heat.value());
  return out;
}

FineResult refine_matches(const FeaturePyramid& a, const FeaturePyramid& b,
                          const CoarseMatchSet& coarse, const FineParams& params,
                          const FineConfig& cfg) {
  cfg.validate();
  ScopedMacStage stage("fine");
  FineResult out;
  if (coarse.empty()) return out;

  PatchBatch batch = crop_patches(a, b, coarse, cfg.window);
  std::vector<int> kept;
  for (int k = 0; k < batch.size(); ++k) {
    if (batch.mask_a.row(k).sum() > 0.0 && batch.mask_b.row(k).sum() > 0.0) kept.push_back(k);
  }
  out.dropped = batch.size() - static_cast<int>(kept.size());
  if (kept.empty()) return out;
  if (out.dropped > 0) {
    CoarseMatchSet valid;
    for (int k : kept) valid.push_back(coarse[static_cast<std::size_t>(k)]);
    batch = crop_patches(a, b, valid, cfg.window);
  }

  const ag::Matrix grid = grid_map(cfg.window);
  const int np = cfg.patch_cells();
  const auto m = static_cast<ag::Index>(kept.size());
  require(params.shared1.tokens() == np, ErrorCode::kShapeError,
          "refine_matches: mixer token count differs from window");

  // Both patches of every match go through the shared blocks in one batch.
  const std::vector<ag::Var> both_in{batch.patches_a, batch.patches_b};
  const ag::Var both = mixer_block(params.shared2, mixer_block(params.shared1, ag::concat_rows(both_in)));
  std::vector<ag::Index> first(static_cast<std::size_t>(m * np)), second(first.size());
  for (std::size_t r = 0; r < first.size(); ++r) {
    first[r] = static_cast<ag::Index>(r);
    second[r] = static_cast<ag::Index>(r + first.size());
  }
  const ag::Var pa = ag::gather_rows(both, first);
  const ag::Var pb = ag::gather_rows(both, second);

  const Keypoint kp = detect_keypoint(params, pa, batch.mask_a, grid, cfg);
  const PatchMatch pm = match_in_patch(kp.descriptor, pb, batch.mask_b, grid);

  ag::Matrix origin_a(m, 2), origin_b(m, 2);
  for (ag::Index k = 0; k < m; ++k) {
    origin_a.row(k) = batch.origin_a[static_cast<std::size_t>(k)].transpose();
    origin_b.row(k) = batch.origin_b[static_cast<std::size_t>(k)].transpose();
  }
  const double stride = FeaturePyramid::kFineStride;
  out.points_a = ag::scale(ag::add(kp.coords, ag::constant(origin_a)), stride);
  out.points_b = ag::scale(ag::add(pm.coords, ag::constant(origin_b)), stride);
  out.heat_a = kp.heat;
  out.heat_b = pm.heat;
  out.mask_a = batch.mask_a;
  out.mask_b = batch.mask_b;

  const ag::Matrix& xa = out.points_a.value();
  const ag::Matrix& xb = out.points_b.value();
  out.matches.reserve(static_cast<std::size_t>(m));
  for (ag::Index k = 0; k < m; ++k) {
    FineMatch fm;
    fm.xa = Vec2(xa(k, 0), xa(k, 1));
    fm.xb = Vec2(xb(k, 0), xb(k, 1));
    fm.confidence = pm.confidence[static_cast<std::size_t>(k)];
    fm.coarse_index = kept[static_cast<std::size_t>(k)];
    out.matches.push_back(fm);
  }
  return out;
}

}  // namespace topicmatch
