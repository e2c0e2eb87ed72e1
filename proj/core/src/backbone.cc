#include "topicmatch/backbone.h"

#include <cmath>

#include "topicmatch/errors.h"

namespace topicmatch {
namespace {

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;

ag::Var pointwise(const PointwiseConv& conv, const ag::Var& x) {
  ag::Var b = conv.bias.var();
  return ag::conv2d(x, conv.weight.var(), &b, ag::ConvShape{1, static_cast<int>(x.cols()), 1, 1, 0});
}

ag::Var conv_only(const ConvBlock& block, const ag::Var& x, int height, int width) {
  return ag::conv2d(x, block.weight.var(), nullptr,
                    ag::ConvShape{height, width, 3, block.stride, 1});
}

ag::Var batch_norm_eval(const ConvBlock& block, const ag::Var& y) {
  ag::Matrix inv_std = (block.running_var.array() + kBatchNormEps).rsqrt().matrix();
  ag::Var centered = ag::add_col(y, ag::constant(-block.running_mean));
  ag::Var normed = ag::mul_col(centered, ag::constant(std::move(inv_std)));
  return ag::add_col(ag::mul_col(normed, block.gamma.var()), block.beta.var());
}

}  // namespace

ConvBlock::ConvBlock(Rng& rng, int in, int out, int stride_)
    : weight(fan_in_uniform(rng, out, static_cast<ag::Index>(in) * 9, static_cast<ag::Index>(in) * 9)),
      gamma(ag::Matrix::Ones(out, 1)),
      beta(ag::Matrix::Zero(out, 1)),
      running_mean(ag::Matrix::Zero(out, 1)),
      running_var(ag::Matrix::Ones(out, 1)),
      stride(stride_) {}

void ConvBlock::collect(const std::string& prefix, NamedParameters& params,
                        NamedBuffers& buffers) {
  params.emplace_back(prefix + ".weight", &weight);
  params.emplace_back(prefix + ".gamma", &gamma);
  params.emplace_back(prefix + ".beta", &beta);
  buffers.emplace_back(prefix + ".running_mean", &running_mean);
  buffers.emplace_back(prefix + ".running_var", &running_var);
}

PointwiseConv::PointwiseConv(Rng& rng, int in, int out, double gain)
    : weight(fan_in_uniform(rng, out, in, in, gain)), bias(ag::Matrix::Zero(out, 1)) {}

void PointwiseConv::collect(const std::string& prefix, NamedParameters& params) {
  params.emplace_back(prefix + ".weight", &weight);
  params.emplace_back(prefix + ".bias", &bias);
}

void BackboneParams::collect(NamedParameters& params, NamedBuffers& buffers,
                             const std::string& prefix) {
  enc1.collect(prefix + ".enc1", params, buffers);
  enc2.collect(prefix + ".enc2", params, buffers);
  enc3.collect(prefix + ".enc3", params, buffers);
  coarse_out.collect(prefix + ".coarse_out", params);
  top2.collect(prefix + ".top2", params);
  lateral2.collect(prefix + ".lateral2", params);
  dec2.collect(prefix + ".dec2", params, buffers);
  top1.collect(prefix + ".top1", params);
  lateral1.collect(prefix + ".lateral1", params);
  dec1.collect(prefix + ".dec1", params, buffers);
  fine_out.collect(prefix + ".fine_out", params);
}

BackboneParams init_backbone(std::uint64_t seed, const BackboneWidths& widths) {
  require(widths.fine > 0 && widths.mid > 0 && widths.coarse > 0, ErrorCode::kShapeError,
          "backbone widths must be positive");
  Rng rng(seed);
  BackboneParams p;
  p.widths = widths;
  const int f = widths.fine, m = widths.mid, c = widths.coarse;
  p.enc1 = ConvBlock(rng, 1, f, 2);
  p.enc2 = ConvBlock(rng, f, m, 2);
  p.enc3 = ConvBlock(rng, m, c, 2);
  p.coarse_out = PointwiseConv(rng, c, c, 0.3);
  p.top2 = PointwiseConv(rng, c, m);
  p.lateral2 = PointwiseConv(rng, m, m);
  p.dec2 = ConvBlock(rng, m, m, 1);
  p.top1 = PointwiseConv(rng, m, f);
  p.lateral1 = PointwiseConv(rng, f, f);
  p.dec1 = ConvBlock(rng, f, f, 1);
  p.fine_out = PointwiseConv(rng, f, f);
  return p;
}

std::size_t backbone_parameter_count(const BackboneWidths& w) {
  const std::size_t f = w.fine, m = w.mid, c = w.coarse;
  auto block = [](std::size_t in, std::size_t out) { return 9 * in * out + 2 * out; };
  auto point = [](std::size_t in, std::size_t out) { return in * out + out; };
  return block(1, f) + block(f, m) + block(m, c) + point(c, c) + point(c, m) + point(m, m) +
         block(m, m) + point(m, f) + point(f, f) + block(f, f) + point(f, f);
}

ag::Var conv_block_forward(ConvBlock& block, const ag::Var& x, int height, int width, Mode mode) {
  if (mode == Mode::kEval) return conv_block_forward(std::as_const(block), x, height, width);
  ag::Var y = conv_only(block, x, height, width);
  const ag::Matrix& v = y.value();
  const double n = static_cast<double>(v.cols());
  ag::Matrix mu = v.rowwise().mean();
  ag::Matrix var = ((v.colwise() - mu.col(0)).array().square().rowwise().sum() /
                    std::max(n - 1.0, 1.0)).matrix();
  block.running_mean = (1.0 - kBatchNormMomentum) * block.running_mean + kBatchNormMomentum * mu;
  block.running_var = (1.0 - kBatchNormMomentum) * block.running_var + kBatchNormMomentum * var;
  ag::Var normed = ag::normalize_rows(y, kBatchNormEps);
  return ag::gelu(ag::add_col(ag::mul_col(normed, block.gamma.var()), block.beta.var()));
}

ag::Var conv_block_forward(const ConvBlock& block, const ag::Var& x, int height, int width) {
  return ag::gelu(batch_norm_eval(block, conv_only(block, x, height, width)));
}

namespace {

template <typename Params>
FeaturePyramid run_pyramid(const ImageTensor& img, Params& p, Mode mode) {
  const int h = img.height(), w = img.width();
  require(h > 0 && w > 0 && h % 8 == 0 && w % 8 == 0, ErrorCode::kShapeError,
          "image dimensions must be positive multiples of 8, got " + std::to_string(h) + "x" +
              std::to_string(w));
  auto block = [mode](auto& b, const ag::Var& x, int hh, int ww) {
    if constexpr (std::is_const_v<std::remove_reference_t<decltype(b)>>) {
      return conv_block_forward(b, x, hh, ww);
    } else {
      return conv_block_forward(b, x, hh, ww, mode);
    }
  };

  ag::Var x = ag::constant(Eigen::Map<const ag::Matrix>(img.pixels.data(), 1,
                                                        static_cast<ag::Index>(h) * w));
  ag::Var e1 = block(p.enc1, x, h, w);                 // 1/2
  ag::Var e2 = block(p.enc2, e1, h / 2, w / 2);        // 1/4
  ag::Var e3 = block(p.enc3, e2, h / 4, w / 4);        // 1/8

  FeaturePyramid out;
  out.coarse_height = h / 8;
  out.coarse_width = w / 8;
  out.fine_height = h / 2;
  out.fine_width = w / 2;
  out.coarse = pointwise(p.coarse_out, e3);

  ag::Var t2 = ag::add(ag::upsample2x(pointwise(p.top2, e3), h / 8, w / 8),
                       pointwise(p.lateral2, e2));
  ag::Var d2 = block(p.dec2, t2, h / 4, w / 4);
  ag::Var t1 = ag::add(ag::upsample2x(pointwise(p.top1, d2), h / 4, w / 4),
                       pointwise(p.lateral1, e1));
  ag::Var d1 = block(p.dec1, t1, h / 2, w / 2);
  out.fine = pointwise(p.fine_out, d1);
  return out;
}

}  // namespace

FeaturePyramid extract_pyramid(const ImageTensor& img, BackboneParams& params, Mode mode) {
  return run_pyramid(img, params, mode);
}

FeaturePyramid extract_pyramid(const ImageTensor& img, const BackboneParams& params) {
  return run_pyramid(img, params, Mode::kEval);
}

ImageTensor standardize_image(const ImageTensor& img) {
  ImageTensor out;
  const double mu = img.pixels.mean();
  const double var = (img.pixels.array() - mu).square().mean();
  const double inv = 1.0 / std::sqrt(var + 1e-6);
  out.pixels = ((img.pixels.array() - mu) * inv).matrix();
  return out;
}

}  // namespace topicmatch
