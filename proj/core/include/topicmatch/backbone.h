#pragma once

#include <cstdint>

#include "topicmatch/autograd.h"
#include "topicmatch/nn.h"

namespace topicmatch {

// Grayscale image with values in [0, 1]. Height and width are multiples of 8.
struct ImageTensor {
  ag::Matrix pixels;  // height x width

  int height() const { return static_cast<int>(pixels.rows()); }
  int width() const { return static_cast<int>(pixels.cols()); }
};

// Feature maps stored channel-major: coarse is (D_c x (H/8)(W/8)), fine is
// (D_f x (H/2)(W/2)), both in row-major spatial order.
struct FeaturePyramid {
  ag::Var coarse;
  ag::Var fine;
  int coarse_height = 0;
  int coarse_width = 0;
  int fine_height = 0;
  int fine_width = 0;

  static constexpr int kCoarseStride = 8;
  static constexpr int kFineStride = 2;

  int coarse_dim() const { return static_cast<int>(coarse.rows()); }
  int fine_dim() const { return static_cast<int>(fine.rows()); }
};

// Channel widths of the three encoder stages (1/2, 1/4, 1/8). The fine map has
// `fine` channels and the coarse map has `coarse` channels.
struct BackboneWidths {
  int fine = 64;
  int mid = 96;
  int coarse = 128;
};

// conv3x3 (no bias) -> batch normalization -> GELU.
struct ConvBlock {
  ag::Parameter weight;  // out x in*9
  ag::Parameter gamma;   // out x 1
  ag::Parameter beta;    // out x 1
  ag::Matrix running_mean;
  ag::Matrix running_var;
  int stride = 1;

  ConvBlock() = default;
  ConvBlock(Rng& rng, int in, int out, int stride);

  int in_channels() const { return static_cast<int>(weight.value().cols() / 9); }
  int out_channels() const { return static_cast<int>(weight.value().rows()); }
  void collect(const std::string& prefix, NamedParameters& params, NamedBuffers& buffers);
};

// 1x1 convolution with bias.
struct PointwiseConv {
  ag::Parameter weight;  // out x in
  ag::Parameter bias;    // out x 1

  PointwiseConv() = default;
  PointwiseConv(Rng& rng, int in, int out, double gain = 1.0);
  void collect(const std::string& prefix, NamedParameters& params);
};

struct BackboneParams {
  BackboneWidths widths;
  ConvBlock enc1, enc2, enc3;
  PointwiseConv coarse_out;
  PointwiseConv top2, lateral2;
  ConvBlock dec2;
  PointwiseConv top1, lateral1;
  ConvBlock dec1;
  PointwiseConv fine_out;

  void collect(NamedParameters& params, NamedBuffers& buffers, const std::string& prefix = "backbone");
};

BackboneParams init_backbone(std::uint64_t seed, const BackboneWidths& widths);

// Learnable parameter count of init_backbone(.., widths), in closed form.
std::size_t backbone_parameter_count(const BackboneWidths& widths);

// Runs one conv block. In train mode batch statistics over the spatial axis
// normalize the output and the block's running statistics are updated.
ag::Var conv_block_forward(ConvBlock& block, const ag::Var& x, int height, int width, Mode mode);
ag::Var conv_block_forward(const ConvBlock& block, const ag::Var& x, int height, int width);

// Encoder to 1/8 with a two-level top-down decoder back to 1/2.
FeaturePyramid extract_pyramid(const ImageTensor& img, BackboneParams& params, Mode mode);
FeaturePyramid extract_pyramid(const ImageTensor& img, const BackboneParams& params);

// Shifts and scales an image to zero mean and unit variance. Applied by the
// matching pipeline before the backbone.
ImageTensor standardize_image(const ImageTensor& img);

}  // namespace topicmatch
