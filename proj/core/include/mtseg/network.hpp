#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mtseg/volume.hpp"

namespace mtseg {

/// Dense [channel][z][y][x] tensor, x fastest.
struct Tensor {
  std::size_t channels = 0;
  Dims dims{0, 0, 0};
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t c, Dims d, double fill = 0.0) : channels(c), dims(d), data(c * d[0] * d[1] * d[2], fill) {}

  std::size_t spatial() const { return dims[0] * dims[1] * dims[2]; }
  double* channel(std::size_t c) { return data.data() + c * spatial(); }
  const double* channel(std::size_t c) const { return data.data() + c * spatial(); }
};

struct SegmenterConfig {
  /// Full-scale training used 160^3 patches; desk runs use 32^3.
  static constexpr Dims kFullScalePatchSize{160, 160, 160};

  Dims patch_size{32, 32, 32};
  std::vector<std::size_t> widths{4, 8};
  std::size_t levels = 2;
  std::size_t in_channels = 2;
  std::uint64_t seed = 0;
};

/// Throws InvalidArgument unless widths.size() == levels, every width is
/// positive and each patch axis is divisible by 2^levels.
void validate(const SegmenterConfig& cfg);

struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

enum class WeightInit { He, Zero };

/// Small 3D encoder-decoder: per level a 3x3x3 convolution + ReLU, 2x average
/// pooling between encoder levels, nearest 2x upsampling with a concatenated
/// skip connection on the way back, and a 1x1x1 head with a logistic output.
class ToyUNet {
 public:
  struct Activations;

  explicit ToyUNet(SegmenterConfig cfg, WeightInit init = WeightInit::He);
  ToyUNet(SegmenterConfig cfg, std::vector<ParamTensor> params);

  const SegmenterConfig& config() const { return cfg_; }
  std::vector<ParamTensor>& parameters() { return params_; }
  const std::vector<ParamTensor>& parameters() const { return params_; }

  /// Per-voxel probabilities in a single channel with the input's spatial
  /// shape. Throws ShapeMismatch when the channel count differs from the
  /// config or a spatial axis is not divisible by 2^(levels-1).
  Tensor forward(const Tensor& input) const;
  Tensor forward(const Tensor& input, Activations& cache) const;

  /// Parameter gradients (same layout as parameters()) given dLoss/dp.
  std::vector<std::vector<double>> backward(const Activations& cache, const Tensor& d_prob) const;

  struct Activations {
    Tensor input;
    std::vector<Tensor> enc_pre, enc_out, pooled;
    std::vector<Tensor> dec_in, dec_pre, dec_out;
    Tensor head_in;
    Tensor prob;
  };

 private:
  struct ConvRef {
    std::size_t weight;  // index into params_
    std::size_t bias;
    std::size_t in, out, kernel;
  };

  void build_layout();

  SegmenterConfig cfg_;
  std::vector<ParamTensor> params_;
  std::vector<ConvRef> enc_, dec_;
  ConvRef head_{};
};

namespace ops {

/// Zero-padded "same" 3D convolution, kernel 1 or 3 (odd).
void conv3d_forward(const Tensor& in, const double* weight, const double* bias, std::size_t out_channels,
                    std::size_t kernel, Tensor& out);
void conv3d_backward(const Tensor& in, const double* weight, std::size_t kernel, const Tensor& d_out, Tensor* d_in,
                     double* d_weight, double* d_bias);
Tensor avg_pool2(const Tensor& in);
Tensor avg_pool2_backward(const Tensor& d_out, const Dims& in_dims);
Tensor upsample2(const Tensor& in);
Tensor upsample2_backward(const Tensor& d_out);

}  // namespace ops

}  // namespace mtseg
