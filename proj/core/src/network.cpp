#include "mtseg/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mtseg/error.hpp"

namespace mtseg {

void validate(const SegmenterConfig& cfg) {
  if (cfg.levels == 0 || cfg.widths.size() != cfg.levels)
    throw Error(ErrorCode::InvalidArgument, "widths must list one channel count per level");
  if (std::any_of(cfg.widths.begin(), cfg.widths.end(), [](std::size_t w) { return w == 0; }))
    throw Error(ErrorCode::InvalidArgument, "channel widths must be positive");
  if (cfg.in_channels == 0) throw Error(ErrorCode::InvalidArgument, "need at least one input channel");
  const std::size_t div = std::size_t{1} << cfg.levels;
  for (std::size_t p : cfg.patch_size) {
    if (p == 0 || p % div != 0)
      throw Error(ErrorCode::InvalidArgument, "patch size must be a positive multiple of 2^levels");
  }
}

namespace ops {

void conv3d_forward(const Tensor& in, const double* weight, const double* bias, std::size_t out_channels,
                    std::size_t kernel, Tensor& out) {
  const auto [nx, ny, nz] = in.dims;
  const auto r = static_cast<long>(kernel / 2);
  const auto k = static_cast<long>(kernel);
  const std::size_t cin = in.channels;
  out = Tensor(out_channels, in.dims);
  for (std::size_t o = 0; o < out_channels; ++o) {
    double* dst = out.channel(o);
    std::fill(dst, dst + out.spatial(), bias[o]);
    for (std::size_t i = 0; i < cin; ++i) {
      const double* src = in.channel(i);
      const double* w = weight + (o * cin + i) * kernel * kernel * kernel;
      for (long z = 0; z < static_cast<long>(nz); ++z) {
        for (long y = 0; y < static_cast<long>(ny); ++y) {
          double* drow = dst + (static_cast<std::size_t>(z) * ny + static_cast<std::size_t>(y)) * nx;
          for (long kz = 0; kz < k; ++kz) {
            const long zz = z + kz - r;
            if (zz < 0 || zz >= static_cast<long>(nz)) continue;
            for (long ky = 0; ky < k; ++ky) {
              const long yy = y + ky - r;
              if (yy < 0 || yy >= static_cast<long>(ny)) continue;
              const double* srow = src + (static_cast<std::size_t>(zz) * ny + static_cast<std::size_t>(yy)) * nx;
              for (long kx = 0; kx < k; ++kx) {
                const long dx = kx - r;
                const double wv = w[(kz * k + ky) * k + kx];
                const long x0 = std::max(0L, -dx);
                const long x1 = std::min(static_cast<long>(nx), static_cast<long>(nx) - dx);
                const double* s = srow + dx;
                for (long x = x0; x < x1; ++x) drow[x] += wv * s[x];
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_backward(const Tensor& in, const double* weight, std::size_t kernel, const Tensor& d_out, Tensor* d_in,
                     double* d_weight, double* d_bias) {
  const auto [nx, ny, nz] = in.dims;
  const auto r = static_cast<long>(kernel / 2);
  const auto k = static_cast<long>(kernel);
  const std::size_t cin = in.channels;
  const std::size_t cout = d_out.channels;
  if (d_in != nullptr) *d_in = Tensor(cin, in.dims);
  for (std::size_t o = 0; o < cout; ++o) {
    const double* g = d_out.channel(o);
    double b = 0.0;
    for (std::size_t n = 0; n < d_out.spatial(); ++n) b += g[n];
    d_bias[o] += b;
    for (std::size_t i = 0; i < cin; ++i) {
      const double* src = in.channel(i);
      double* dsrc = d_in != nullptr ? d_in->channel(i) : nullptr;
      const double* w = weight + (o * cin + i) * kernel * kernel * kernel;
      double* dw = d_weight + (o * cin + i) * kernel * kernel * kernel;
      for (long z = 0; z < static_cast<long>(nz); ++z) {
        for (long y = 0; y < static_cast<long>(ny); ++y) {
          const double* grow = g + (static_cast<std::size_t>(z) * ny + static_cast<std::size_t>(y)) * nx;
          for (long kz = 0; kz < k; ++kz) {
            const long zz = z + kz - r;
            if (zz < 0 || zz >= static_cast<long>(nz)) continue;
            for (long ky = 0; ky < k; ++ky) {
              const long yy = y + ky - r;
              if (yy < 0 || yy >= static_cast<long>(ny)) continue;
              const std::size_t off = (static_cast<std::size_t>(zz) * ny + static_cast<std::size_t>(yy)) * nx;
              for (long kx = 0; kx < k; ++kx) {
                const long dx = kx - r;
                const long x0 = std::max(0L, -dx);
                const long x1 = std::min(static_cast<long>(nx), static_cast<long>(nx) - dx);
                const std::size_t tap = static_cast<std::size_t>((kz * k + ky) * k + kx);
                const double* s = src + off + dx;
                double acc = 0.0;
                for (long x = x0; x < x1; ++x) acc += grow[x] * s[x];
                dw[tap] += acc;
                if (dsrc != nullptr) {
                  const double wv = w[tap];
                  double* ds = dsrc + off + dx;
                  for (long x = x0; x < x1; ++x) ds[x] += wv * grow[x];
                }
              }
            }
          }
        }
      }
    }
  }
}

Tensor avg_pool2(const Tensor& in) {
  const Dims od{in.dims[0] / 2, in.dims[1] / 2, in.dims[2] / 2};
  Tensor out(in.channels, od);
  const auto [nx, ny, nz] = in.dims;
  for (std::size_t c = 0; c < in.channels; ++c) {
    const double* s = in.channel(c);
    double* d = out.channel(c);
    for (std::size_t z = 0; z < od[2]; ++z)
      for (std::size_t y = 0; y < od[1]; ++y)
        for (std::size_t x = 0; x < od[0]; ++x) {
          double acc = 0.0;
          for (std::size_t dz = 0; dz < 2; ++dz)
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) acc += s[((2 * z + dz) * ny + 2 * y + dy) * nx + 2 * x + dx];
          d[(z * od[1] + y) * od[0] + x] = acc * 0.125;
        }
  }
  (void)nz;
  return out;
}

Tensor avg_pool2_backward(const Tensor& d_out, const Dims& in_dims) {
  Tensor d_in(d_out.channels, in_dims);
  const auto [nx, ny, nz] = in_dims;
  const auto& od = d_out.dims;
  for (std::size_t c = 0; c < d_out.channels; ++c) {
    const double* g = d_out.channel(c);
    double* d = d_in.channel(c);
    for (std::size_t z = 0; z < nz; ++z)
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < nx; ++x) d[(z * ny + y) * nx + x] = g[((z / 2) * od[1] + y / 2) * od[0] + x / 2] * 0.125;
  }
  return d_in;
}

Tensor upsample2(const Tensor& in) {
  const Dims od{in.dims[0] * 2, in.dims[1] * 2, in.dims[2] * 2};
  Tensor out(in.channels, od);
  for (std::size_t c = 0; c < in.channels; ++c) {
    const double* s = in.channel(c);
    double* d = out.channel(c);
    for (std::size_t z = 0; z < od[2]; ++z)
      for (std::size_t y = 0; y < od[1]; ++y)
        for (std::size_t x = 0; x < od[0]; ++x)
          d[(z * od[1] + y) * od[0] + x] = s[((z / 2) * in.dims[1] + y / 2) * in.dims[0] + x / 2];
  }
  return out;
}

Tensor upsample2_backward(const Tensor& d_out) {
  const Dims id{d_out.dims[0] / 2, d_out.dims[1] / 2, d_out.dims[2] / 2};
  Tensor d_in(d_out.channels, id);
  const auto& od = d_out.dims;
  for (std::size_t c = 0; c < d_out.channels; ++c) {
    const double* g = d_out.channel(c);
    double* d = d_in.channel(c);
    for (std::size_t z = 0; z < od[2]; ++z)
      for (std::size_t y = 0; y < od[1]; ++y)
        for (std::size_t x = 0; x < od[0]; ++x) d[((z / 2) * id[1] + y / 2) * id[0] + x / 2] += g[(z * od[1] + y) * od[0] + x];
  }
  return d_in;
}

}  // namespace ops

namespace {

Tensor relu(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

// Masks the incoming gradient in place by the ReLU's pre-activation.
void relu_backward(const Tensor& pre, Tensor& grad) {
  for (std::size_t n = 0; n < grad.data.size(); ++n) {
    if (!(pre.data[n] > 0.0)) grad.data[n] = 0.0;
  }
}

Tensor concat(const Tensor& a, const Tensor& b) {
  Tensor out(a.channels + b.channels, a.dims);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

std::pair<Tensor, Tensor> split(const Tensor& t, std::size_t first_channels) {
  Tensor a(first_channels, t.dims), b(t.channels - first_channels, t.dims);
  const auto cut = static_cast<std::ptrdiff_t>(a.data.size());
  std::copy(t.data.begin(), t.data.begin() + cut, a.data.begin());
  std::copy(t.data.begin() + cut, t.data.end(), b.data.begin());
  return {std::move(a), std::move(b)};
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

ToyUNet::ToyUNet(SegmenterConfig cfg, WeightInit init) : cfg_(std::move(cfg)) {
  validate(cfg_);
  build_layout();
  std::mt19937_64 rng(cfg_.seed);
  auto init_conv = [&](const ConvRef& c) {
    auto& w = params_[c.weight].values;
    if (init == WeightInit::Zero) return;
    const double fan_in = static_cast<double>(c.in * c.kernel * c.kernel * c.kernel);
    const bool is_head = &c == &head_;
    std::normal_distribution<double> dist(0.0, std::sqrt((is_head ? 1.0 : 2.0) / fan_in));
    for (double& v : w) v = dist(rng);
  };
  for (const auto& c : enc_) init_conv(c);
  for (const auto& c : dec_) init_conv(c);
  init_conv(head_);
}

ToyUNet::ToyUNet(SegmenterConfig cfg, std::vector<ParamTensor> params) : cfg_(std::move(cfg)) {
  validate(cfg_);
  build_layout();
  if (params.size() != params_.size()) throw Error(ErrorCode::ShapeMismatch, "parameter count does not match config");
  for (std::size_t n = 0; n < params.size(); ++n) {
    if (params[n].name != params_[n].name || params[n].shape != params_[n].shape ||
        params[n].values.size() != params_[n].values.size())
      throw Error(ErrorCode::ShapeMismatch, "parameter '" + params[n].name + "' does not match config");
  }
  params_ = std::move(params);
}

void ToyUNet::build_layout() {
  params_.clear();
  enc_.clear();
  dec_.clear();
  auto add_conv = [&](const std::string& name, std::size_t in, std::size_t out, std::size_t k) {
    ConvRef ref{params_.size(), params_.size() + 1, in, out, k};
    params_.push_back({name + ".weight", {out, in, k, k, k}, std::vector<double>(out * in * k * k * k, 0.0)});
    params_.push_back({name + ".bias", {out}, std::vector<double>(out, 0.0)});
    return ref;
  };
  for (std::size_t l = 0; l < cfg_.levels; ++l) {
    const std::size_t in = l == 0 ? cfg_.in_channels : cfg_.widths[l - 1];
    enc_.push_back(add_conv("enc" + std::to_string(l), in, cfg_.widths[l], 3));
  }
  for (std::size_t l = 0; l + 1 < cfg_.levels; ++l) {
    dec_.push_back(add_conv("dec" + std::to_string(l), cfg_.widths[l + 1] + cfg_.widths[l], cfg_.widths[l], 3));
  }
  head_ = add_conv("head", cfg_.widths[0], 1, 1);
}

Tensor ToyUNet::forward(const Tensor& input) const {
  Activations cache;
  return forward(input, cache);
}

Tensor ToyUNet::forward(const Tensor& input, Activations& a) const {
  if (input.channels != cfg_.in_channels) throw Error(ErrorCode::ShapeMismatch, "input channel count differs from config");
  const std::size_t div = std::size_t{1} << (cfg_.levels - 1);
  for (std::size_t d : input.dims) {
    if (d == 0 || d % div != 0) throw Error(ErrorCode::ShapeMismatch, "input size not divisible by the pooling depth");
  }
  const std::size_t L = cfg_.levels;
  a.input = input;
  a.enc_pre.assign(L, {});
  a.enc_out.assign(L, {});
  a.pooled.assign(L, {});
  for (std::size_t l = 0; l < L; ++l) {
    const Tensor& src = l == 0 ? a.input : (a.pooled[l] = ops::avg_pool2(a.enc_out[l - 1]));
    const auto& c = enc_[l];
    ops::conv3d_forward(src, params_[c.weight].values.data(), params_[c.bias].values.data(), c.out, c.kernel,
                        a.enc_pre[l]);
    a.enc_out[l] = relu(a.enc_pre[l]);
  }
  a.dec_in.assign(L > 1 ? L - 1 : 0, {});
  a.dec_pre.assign(a.dec_in.size(), {});
  a.dec_out.assign(a.dec_in.size(), {});
  const Tensor* d = &a.enc_out[L - 1];
  for (std::size_t l = L - 1; l-- > 0;) {
    a.dec_in[l] = concat(ops::upsample2(*d), a.enc_out[l]);
    const auto& c = dec_[l];
    ops::conv3d_forward(a.dec_in[l], params_[c.weight].values.data(), params_[c.bias].values.data(), c.out, c.kernel,
                        a.dec_pre[l]);
    a.dec_out[l] = relu(a.dec_pre[l]);
    d = &a.dec_out[l];
  }
  a.head_in = *d;
  Tensor logits;
  ops::conv3d_forward(a.head_in, params_[head_.weight].values.data(), params_[head_.bias].values.data(), 1, 1, logits);
  a.prob = std::move(logits);
  for (double& v : a.prob.data) v = sigmoid(v);
  return a.prob;
}

std::vector<std::vector<double>> ToyUNet::backward(const Activations& a, const Tensor& d_prob) const {
  if (d_prob.data.size() != a.prob.data.size()) throw Error(ErrorCode::ShapeMismatch, "gradient shape differs from output");
  std::vector<std::vector<double>> grads(params_.size());
  for (std::size_t n = 0; n < params_.size(); ++n) grads[n].assign(params_[n].values.size(), 0.0);

  Tensor d_logit = d_prob;
  for (std::size_t n = 0; n < d_logit.data.size(); ++n) {
    const double p = a.prob.data[n];
    d_logit.data[n] *= p * (1.0 - p);
  }
  Tensor d_cur;
  ops::conv3d_backward(a.head_in, params_[head_.weight].values.data(), 1, d_logit, &d_cur,
                       grads[head_.weight].data(), grads[head_.bias].data());

  const std::size_t L = cfg_.levels;
  // Gradients arriving at each encoder output through skip connections.
  std::vector<Tensor> d_skip(L);
  for (std::size_t l = 0; l + 1 < L; ++l) {
    const auto& c = dec_[l];
    relu_backward(a.dec_pre[l], d_cur);
    Tensor d_in;
    ops::conv3d_backward(a.dec_in[l], params_[c.weight].values.data(), c.kernel, d_cur, &d_in,
                         grads[c.weight].data(), grads[c.bias].data());
    auto [d_up, d_enc] = split(d_in, cfg_.widths[l + 1]);
    d_skip[l] = std::move(d_enc);
    d_cur = ops::upsample2_backward(d_up);
  }
  // d_cur now holds the gradient at enc_out[L-1].
  for (std::size_t l = L; l-- > 0;) {
    if (l + 1 < L) {
      for (std::size_t n = 0; n < d_cur.data.size(); ++n) d_cur.data[n] += d_skip[l].data[n];
    }
    relu_backward(a.enc_pre[l], d_cur);
    const auto& c = enc_[l];
    const Tensor& src = l == 0 ? a.input : a.pooled[l];
    Tensor d_in;
    ops::conv3d_backward(src, params_[c.weight].values.data(), c.kernel, d_cur, l == 0 ? nullptr : &d_in,
                         grads[c.weight].data(), grads[c.bias].data());
    if (l > 0) d_cur = ops::avg_pool2_backward(d_in, a.enc_out[l - 1].dims);
  }
  return grads;
}

}  // namespace mtseg
