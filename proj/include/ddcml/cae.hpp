#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ddcml/error.hpp"
#include "ddcml/nd/conv.hpp"
#include "ddcml/nd/ops.hpp"
#include "ddcml/nd/param_store.hpp"
#include "ddcml/nd/pool.hpp"
#include "ddcml/volume.hpp"

namespace ddcml {

inline constexpr std::size_t kEncoderBlocks = 4;

/// Residual bypass: the (pooled) output of block `from` is added to the last
/// convolution of block `from + 1`, before that block's pooling.
struct BypassSite {
  std::size_t from_block = 2;
  std::size_t to_block = 3;
  friend bool operator==(const BypassSite&, const BypassSite&) = default;
};

struct NetworkSpec {
  Dims3 input_dims{32, 32, 32};
  std::array<std::size_t, kEncoderBlocks> block_channels{4, 8, 16, 16};
  std::array<std::size_t, kEncoderBlocks> convs_per_block{1, 1, 3, 3};
  std::size_t kernel = 3;
  std::size_t bottleneck_channels = 1;
  std::vector<BypassSite> bypass_sites{{2, 3}, {3, 4}};

  static constexpr std::size_t kDownscale = 16;  // four stride-2 pools

  Dims3 latent_dims() const {
    return {input_dims.nx / kDownscale, input_dims.ny / kDownscale, input_dims.nz / kDownscale};
  }
  std::size_t embedding_dim() const { return latent_dims().count() * bottleneck_channels; }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// 80x96x80 input, 5x6x5 latent grid, 150-dimensional embedding.
inline NetworkSpec full_spec() {
  NetworkSpec s;
  s.input_dims = {80, 96, 80};
  s.block_channels = {8, 16, 32, 32};
  return s;
}

/// 32^3 input, 2x2x2 latent grid, 8-dimensional embedding.
inline NetworkSpec desk_spec() { return NetworkSpec{}; }

inline void validate(const NetworkSpec& s) {
  const auto& d = s.input_dims;
  require(d.nx > 0 && d.ny > 0 && d.nz > 0, Errc::invalid_argument, "input dims must be positive");
  require(d.nx % NetworkSpec::kDownscale == 0 && d.ny % NetworkSpec::kDownscale == 0 &&
              d.nz % NetworkSpec::kDownscale == 0,
          Errc::invalid_argument, "input dims must be divisible by 16, got " + to_string(d));
  for (std::size_t b = 0; b < kEncoderBlocks; ++b) {
    require(s.block_channels[b] > 0, Errc::invalid_argument, "block channels must be positive");
    require(s.convs_per_block[b] > 0, Errc::invalid_argument, "each block needs at least one convolution");
  }
  require(s.kernel % 2 == 1, Errc::invalid_argument, "kernel size must be odd");
  require(s.bottleneck_channels > 0, Errc::invalid_argument, "bottleneck_channels must be positive");
  for (const auto& site : s.bypass_sites)
    require(site.from_block >= 1 && site.to_block == site.from_block + 1 && site.to_block <= kEncoderBlocks,
            Errc::invalid_argument, "bypass must run from block b to block b+1 (1-based, b >= 1)");
}

/// Channels entering encoder block b (0-based); block 0 sees the image.
inline std::size_t block_input_channels(const NetworkSpec& s, std::size_t b) {
  return b == 0 ? 1 : s.block_channels[b - 1];
}

/// Closed-form parameter count of build(spec): weights plus biases of every
/// convolution, bypass projection and bottleneck layer.
inline std::size_t parameter_count(const NetworkSpec& s) {
  const std::size_t k3 = s.kernel * s.kernel * s.kernel;
  std::size_t n = 0;
  for (std::size_t b = 0; b < kEncoderBlocks; ++b) {
    const std::size_t cin = block_input_channels(s, b), c = s.block_channels[b], m = s.convs_per_block[b];
    // encoder convs plus the mirrored decoder deconvs; the first conv's mirror
    // outputs `cin` channels, hence its bias length
    n += 2 * cin * c * k3 + c + cin + 2 * (m - 1) * (c * c * k3 + c);
  }
  for (const auto& site : s.bypass_sites) {
    const std::size_t from = s.block_channels[site.from_block - 1], to = s.block_channels[site.to_block - 1];
    if (from != to) n += from * to + to;
  }
  const std::size_t c4 = s.block_channels[kEncoderBlocks - 1], bc = s.bottleneck_channels;
  n += (c4 * bc + bc) + (bc * c4 + c4);
  return n;
}

/// Real-valued code produced by the encoder.
struct Embedding {
  std::vector<double> values;
  std::size_t size() const { return values.size(); }
  friend bool operator==(const Embedding&, const Embedding&) = default;
};

/// 3D convolutional autoencoder: four pooled encoder blocks with residual
/// bypasses, a 1x1x1 bottleneck flattened into the embedding, and a mirrored
/// decoder of unpooling + transposed convolutions.
template <class T>
class Model {
 public:
  using Tensor = nd::Tensor<T>;

  struct Output {
    Tensor embedding;       // [D_z]
    Tensor reconstruction;  // [1, nz, ny, nx], [0,1] intensity scale, unclamped
  };

  const NetworkSpec& spec() const { return spec_; }
  nd::ParamStore<T>& params() { return params_; }
  const nd::ParamStore<T>& params() const { return params_; }

  static Model build(const NetworkSpec& spec, std::uint64_t init_seed) {
    validate(spec);
    Model m;
    m.spec_ = spec;
    std::mt19937_64 rng(init_seed);
    const std::size_t k = spec.kernel;
    auto he = [&](const std::string& name, std::size_t a, std::size_t b, std::size_t kk, std::size_t bias_len,
                  std::size_t fan_in) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      std::vector<T> w(a * b * kk * kk * kk);
      for (auto& v : w) v = static_cast<T>(dist(rng));
      m.params_.add(name + ".weight", Tensor({a, b, kk, kk, kk}, std::move(w)));
      m.params_.add(name + ".bias", Tensor::zeros({bias_len}));
    };

    for (std::size_t b = 0; b < kEncoderBlocks; ++b) {
      std::size_t cin = block_input_channels(spec, b);
      const std::size_t c = spec.block_channels[b];
      for (std::size_t i = 0; i < spec.convs_per_block[b]; ++i) {
        he(conv_name(b, i), c, cin, k, c, cin * k * k * k);
        cin = c;
      }
      if (const auto* site = bypass_into(spec, b)) {
        const std::size_t from = spec.block_channels[site->from_block - 1];
        if (from != c) he(bypass_name(b), c, from, 1, c, from);
      }
    }
    const std::size_t c4 = spec.block_channels[kEncoderBlocks - 1], bc = spec.bottleneck_channels;
    he("enc.bottleneck", bc, c4, 1, bc, c4);
    he("dec.bottleneck", bc, c4, 1, c4, bc);
    for (std::size_t bb = kEncoderBlocks; bb-- > 0;) {
      const std::size_t c = spec.block_channels[bb];
      for (std::size_t i = spec.convs_per_block[bb]; i-- > 0;) {
        const std::size_t cout = i == 0 ? block_input_channels(spec, bb) : c;
        he(deconv_name(bb, i), c, cout, k, cout, c * k * k * k);
      }
    }
    return m;
  }

  /// Image volume -> network input [1, nz, ny, nx] on the [0,1] scale.
  Tensor to_input(const Volume& v) const {
    require(v.dims() == spec_.input_dims, Errc::dimension_mismatch,
            "volume " + to_string(v.dims()) + " does not match model input " + to_string(spec_.input_dims));
    std::vector<T> data(v.size());
    const auto vox = v.voxels();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(vox[i]) / T(255);
    const auto& d = spec_.input_dims;
    return Tensor({1, d.nz, d.ny, d.nx}, std::move(data));
  }

  Tensor encode(const Tensor& x) const {
    require(x.rank() == 4 && x.dim(0) == 1 && x.dim(1) == spec_.input_dims.nz && x.dim(2) == spec_.input_dims.ny &&
                x.dim(3) == spec_.input_dims.nx,
            Errc::dimension_mismatch, "encoder input has shape " + nd::to_string(x.shape()));
    // Pooled output of every block; index 0 is the network input.
    std::vector<Tensor> pooled{x};
    Tensor h = x;
    for (std::size_t b = 0; b < kEncoderBlocks; ++b) {
      const std::size_t m = spec_.convs_per_block[b];
      for (std::size_t i = 0; i < m; ++i) {
        h = conv(h, conv_name(b, i));
        const bool last = i + 1 == m;
        if (last) {
          if (const auto* site = bypass_into(spec_, b)) {
            Tensor skip = pooled[site->from_block];
            if (params_.contains(bypass_name(b) + ".weight")) skip = conv(skip, bypass_name(b));
            h = nd::add(h, skip);
          }
        }
        h = nd::relu(h);
      }
      h = nd::maxpool3d(h).output;
      pooled.push_back(h);
    }
    return nd::flatten(conv(h, "enc.bottleneck"));
  }

  Tensor decode(const Tensor& z) const {
    require(z.size() == spec_.embedding_dim(), Errc::dimension_mismatch,
            "embedding of length " + std::to_string(z.size()) + ", model expects " +
                std::to_string(spec_.embedding_dim()));
    const Dims3 lat = spec_.latent_dims();
    Tensor h = nd::reshape(z, {spec_.bottleneck_channels, lat.nz, lat.ny, lat.nx});
    h = nd::relu(deconv(h, "dec.bottleneck"));
    for (std::size_t b = kEncoderBlocks; b-- > 0;) {
      const std::size_t c = h.dim(0), p0 = h.dim(1), p1 = h.dim(2), p2 = h.dim(3);
      h = nd::maxunpool3d(h, nd::window_origin_indices(c, p0, p1, p2), {c, 2 * p0, 2 * p1, 2 * p2});
      for (std::size_t i = spec_.convs_per_block[b]; i-- > 0;) {
        h = deconv(h, deconv_name(b, i));
        if (!(b == 0 && i == 0)) h = nd::relu(h);
      }
    }
    return h;
  }

  Output forward(const Tensor& x) const {
    Tensor z = encode(x);
    return {z, decode(z)};
  }

  Embedding encode(const Volume& v) const {
    const Tensor z = encode(to_input(v).detach());
    return Embedding{std::vector<double>(z.data().begin(), z.data().end())};
  }

  Volume decode(const Embedding& z) const {
    const std::size_t n = z.size();
    return to_volume(decode(Tensor({n}, std::vector<T>(z.values.begin(), z.values.end()))));
  }

  /// Reconstruction tensor -> volume, clamped to [0,1] then scaled by 255.
  Volume to_volume(const Tensor& xhat) const {
    const auto& d = spec_.input_dims;
    require(xhat.size() == d.count(), Errc::dimension_mismatch, "reconstruction size mismatch");
    std::vector<float> vox(xhat.size());
    for (std::size_t i = 0; i < vox.size(); ++i) {
      const double u = std::clamp(static_cast<double>(xhat.data()[i]), 0.0, 1.0);
      vox[i] = static_cast<float>(255.0 * u);
    }
    return Volume(d, std::move(vox));
  }

  static std::string conv_name(std::size_t block, std::size_t i) {
    return "enc" + std::to_string(block + 1) + ".conv" + std::to_string(i);
  }
  static std::string deconv_name(std::size_t block, std::size_t i) {
    return "dec" + std::to_string(block + 1) + ".deconv" + std::to_string(i);
  }
  static std::string bypass_name(std::size_t block) { return "enc" + std::to_string(block + 1) + ".bypass"; }

 private:
  static const BypassSite* bypass_into(const NetworkSpec& s, std::size_t block) {
    for (const auto& site : s.bypass_sites)
      if (site.to_block == block + 1) return &site;
    return nullptr;
  }

  Tensor conv(const Tensor& h, const std::string& name) const {
    return nd::conv3d(h, params_.get(name + ".weight"), params_.get(name + ".bias"));
  }
  Tensor deconv(const Tensor& h, const std::string& name) const {
    return nd::deconv3d(h, params_.get(name + ".weight"), params_.get(name + ".bias"));
  }

  NetworkSpec spec_;
  nd::ParamStore<T> params_;
};

}  // namespace ddcml
