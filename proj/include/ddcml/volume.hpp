#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "ddcml/binary_io.hpp"
#include "ddcml/error.hpp"

namespace ddcml {

struct Dims3 {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t count() const { return nx * ny * nz; }
  std::size_t min() const { return std::min(nx, std::min(ny, nz)); }
  friend bool operator==(const Dims3&, const Dims3&) = default;
};

inline std::string to_string(const Dims3& d) {
  return std::to_string(d.nx) + "x" + std::to_string(d.ny) + "x" + std::to_string(d.nz);
}

/// 3D grid of gray levels in [0, 255], x fastest and z slowest.
class Volume {
 public:
  Volume() = default;

  explicit Volume(Dims3 dims, float fill = 0.0f) : dims_(dims), voxels_(dims.count(), fill) {
    require(dims.nx > 0 && dims.ny > 0 && dims.nz > 0, Errc::invalid_argument, "volume dims must be positive");
    require(std::isfinite(fill) && fill >= 0.0f && fill <= 255.0f, Errc::invalid_argument, "fill out of range");
  }

  Volume(Dims3 dims, std::vector<float> voxels) : dims_(dims), voxels_(std::move(voxels)) {
    require(dims.nx > 0 && dims.ny > 0 && dims.nz > 0, Errc::invalid_argument, "volume dims must be positive");
    require(voxels_.size() == dims.count(), Errc::dimension_mismatch,
            "expected " + std::to_string(dims.count()) + " voxels, got " + std::to_string(voxels_.size()));
    for (float v : voxels_) {
      require(std::isfinite(v), Errc::non_finite, "voxel is not finite");
      require(v >= 0.0f && v <= 255.0f, Errc::invalid_argument, "voxel outside [0, 255]");
    }
  }

  const Dims3& dims() const { return dims_; }
  std::size_t size() const { return voxels_.size(); }
  std::span<const float> voxels() const { return voxels_; }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return x + dims_.nx * (y + dims_.ny * z); }
  float at(std::size_t x, std::size_t y, std::size_t z) const { return voxels_[index(x, y, z)]; }

  // Callers writing through these are responsible for keeping values in range.
  float& at(std::size_t x, std::size_t y, std::size_t z) { return voxels_[index(x, y, z)]; }
  std::span<float> mutable_voxels() { return voxels_; }

  double mean() const {
    double s = 0.0;
    for (float v : voxels_) s += v;
    return voxels_.empty() ? 0.0 : s / static_cast<double>(voxels_.size());
  }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Dims3 dims_{};
  std::vector<float> voxels_;
};

inline constexpr char kVolumeMagic[5] = "VOL1";
inline constexpr std::size_t kVolumeHeaderBytes = 16;

inline void write_volume(const Volume& v, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot open for writing: " + path.string());
  binio::put_magic(os, kVolumeMagic);
  binio::put_u32(os, static_cast<std::uint32_t>(v.dims().nx));
  binio::put_u32(os, static_cast<std::uint32_t>(v.dims().ny));
  binio::put_u32(os, static_cast<std::uint32_t>(v.dims().nz));
  for (float x : v.voxels()) binio::put_f32(os, x);
  os.flush();
  if (!os) throw Error(Errc::io, "write failed: " + path.string());
}

inline Volume read_volume(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io, "cannot open: " + path.string());
  binio::expect_magic(is, kVolumeMagic, path.string());
  Dims3 d;
  d.nx = binio::get_u32(is, "VOL1 header");
  d.ny = binio::get_u32(is, "VOL1 header");
  d.nz = binio::get_u32(is, "VOL1 header");
  require(d.count() > 0, Errc::dimension_mismatch, path.string() + ": zero dimension in header");

  // Payload size is checked against the header before decoding, so a short or
  // long payload is reported as a dimension/payload mismatch.
  const auto payload_start = is.tellg();
  is.seekg(0, std::ios::end);
  const auto payload_bytes = static_cast<std::uint64_t>(is.tellg() - payload_start);
  is.seekg(payload_start);
  const std::uint64_t expected = 4ull * d.count();
  if (payload_bytes != expected) {
    if (payload_bytes % 4 != 0)
      throw Error(Errc::truncated, path.string() + ": payload is not a whole number of floats");
    throw Error(Errc::dimension_mismatch, path.string() + ": header declares " + to_string(d) + " (" +
                                              std::to_string(d.count()) + " values) but payload carries " +
                                              std::to_string(payload_bytes / 4));
  }
  std::vector<float> voxels(d.count());
  for (auto& x : voxels) {
    x = binio::get_f32(is, "VOL1 payload");
    if (!std::isfinite(x)) throw Error(Errc::non_finite, path.string() + ": non-finite voxel");
  }
  return Volume(d, std::move(voxels));
}

/// Non-overlapping block-mean downsampling by `factor` (trailing partial
/// blocks dropped), then a centered crop to `target` with the low-index side
/// taking the smaller margin when the excess is odd.
inline Volume crop_downsample(const Volume& v, std::size_t factor, Dims3 target) {
  require(factor >= 1, Errc::invalid_argument, "downsampling factor must be positive");
  const Dims3 down{v.dims().nx / factor, v.dims().ny / factor, v.dims().nz / factor};
  require(target.nx >= 1 && target.ny >= 1 && target.nz >= 1, Errc::invalid_argument, "target dims must be positive");
  require(target.nx <= down.nx && target.ny <= down.ny && target.nz <= down.nz, Errc::dimension_mismatch,
          "target " + to_string(target) + " exceeds downsampled " + to_string(down));

  const std::size_t ox = (down.nx - target.nx) / 2;
  const std::size_t oy = (down.ny - target.ny) / 2;
  const std::size_t oz = (down.nz - target.nz) / 2;
  const double inv = 1.0 / static_cast<double>(factor * factor * factor);

  std::vector<float> out(target.count());
  for (std::size_t z = 0; z < target.nz; ++z)
    for (std::size_t y = 0; y < target.ny; ++y)
      for (std::size_t x = 0; x < target.nx; ++x) {
        double sum = 0.0;
        const std::size_t bx = (x + ox) * factor, by = (y + oy) * factor, bz = (z + oz) * factor;
        for (std::size_t k = 0; k < factor; ++k)
          for (std::size_t j = 0; j < factor; ++j)
            for (std::size_t i = 0; i < factor; ++i) sum += v.at(bx + i, by + j, bz + k);
        // The mean of values in [0,255] stays in range; clamp guards the float cast.
        out[x + target.nx * (y + target.ny * z)] = std::clamp(static_cast<float>(sum * inv), 0.0f, 255.0f);
      }
  return Volume(target, std::move(out));
}

}  // namespace ddcml
