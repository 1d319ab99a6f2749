#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "ddcml/binary_io.hpp"
#include "ddcml/cae.hpp"

// DDCK checkpoint: "DDCK", the network spec as u32 fields, then the parameter
// count and each parameter as (name, rank, dims..., f64 values), little-endian.
namespace ddcml {

inline constexpr char kCheckpointMagic[5] = "DDCK";

inline void write_spec(std::ostream& os, const NetworkSpec& s) {
  binio::put_u32(os, static_cast<std::uint32_t>(s.input_dims.nx));
  binio::put_u32(os, static_cast<std::uint32_t>(s.input_dims.ny));
  binio::put_u32(os, static_cast<std::uint32_t>(s.input_dims.nz));
  for (auto c : s.block_channels) binio::put_u32(os, static_cast<std::uint32_t>(c));
  for (auto m : s.convs_per_block) binio::put_u32(os, static_cast<std::uint32_t>(m));
  binio::put_u32(os, static_cast<std::uint32_t>(s.kernel));
  binio::put_u32(os, static_cast<std::uint32_t>(s.bottleneck_channels));
  binio::put_u32(os, static_cast<std::uint32_t>(s.bypass_sites.size()));
  for (const auto& site : s.bypass_sites) {
    binio::put_u32(os, static_cast<std::uint32_t>(site.from_block));
    binio::put_u32(os, static_cast<std::uint32_t>(site.to_block));
  }
}

inline NetworkSpec read_spec(std::istream& is) {
  const char* what = "DDCK spec";
  NetworkSpec s;
  s.input_dims.nx = binio::get_u32(is, what);
  s.input_dims.ny = binio::get_u32(is, what);
  s.input_dims.nz = binio::get_u32(is, what);
  for (auto& c : s.block_channels) c = binio::get_u32(is, what);
  for (auto& m : s.convs_per_block) m = binio::get_u32(is, what);
  s.kernel = binio::get_u32(is, what);
  s.bottleneck_channels = binio::get_u32(is, what);
  const auto n = binio::get_u32(is, what);
  if (n > kEncoderBlocks) throw Error(Errc::corrupt, "DDCK: implausible bypass count");
  s.bypass_sites.resize(n);
  for (auto& site : s.bypass_sites) {
    site.from_block = binio::get_u32(is, what);
    site.to_block = binio::get_u32(is, what);
  }
  try {
    validate(s);
  } catch (const Error& e) {
    throw Error(Errc::corrupt, std::string("DDCK: corrupt spec (") + e.what() + ")");
  }
  return s;
}

template <class T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot open for writing: " + path.string());
  binio::put_magic(os, kCheckpointMagic);
  write_spec(os, model.spec());
  binio::put_u32(os, static_cast<std::uint32_t>(model.params().size()));
  for (const auto& [name, t] : model.params()) {
    binio::put_string(os, name);
    binio::put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) binio::put_u32(os, static_cast<std::uint32_t>(d));
    for (T v : t.data()) binio::put_f64(os, static_cast<double>(v));
  }
  os.flush();
  if (!os) throw Error(Errc::io, "write failed: " + path.string());
}

/// Loads a checkpoint. When `expected` is given, a file written for a
/// different spec is rejected with Errc::spec_mismatch; structural damage
/// yields Errc::truncated (short file) or Errc::corrupt.
template <class T>
Model<T> load_checkpoint(const std::filesystem::path& path, const std::optional<NetworkSpec>& expected = std::nullopt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io, "cannot open: " + path.string());
  binio::expect_magic(is, kCheckpointMagic, path.string());
  const NetworkSpec spec = read_spec(is);
  if (expected && !(*expected == spec))
    throw Error(Errc::spec_mismatch, path.string() + ": checkpoint was written for a different network spec");

  auto model = Model<T>::build(spec, 0);
  const auto count = binio::get_u32(is, "DDCK parameter count");
  if (count != model.params().size())
    throw Error(Errc::corrupt, path.string() + ": parameter count does not match its spec");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = binio::get_string(is, "DDCK parameter name", 256);
    if (!model.params().contains(name)) throw Error(Errc::corrupt, path.string() + ": unknown parameter " + name);
    auto& t = model.params().get(name);
    const auto rank = binio::get_u32(is, "DDCK rank");
    if (rank != t.rank()) throw Error(Errc::corrupt, path.string() + ": rank mismatch for " + name);
    for (std::size_t d = 0; d < rank; ++d)
      if (binio::get_u32(is, "DDCK dims") != t.dim(d))
        throw Error(Errc::corrupt, path.string() + ": shape mismatch for " + name);
    for (auto& v : t.mutable_data()) {
      const double x = binio::get_f64(is, "DDCK values");
      if (!std::isfinite(x)) throw Error(Errc::non_finite, path.string() + ": non-finite value in " + name);
      v = static_cast<T>(x);
    }
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw Error(Errc::corrupt, path.string() + ": trailing bytes after parameters");
  return model;
}

}  // namespace ddcml
