#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "ddcml/binary_io.hpp"
#include "ddcml/cae.hpp"
#include "ddcml/error.hpp"

namespace ddcml {

struct IndexEntry {
  std::string case_id;
  int class_label = 0;
  Embedding embedding;
  friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

/// Exact nearest-neighbour index over embeddings.
class EmbeddingIndex {
 public:
  explicit EmbeddingIndex(std::size_t dim = 0) : dim_(dim) {}

  void add(IndexEntry e) {
    if (entries_.empty() && dim_ == 0) dim_ = e.embedding.size();
    require(e.embedding.size() == dim_, Errc::dimension_mismatch,
            "embedding of length " + std::to_string(e.embedding.size()) + " in an index of dimension " +
                std::to_string(dim_));
    require(!e.case_id.empty(), Errc::invalid_argument, "case_id must be nonempty");
    for (double v : e.embedding.values) require(std::isfinite(v), Errc::non_finite, "embedding is not finite");
    require(ids_.insert(e.case_id).second, Errc::duplicate_entry, "case_id '" + e.case_id + "' already indexed");
    entries_.push_back(std::move(e));
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<IndexEntry>& entries() const { return entries_; }

  friend bool operator==(const EmbeddingIndex& a, const EmbeddingIndex& b) {
    return a.dim_ == b.dim_ && a.entries_ == b.entries_;
  }

 private:
  std::size_t dim_;
  std::vector<IndexEntry> entries_;
  std::set<std::string> ids_;
};

struct Neighbor {
  std::string case_id;
  int class_label = 0;
  double distance = 0.0;
};

/// Top-min(k, N) entries by Euclidean distance; ties broken by case_id.
inline std::vector<Neighbor> query(const EmbeddingIndex& index, const Embedding& z, std::size_t k) {
  require(k >= 1, Errc::invalid_argument, "k must be at least 1");
  if (index.empty()) return {};
  require(z.size() == index.dim(), Errc::dimension_mismatch,
          "query of length " + std::to_string(z.size()) + " against index of dimension " + std::to_string(index.dim()));
  std::vector<Neighbor> all;
  all.reserve(index.size());
  for (const auto& e : index.entries()) {
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double d = z.values[i] - e.embedding.values[i];
      s += d * d;
    }
    all.push_back({e.case_id, e.class_label, std::sqrt(s)});
  }
  const std::size_t n = std::min(k, all.size());
  auto before = [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.case_id < b.case_id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), before);
  all.resize(n);
  return all;
}

/// Majority label among neighbours; returns -1 on a tie.
inline int majority_label(const std::vector<Neighbor>& neighbors) {
  std::vector<int> votes;
  for (const auto& n : neighbors) {
    if (n.class_label >= static_cast<int>(votes.size())) votes.resize(static_cast<std::size_t>(n.class_label) + 1, 0);
    ++votes[static_cast<std::size_t>(n.class_label)];
  }
  int best = -1, best_votes = 0;
  bool tie = false;
  for (std::size_t l = 0; l < votes.size(); ++l) {
    if (votes[l] > best_votes) {
      best = static_cast<int>(l);
      best_votes = votes[l];
      tie = false;
    } else if (votes[l] == best_votes && best_votes > 0) {
      tie = true;
    }
  }
  return tie ? -1 : best;
}

/// A preprocessed volume to be indexed.
struct IndexCase {
  std::string case_id;
  int class_label = 0;
  Volume volume;
};

/// Encodes every case with `model`, in order.
template <class T>
EmbeddingIndex build_index(const std::vector<IndexCase>& cases, const Model<T>& model) {
  EmbeddingIndex index(model.spec().embedding_dim());
  for (const auto& c : cases) index.add({c.case_id, c.class_label, model.encode(c.volume)});
  return index;
}

// DDIX file: "DDIX", u32 dimension, u32 entry count, then per entry the
// length-prefixed case_id, u32 label and the embedding as f64, little-endian.
inline constexpr char kIndexMagic[5] = "DDIX";

inline void save_index(const EmbeddingIndex& index, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot open for writing: " + path.string());
  binio::put_magic(os, kIndexMagic);
  binio::put_u32(os, static_cast<std::uint32_t>(index.dim()));
  binio::put_u32(os, static_cast<std::uint32_t>(index.size()));
  for (const auto& e : index.entries()) {
    binio::put_string(os, e.case_id);
    binio::put_u32(os, static_cast<std::uint32_t>(e.class_label));
    for (double v : e.embedding.values) binio::put_f64(os, v);
  }
  os.flush();
  if (!os) throw Error(Errc::io, "write failed: " + path.string());
}

inline EmbeddingIndex load_index(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io, "cannot open index: " + path.string());
  binio::expect_magic(is, kIndexMagic, path.string());
  const auto dim = binio::get_u32(is, "DDIX header");
  const auto count = binio::get_u32(is, "DDIX header");
  EmbeddingIndex index(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    IndexEntry e;
    e.case_id = binio::get_string(is, "DDIX case_id", 4096);
    e.class_label = static_cast<int>(binio::get_u32(is, "DDIX label"));
    e.embedding.values.resize(dim);
    for (auto& v : e.embedding.values) v = binio::get_f64(is, "DDIX embedding");
    index.add(std::move(e));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw Error(Errc::corrupt, path.string() + ": trailing bytes");
  return index;
}

}  // namespace ddcml
