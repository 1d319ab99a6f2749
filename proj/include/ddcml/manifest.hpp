#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ddcml/error.hpp"

namespace ddcml {

struct CaseRecord {
  std::string subject_id;
  int class_label = 0;
  std::filesystem::path volume_path;

  friend bool operator==(const CaseRecord&, const CaseRecord&) = default;
};

inline constexpr std::string_view kManifestHeader = "subject_id,class_label,path";

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline void chomp(std::string& s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
}
}  // namespace detail

/// Parses a manifest CSV. Relative volume paths are resolved against the
/// manifest's directory.
inline std::vector<CaseRecord> load_manifest(const std::filesystem::path& path, int class_count = 5) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::io, "cannot open manifest: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw Error(Errc::malformed_row, path.string() + ": missing header");
  detail::chomp(line);
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (line != kManifestHeader)
    throw Error(Errc::malformed_row, path.string() + ": header must be '" + std::string(kManifestHeader) + "'");

  const auto base = path.parent_path();
  std::vector<CaseRecord> records;
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    detail::chomp(line);
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    auto fields = detail::split_csv_line(line);
    if (fields.size() != 3) throw Error(Errc::malformed_row, where + ": expected 3 fields");
    if (fields[0].empty()) throw Error(Errc::malformed_row, where + ": empty subject_id");
    if (fields[2].empty()) throw Error(Errc::malformed_row, where + ": empty path");

    int label = -1;
    const auto& lf = fields[1];
    auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (ec != std::errc() || ptr != lf.data() + lf.size())
      throw Error(Errc::malformed_row, where + ": class_label '" + lf + "' is not an integer");
    if (label < 0 || label >= class_count)
      throw Error(Errc::unknown_label, where + ": class_label " + lf + " outside 0.." + std::to_string(class_count - 1));

    if (!seen.emplace(fields[0], fields[2]).second)
      throw Error(Errc::duplicate_entry, where + ": duplicate (" + fields[0] + ", " + fields[2] + ")");

    std::filesystem::path vp(fields[2]);
    if (vp.is_relative()) vp = base / vp;
    records.push_back({std::move(fields[0]), label, std::move(vp)});
  }
  return records;
}

/// Writes records with paths relative to the manifest directory when possible.
inline void write_manifest(const std::filesystem::path& path, const std::vector<CaseRecord>& records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot write manifest: " + path.string());
  os << kManifestHeader << '\n';
  const auto base = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  for (const auto& r : records) {
    std::filesystem::path p = r.volume_path;
    if (p.is_absolute() || !base.empty()) {
      std::error_code ec;
      auto rel = std::filesystem::relative(p, base, ec);
      if (!ec && !rel.empty() && rel.native().rfind("..", 0) != 0) p = rel;
    }
    os << r.subject_id << ',' << r.class_label << ',' << p.generic_string() << '\n';
  }
  if (!os) throw Error(Errc::io, "write failed: " + path.string());
}

inline std::vector<std::size_t> class_tallies(const std::vector<CaseRecord>& records, int class_count) {
  std::vector<std::size_t> n(static_cast<std::size_t>(class_count), 0);
  for (const auto& r : records) ++n.at(static_cast<std::size_t>(r.class_label));
  return n;
}

}  // namespace ddcml
