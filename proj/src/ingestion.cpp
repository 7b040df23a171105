#include "automac/ingestion.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "automac/errors.hpp"
#include "automac/image_io.hpp"
#include "automac/rng.hpp"

namespace fs = std::filesystem;

namespace automac {

namespace {

constexpr const char* kHeader = "image_path,contrast,orientation,grade,provenance";

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string stem_of(const std::string& rel_path) {
  return fs::path(rel_path).stem().string();
}

}  // namespace

Manifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest: " + path);

  Manifest manifest;
  manifest.root = fs::path(path).parent_path().string();
  if (manifest.root.empty()) manifest.root = ".";

  std::string line;
  if (!std::getline(is, line)) throw DataError("empty manifest: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) {
    throw DataError("manifest header must be '" + std::string(kHeader) + "', got '" + line + "'");
  }

  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_row(line);
    if (fields.size() != 5) {
      throw DataError("manifest row " + std::to_string(row) + ": expected 5 fields, got " +
                      std::to_string(fields.size()));
    }
    ManifestEntry entry;
    entry.image_path = fields[0];
    if (entry.image_path.empty()) {
      throw DataError("manifest row " + std::to_string(row) + ": empty image path");
    }
    try {
      entry.contrast = contrast_from_name(fields[1]);
      entry.orientation = orientation_from_name(fields[2]);
      if (!fields[3].empty()) entry.grade = grade_from_name(fields[3]);
      entry.provenance = provenance_from_name(fields[4]);
    } catch (const ValidationError& e) {
      throw DataError("manifest row " + std::to_string(row) + ": " + e.what());
    }
    const fs::path full = fs::path(manifest.root) / entry.image_path;
    if (!fs::exists(full)) {
      throw DataError("manifest row " + std::to_string(row) + ": missing image file " + full.string());
    }
    manifest.entries.push_back(std::move(entry));
  }
  if (manifest.entries.empty()) throw DataError("empty manifest: " + path);
  return manifest;
}

void save_manifest(const std::string& path, const Manifest& manifest) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << kHeader << "\n";
  for (const auto& e : manifest.entries) {
    os << e.image_path << ',' << contrast_name(e.contrast) << ',' << orientation_name(e.orientation)
       << ',' << (e.grade ? grade_name(*e.grade) : std::string()) << ','
       << provenance_name(e.provenance) << "\n";
  }
  if (!os) throw DataError("write failed: " + path);
}

SliceRecord load_slice(const Manifest& manifest, const ManifestEntry& entry) {
  SliceRecord record;
  record.id = stem_of(entry.image_path);
  record.pixels = read_image((fs::path(manifest.root) / entry.image_path).string());
  record.contrast = entry.contrast;
  record.orientation = entry.orientation;
  record.grade = entry.grade;
  record.provenance = entry.provenance;
  validate(record);
  return record;
}

std::vector<SliceRecord> load_all_slices(const Manifest& manifest) {
  std::vector<SliceRecord> records;
  records.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) records.push_back(load_slice(manifest, e));
  return records;
}

PreprocessedImage preprocess_image(const ImageF& img, const std::string& source_id) {
  const ImageF resized = resize_bilinear(img, kInputSize, kInputSize);

  double sum = 0.0;
  for (float v : resized.px) sum += v;
  const double n = static_cast<double>(resized.px.size());
  const double mean = sum / n;
  double var = 0.0;
  for (float v : resized.px) {
    const double d = v - mean;
    var += d * d;
  }
  const double std_dev = std::sqrt(var / n);

  PreprocessedImage out;
  out.source_id = source_id;
  out.tensor.resize(3 * static_cast<std::size_t>(kInputSize) * kInputSize, 0.0f);
  if (std_dev == 0.0) {
    out.constant_input = true;  // zero-filled tensor, flagged not failed
    return out;
  }
  const std::size_t plane = static_cast<std::size_t>(kInputSize) * kInputSize;
  for (std::size_t i = 0; i < plane; ++i) {
    const float v = static_cast<float>((resized.px[i] - mean) / std_dev);
    out.tensor[i] = v;
    out.tensor[plane + i] = v;
    out.tensor[2 * plane + i] = v;
  }
  return out;
}

PreprocessedImage preprocess(const SliceRecord& record) {
  validate(record);
  return preprocess_image(record.pixels, record.id);
}

void validate_split_spec(const SplitSpec& spec) {
  if (spec.train <= 0.0 || spec.val <= 0.0 || spec.test <= 0.0) {
    throw ValidationError("split ratios must all be positive");
  }
  if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }
}

SplitResult stratified_split(const std::vector<ManifestEntry>& entries, const SplitSpec& spec) {
  validate_split_spec(spec);

  using StratumKey = std::tuple<int, int, int>;
  std::map<StratumKey, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (!e.grade) {
      throw DataError("record '" + e.image_path + "' has no grade; stratified split requires one");
    }
    strata[{static_cast<int>(e.contrast), static_cast<int>(e.orientation),
            static_cast<int>(*e.grade)}]
        .push_back(i);
  }

  const std::array<double, 3> ratios = {spec.train, spec.val, spec.test};
  SplitResult result;
  std::size_t stratum_index = 0;
  for (auto& [key, members] : strata) {
    const std::size_t n = members.size();
    std::array<std::size_t, 3> counts = {0, 0, 0};
    if (n < 3) {
      // Tiny stratum: one member per split, splits taken in ratio-descending order.
      std::array<int, 3> by_ratio = {0, 1, 2};
      std::sort(by_ratio.begin(), by_ratio.end(), [&](int a, int b) {
        if (ratios[a] != ratios[b]) return ratios[a] > ratios[b];
        return a < b;
      });
      for (std::size_t i = 0; i < n; ++i) counts[static_cast<std::size_t>(by_ratio[i])] = 1;
    } else {
      // Largest-remainder apportionment of this stratum across the three splits.
      std::array<double, 3> remainders;
      std::size_t assigned = 0;
      for (int s = 0; s < 3; ++s) {
        const double quota = ratios[s] * static_cast<double>(n);
        counts[s] = static_cast<std::size_t>(std::floor(quota));
        remainders[s] = quota - std::floor(quota);
        assigned += counts[s];
      }
      std::array<int, 3> order = {0, 1, 2};
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (remainders[a] != remainders[b]) return remainders[a] > remainders[b];
        if (ratios[a] != ratios[b]) return ratios[a] > ratios[b];
        return a < b;
      });
      for (std::size_t leftover = n - assigned, i = 0; i < leftover; ++i) {
        counts[static_cast<std::size_t>(order[i % 3])]++;
      }
    }

    Rng rng = Rng::derive(spec.seed, {hash_tag("stratified_split"), stratum_index});
    rng.shuffle(members);
    ++stratum_index;

    std::size_t cursor = 0;
    for (std::size_t i = 0; i < counts[0]; ++i) result.train.push_back(members[cursor++]);
    for (std::size_t i = 0; i < counts[1]; ++i) result.val.push_back(members[cursor++]);
    for (std::size_t i = 0; i < counts[2]; ++i) result.test.push_back(members[cursor++]);
  }

  std::sort(result.train.begin(), result.train.end());
  std::sort(result.val.begin(), result.val.end());
  std::sort(result.test.begin(), result.test.end());
  return result;
}

}  // namespace automac
