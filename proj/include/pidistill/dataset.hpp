#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pidistill/matrix.hpp"

namespace pidistill {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr const char* kDatasetFormatName = "pidistill-embeddings";

/// One (V(x), T(z), y) triplet. Text is absent when the sample has no report.
struct Sample {
  Matrix image;               // n_tokens x d_image
  std::optional<Matrix> text; // n_tokens x d_text
  std::size_t label = 0;
  std::string group_id;
};

struct DatasetInfo {
  std::size_t n_classes = 2;
  std::size_t d_image = 0;
  std::size_t d_text = 0;  // 0 when reports are absent
  bool image_has_cls = false;
  bool text_has_cls = false;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Frozen-encoder token embeddings with labels and subject groups. Immutable
/// once validated; share read-only across runs.
struct EmbeddingDataset {
  DatasetInfo info;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool has_text() const { return info.d_text > 0; }
  /// Every listed sample carries report tokens.
  bool text_complete(const std::vector<std::size_t>& indices) const;
  std::vector<std::size_t> labels() const;
  std::vector<std::string> group_ids() const;

  /// Shapes, label range, finiteness; throws DataError naming the sample.
  void validate() const;
};

struct DatasetPaths {
  std::filesystem::path manifest;
  std::filesystem::path blob;

  /// "<stem>.manifest.json" and "<stem>.blob" next to each other.
  static DatasetPaths from_stem(const std::filesystem::path& stem);
};

/// Reads the manifest (UTF-8 JSON) and the little-endian float32 blob,
/// widening to 64-bit. Validates version, counts, offsets, checksum and
/// finiteness; throws LoadError with the offending sample index.
EmbeddingDataset load_dataset(const std::filesystem::path& manifest, const std::filesystem::path& blob);
/// Resolves the blob from the manifest's `blob_file` entry.
EmbeddingDataset load_dataset(const std::filesystem::path& manifest);

/// Canonical layout: per sample, image tokens then text tokens, row-major.
/// Refuses non-finite values or values outside float range. Files are
/// written to a temporary name and renamed into place.
void write_dataset(const EmbeddingDataset& dataset, const DatasetPaths& paths);

/// Serialized blob bytes and manifest JSON for a dataset (no I/O).
struct EncodedDataset {
  std::vector<std::byte> blob;
  nlohmann::json manifest;
};
EncodedDataset encode_dataset(const EmbeddingDataset& dataset, const std::string& blob_file_name);

// Little-endian float32 helpers shared with the checkpoint container.
void append_f32le(std::vector<std::byte>& out, double v);
double read_f32le(const std::byte* p);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
/// Writes to "<path>.tmp" then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace pidistill
