#include "pidistill/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "pidistill/error.hpp"
#include "pidistill/hash.hpp"

namespace pidistill {

namespace fs = std::filesystem;
using nlohmann::json;

void append_f32le(std::vector<std::byte>& out, double v) {
  const auto f = static_cast<float>(v);
  auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xffU));
}

double read_f32le(const std::byte* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return static_cast<double>(std::bit_cast<float>(bits));
}

std::vector<std::byte> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw LoadError("failed reading " + path.string());
  }
  return bytes;
}

void write_file_atomic(const fs::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::as_bytes(std::span(text.data(), text.size())));
}

DatasetPaths DatasetPaths::from_stem(const fs::path& stem) {
  fs::path m = stem, b = stem;
  m += ".manifest.json";
  b += ".blob";
  return {m, b};
}

bool EmbeddingDataset::text_complete(const std::vector<std::size_t>& indices) const {
  return std::all_of(indices.begin(), indices.end(), [&](std::size_t i) {
    return samples[i].text.has_value() && samples[i].text->rows() > 0;
  });
}

std::vector<std::size_t> EmbeddingDataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

std::vector<std::string> EmbeddingDataset::group_ids() const {
  std::vector<std::string> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.group_id);
  return out;
}

void EmbeddingDataset::validate() const {
  if (samples.empty()) throw DataError("empty dataset");
  if (info.n_classes < 2) throw DataError("dataset needs at least two classes");
  if (info.d_image == 0) throw DataError("image embedding width is zero");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const std::string at = "sample " + std::to_string(i) + ": ";
    if (s.label >= info.n_classes) throw DataError(at + "label " + std::to_string(s.label) + " out of range");
    if (s.group_id.empty()) throw DataError(at + "missing group_id");
    if (s.image.rows() == 0) throw DataError(at + "no image tokens");
    if (s.image.cols() != info.d_image) throw DataError(at + "image width " + std::to_string(s.image.cols()));
    if (!s.image.all_finite()) throw DataError(at + "non-finite image token value");
    if (s.text) {
      if (info.d_text == 0) throw DataError(at + "has report tokens but d_text is 0");
      if (s.text->cols() != info.d_text) throw DataError(at + "text width " + std::to_string(s.text->cols()));
      if (!s.text->all_finite()) throw DataError(at + "non-finite text token value");
    }
  }
}

namespace {

void append_matrix(std::vector<std::byte>& blob, const Matrix& m, const std::string& where) {
  constexpr double kMax = std::numeric_limits<float>::max();
  for (double v : m.values()) {
    if (!std::isfinite(v) || std::abs(v) > kMax) {
      throw DataError(where + ": value not representable as a finite float32");
    }
    append_f32le(blob, v);
  }
}

Matrix read_matrix(const std::vector<std::byte>& blob, std::size_t offset, std::size_t rows,
                   std::size_t cols, std::size_t sample, const char* stream) {
  std::vector<double> data(rows * cols);
  const std::byte* base = blob.data() + offset * 4;
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = read_f32le(base + 4 * i);
    if (!std::isfinite(data[i])) {
      throw LoadError("sample " + std::to_string(sample) + ": non-finite " + stream + " value");
    }
  }
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.values().begin());
  return m;
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw LoadError(where + "missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw LoadError(where + "bad field '" + key + "': " + e.what());
  }
}

}  // namespace

EncodedDataset encode_dataset(const EmbeddingDataset& dataset, const std::string& blob_file_name) {
  dataset.validate();
  EncodedDataset enc;
  json records = json::array();
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const Sample& s = dataset.samples[i];
    const std::string where = "sample " + std::to_string(i);
    json r;
    const std::size_t start = enc.blob.size();
    r["image_offset"] = enc.blob.size() / 4;
    r["image_n_tokens"] = s.image.rows();
    append_matrix(enc.blob, s.image, where);
    if (s.text) {
      r["text_offset"] = enc.blob.size() / 4;
      r["text_n_tokens"] = s.text->rows();
      append_matrix(enc.blob, *s.text, where);
    } else {
      r["text_n_tokens"] = 0;
    }
    r["checksum_fnv1a64"] = to_hex(fnv1a(std::span(enc.blob).subspan(start)));
    r["label"] = s.label;
    r["group_id"] = s.group_id;
    records.push_back(std::move(r));
  }
  json& m = enc.manifest;
  m["format"] = kDatasetFormatName;
  m["format_version"] = kDatasetFormatVersion;
  m["n_samples"] = dataset.samples.size();
  m["n_classes"] = dataset.info.n_classes;
  m["d_image"] = dataset.info.d_image;
  m["d_text"] = dataset.info.d_text;
  m["image_has_cls"] = dataset.info.image_has_cls;
  m["text_has_cls"] = dataset.info.text_has_cls;
  m["blob_file"] = blob_file_name;
  m["blob_floats"] = enc.blob.size() / 4;
  m["checksum_fnv1a64"] = to_hex(fnv1a(enc.blob));
  m["provenance"] = dataset.info.provenance;
  m["records"] = std::move(records);
  return enc;
}

void write_dataset(const EmbeddingDataset& dataset, const DatasetPaths& paths) {
  const EncodedDataset enc = encode_dataset(dataset, paths.blob.filename().string());
  write_file_atomic(paths.blob, enc.blob);
  write_text_atomic(paths.manifest, enc.manifest.dump(1) + "\n");
}

EmbeddingDataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw LoadError("cannot open " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  const auto blob_file = field<std::string>(m, "blob_file", "manifest: ");
  return load_dataset(manifest_path, manifest_path.parent_path() / blob_file);
}

EmbeddingDataset load_dataset(const fs::path& manifest_path, const fs::path& blob_path) {
  std::ifstream in(manifest_path);
  if (!in) throw LoadError("cannot open " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  const std::string top = "manifest: ";
  if (field<std::string>(m, "format", top) != kDatasetFormatName) throw LoadError("manifest: unknown format");
  const int version = field<int>(m, "format_version", top);
  if (version != kDatasetFormatVersion) {
    throw LoadError("manifest: format_version " + std::to_string(version) + " not supported (expected " +
                    std::to_string(kDatasetFormatVersion) + ")");
  }
  EmbeddingDataset ds;
  const auto n = field<std::size_t>(m, "n_samples", top);
  ds.info.n_classes = field<std::size_t>(m, "n_classes", top);
  ds.info.d_image = field<std::size_t>(m, "d_image", top);
  ds.info.d_text = field<std::size_t>(m, "d_text", top);
  ds.info.image_has_cls = field<bool>(m, "image_has_cls", top);
  ds.info.text_has_cls = field<bool>(m, "text_has_cls", top);
  if (m.contains("provenance")) ds.info.provenance = m["provenance"];
  const auto blob_floats = field<std::size_t>(m, "blob_floats", top);
  const auto& records = m.at("records");
  if (!records.is_array()) throw LoadError("manifest: records is not an array");
  if (n == 0 || records.empty()) throw LoadError("empty dataset");
  if (records.size() != n) {
    throw LoadError("manifest: n_samples " + std::to_string(n) + " but " + std::to_string(records.size()) +
                    " records");
  }

  const std::vector<std::byte> blob = read_file_bytes(blob_path);
  if (blob.size() != blob_floats * 4) {
    throw LoadError("blob has " + std::to_string(blob.size()) + " bytes, manifest expects " +
                    std::to_string(blob_floats * 4));
  }
  const auto checksum = from_hex(field<std::string>(m, "checksum_fnv1a64", top));

  struct Extent {
    std::size_t begin, end, sample;
  };
  std::vector<Extent> extents;
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const json& r = records[i];
    const std::string where = "sample " + std::to_string(i) + ": ";
    Sample s;
    s.label = field<std::size_t>(r, "label", where);
    s.group_id = field<std::string>(r, "group_id", where);
    if (s.label >= ds.info.n_classes) throw LoadError(where + "label out of range");
    if (s.group_id.empty()) throw LoadError(where + "empty group_id");
    const auto img_off = field<std::size_t>(r, "image_offset", where);
    const auto img_n = field<std::size_t>(r, "image_n_tokens", where);
    if (img_n == 0) throw LoadError(where + "no image tokens");
    const std::size_t img_len = img_n * ds.info.d_image;
    if (img_off > blob_floats || img_len > blob_floats - img_off) {
      throw LoadError(where + "image tokens outside blob bounds");
    }
    extents.push_back({img_off, img_off + img_len, i});
    s.image = read_matrix(blob, img_off, img_n, ds.info.d_image, i, "image");

    const auto txt_n = r.contains("text_n_tokens") ? field<std::size_t>(r, "text_n_tokens", where) : 0;
    const bool has_offset = r.contains("text_offset") && !r["text_offset"].is_null();
    if (ds.info.d_text == 0 && (has_offset || txt_n > 0)) {
      throw LoadError(where + "text tokens present but d_text is 0");
    }
    if (txt_n > 0) {
      if (!has_offset) throw LoadError(where + "text_n_tokens without text_offset");
      const auto txt_off = field<std::size_t>(r, "text_offset", where);
      const std::size_t txt_len = txt_n * ds.info.d_text;
      if (txt_off > blob_floats || txt_len > blob_floats - txt_off) {
        throw LoadError(where + "text tokens outside blob bounds");
      }
      extents.push_back({txt_off, txt_off + txt_len, i});
      s.text = read_matrix(blob, txt_off, txt_n, ds.info.d_text, i, "text");
    }
    if (r.contains("checksum_fnv1a64")) {
      Fnv1a h;
      h.update(std::span(blob).subspan(img_off * 4, img_len * 4));
      if (s.text) h.update(std::span(blob).subspan(field<std::size_t>(r, "text_offset", where) * 4, s.text->size() * 4));
      if (h.digest() != from_hex(field<std::string>(r, "checksum_fnv1a64", where))) {
        throw LoadError(where + "token checksum mismatch (corrupt blob)");
      }
    }
    ds.samples.push_back(std::move(s));
  }
  std::sort(extents.begin(), extents.end(), [](const Extent& a, const Extent& b) { return a.begin < b.begin; });
  for (std::size_t i = 1; i < extents.size(); ++i) {
    if (extents[i].begin < extents[i - 1].end) {
      throw LoadError("sample " + std::to_string(extents[i].sample) + ": token blob overlaps sample " +
                      std::to_string(extents[i - 1].sample));
    }
  }
  if (fnv1a(blob) != checksum) throw LoadError("blob checksum mismatch");
  try {
    ds.validate();
  } catch (const DataError& e) {
    throw LoadError(e.what());
  }
  return ds;
}

}  // namespace pidistill
