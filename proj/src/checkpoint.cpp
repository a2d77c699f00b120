#include "pidistill/checkpoint.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pidistill/dataset.hpp"
#include "pidistill/error.hpp"
#include "pidistill/hash.hpp"

namespace pidistill {

namespace fs = std::filesystem;
using nlohmann::json;

Checkpoint Checkpoint::from_model(Model model, std::string method, std::size_t epoch, double val_auc,
                                  std::string fingerprint) {
  for (Matrix* p : model.parameters()) {
    for (double& v : p->values()) v = static_cast<double>(static_cast<float>(v));
  }
  return Checkpoint{std::move(model), std::move(method), epoch, val_auc, std::move(fingerprint)};
}

namespace {

json architecture(const Model& m) {
  json a;
  const HeadOptions& o = m.is_teacher() ? m.teacher().options : m.student().options;
  a["dropout_p"] = o.dropout_p;
  a["scale_logits"] = o.scale_logits;
  a["normalize_inputs"] = o.normalize_inputs;
  a["classes"] = m.classes();
  if (m.is_teacher()) {
    a["type"] = "teacher";
    a["d_image"] = m.teacher().visual.width();
    a["d_text"] = m.teacher().text.width();
  } else {
    a["type"] = "student";
    a["variant"] = to_string(m.student().variant);
    a["d_image"] = m.student().width();
  }
  return a;
}

Model skeleton(const json& a) {
  HeadOptions o;
  o.dropout_p = a.at("dropout_p").get<double>();
  o.scale_logits = a.at("scale_logits").get<bool>();
  o.normalize_inputs = a.at("normalize_inputs").get<bool>();
  const auto classes = a.at("classes").get<std::size_t>();
  const auto d_image = a.at("d_image").get<std::size_t>();
  Rng rng;  // values are overwritten from the blob
  if (a.at("type").get<std::string>() == "teacher") {
    return Model(TeacherClassifier::init(d_image, a.at("d_text").get<std::size_t>(), classes, o, rng));
  }
  const HeadVariant v = parse_head_variant(a.at("variant").get<std::string>());
  return Model(StudentClassifier::init(d_image, classes, v, o, true, rng));
}

fs::path stem_of(const fs::path& p) {
  const std::string s = p.string();
  const std::string suffix = ".manifest.json";
  if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return fs::path(s.substr(0, s.size() - suffix.size()));
  }
  return p;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& stem) {
  const DatasetPaths paths = DatasetPaths::from_stem(stem);
  std::vector<std::byte> blob;
  json params = json::array();
  const auto names = ckpt.model.parameter_names();
  const auto values = ckpt.model.parameters();
  for (std::size_t k = 0; k < values.size(); ++k) {
    json p;
    p["name"] = names[k];
    p["rows"] = values[k]->rows();
    p["cols"] = values[k]->cols();
    p["offset"] = blob.size() / 4;
    for (double v : values[k]->values()) {
      if (!std::isfinite(v)) throw DataError("checkpoint parameter " + names[k] + " is not finite");
      append_f32le(blob, v);
    }
    params.push_back(std::move(p));
  }
  json m;
  m["format"] = "pidistill-checkpoint";
  m["format_version"] = kCheckpointFormatVersion;
  m["method"] = ckpt.method;
  m["epoch"] = ckpt.epoch;
  m["val_auc"] = std::isfinite(ckpt.val_auc) ? json(ckpt.val_auc) : json(nullptr);
  m["config_fingerprint"] = ckpt.config_fingerprint;
  m["architecture"] = architecture(ckpt.model);
  m["blob_file"] = paths.blob.filename().string();
  m["blob_floats"] = blob.size() / 4;
  m["checksum_fnv1a64"] = to_hex(fnv1a(blob));
  m["parameters"] = std::move(params);
  write_file_atomic(paths.blob, blob);
  write_text_atomic(paths.manifest, m.dump(1) + "\n");
}

Checkpoint load_checkpoint(const fs::path& path) {
  const DatasetPaths paths = DatasetPaths::from_stem(stem_of(path));
  std::ifstream in(paths.manifest);
  if (!in) throw LoadError("cannot open checkpoint " + paths.manifest.string());
  try {
    const json m = json::parse(in);
    if (m.at("format").get<std::string>() != "pidistill-checkpoint") throw LoadError("not a checkpoint manifest");
    if (m.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw LoadError("unsupported checkpoint format_version");
    }
    const auto blob = read_file_bytes(paths.manifest.parent_path() / m.at("blob_file").get<std::string>());
    if (blob.size() != 4 * m.at("blob_floats").get<std::size_t>()) throw LoadError("checkpoint blob size mismatch");
    if (fnv1a(blob) != from_hex(m.at("checksum_fnv1a64").get<std::string>())) {
      throw LoadError("checkpoint checksum mismatch");
    }
    Model model = skeleton(m.at("architecture"));
    const auto names = model.parameter_names();
    auto targets = model.parameters();
    const auto& params = m.at("parameters");
    if (params.size() != targets.size()) throw LoadError("checkpoint parameter count mismatch");
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const json& p = params[k];
      if (p.at("name").get<std::string>() != names[k]) throw LoadError("unexpected parameter " + p.at("name").dump());
      const auto rows = p.at("rows").get<std::size_t>();
      const auto cols = p.at("cols").get<std::size_t>();
      const auto offset = p.at("offset").get<std::size_t>();
      if (rows != targets[k]->rows() || cols != targets[k]->cols()) {
        throw LoadError("parameter " + names[k] + " has shape " + std::to_string(rows) + "x" + std::to_string(cols));
      }
      if ((offset + rows * cols) * 4 > blob.size()) throw LoadError("parameter " + names[k] + " outside blob");
      for (std::size_t i = 0; i < rows * cols; ++i) {
        const double v = read_f32le(blob.data() + 4 * (offset + i));
        if (!std::isfinite(v)) throw LoadError("parameter " + names[k] + " is not finite");
        (*targets[k])[i] = v;
      }
    }
    return Checkpoint{std::move(model), m.at("method").get<std::string>(), m.at("epoch").get<std::size_t>(),
                      m.at("val_auc").is_null() ? std::nan("") : m.at("val_auc").get<double>(), m.at("config_fingerprint").get<std::string>()};
  } catch (const json::exception& e) {
    throw LoadError("malformed checkpoint manifest: " + std::string(e.what()));
  }
}

}  // namespace pidistill
