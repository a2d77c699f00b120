#include "pidistill/synthgen.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Dense>

#include "pidistill/error.hpp"
#include "pidistill/hash.hpp"
#include "pidistill/log.hpp"
#include "pidistill/metrics.hpp"
#include "pidistill/rng.hpp"

namespace pidistill {

using nlohmann::json;

std::string to_string(Regime r) { return r == Regime::diagnostic ? "diagnostic" : "prognostic"; }

Regime parse_regime(std::string_view s) {
  if (s == "diagnostic") return Regime::diagnostic;
  if (s == "prognostic") return Regime::prognostic;
  throw ConfigError("unknown regime '" + std::string(s) + "'");
}

std::string to_string(OracleView v) {
  switch (v) {
    case OracleView::image: return "image";
    case OracleView::text: return "text";
    case OracleView::latent: return "latent";
  }
  return "unknown";
}

OracleView parse_oracle_view(std::string_view s) {
  if (s == "image") return OracleView::image;
  if (s == "text") return OracleView::text;
  if (s == "latent") return OracleView::latent;
  throw ConfigError("unknown oracle view '" + std::string(s) + "'");
}

ScmConfig ScmConfig::normalized() const {
  if (latent_dim == 0 || n_samples == 0 || d_image == 0 || d_text == 0 || image_tokens == 0 || text_tokens == 0) {
    throw ConfigError("SCM dimensions and counts must be at least 1");
  }
  if (classes < 2) throw ConfigError("SCM needs at least two classes");
  if (samples_per_group == 0) throw ConfigError("samples_per_group must be at least 1");
  if (!(image_noise >= 0.0) || !(text_noise >= 0.0)) throw ConfigError("noise levels must be non-negative");
  if (!(image_signal >= 0.0) || !(text_signal >= 0.0)) throw ConfigError("signal gains must be non-negative");
  if (!(label_noise >= 0.0 && label_noise <= 0.5)) throw ConfigError("label noise must lie in [0, 0.5]");
  ScmConfig c = *this;
  if (c.regime == Regime::diagnostic && c.label_noise != 0.0) {
    log_warning("diagnostic regime: label noise forced to 0");
    c.label_noise = 0.0;
  }
  return c;
}

json ScmConfig::to_json() const {
  return json{{"regime", to_string(regime)},     {"latent_dim", latent_dim},
              {"n_samples", n_samples},          {"d_image", d_image},
              {"d_text", d_text},                {"image_tokens", image_tokens},
              {"text_tokens", text_tokens},      {"image_signal", image_signal},
              {"text_signal", text_signal},      {"image_noise", image_noise},
              {"text_noise", text_noise},        {"label_noise", label_noise},
              {"classes", classes},              {"samples_per_group", samples_per_group},
              {"image_cls", image_cls},          {"seed", seed}};
}

ScmConfig ScmConfig::from_json(const json& j) {
  ScmConfig c;
  c.regime = parse_regime(j.value("regime", std::string("prognostic")));
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.n_samples = j.value("n_samples", c.n_samples);
  c.d_image = j.value("d_image", c.d_image);
  c.d_text = j.value("d_text", c.d_text);
  c.image_tokens = j.value("image_tokens", c.image_tokens);
  c.text_tokens = j.value("text_tokens", c.text_tokens);
  c.image_signal = j.value("image_signal", c.image_signal);
  c.text_signal = j.value("text_signal", c.text_signal);
  c.image_noise = j.value("image_noise", c.image_noise);
  c.text_noise = j.value("text_noise", c.text_noise);
  c.label_noise = j.value("label_noise", c.label_noise);
  c.classes = j.value("classes", c.classes);
  c.samples_per_group = j.value("samples_per_group", c.samples_per_group);
  c.image_cls = j.value("image_cls", c.image_cls);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string ScmConfig::fingerprint() const {
  Fnv1a h;
  h.update(to_json().dump());
  return to_hex(h.digest());
}

namespace {

json matrix_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()},
              {"data", std::vector<double>(m.values().begin(), m.values().end())}};
}

Matrix matrix_from_json(const json& j) {
  return Matrix::from_values(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                             j.at("data").get<std::vector<double>>());
}

Matrix random_map(std::size_t rows, std::size_t k, double gain, Rng& rng) {
  Matrix m(rows, k);
  const double s = gain / std::sqrt(static_cast<double>(k));
  for (double& v : m.values()) v = rng.normal() * s;
  return m;
}

/// Token matrix (maps.size() x d) = per-token map * state + noise.
Matrix project_tokens(const std::vector<Matrix>& maps, std::span<const double> state, double noise, Rng& rng) {
  const std::size_t d = maps.front().rows();
  Matrix tokens(maps.size(), d);
  for (std::size_t t = 0; t < maps.size(); ++t) {
    for (std::size_t r = 0; r < d; ++r) {
      double v = 0.0;
      for (std::size_t c = 0; c < state.size(); ++c) v += maps[t](r, c) * state[c];
      tokens(t, r) = v + noise * rng.normal();
    }
  }
  return tokens;
}

std::vector<double> mean_token(const Matrix& tokens) {
  std::vector<double> out(tokens.cols(), 0.0);
  for (std::size_t t = 0; t < tokens.rows(); ++t)
    for (std::size_t c = 0; c < tokens.cols(); ++c) out[c] += tokens(t, c);
  for (double& v : out) v /= static_cast<double>(tokens.rows());
  return out;
}

/// Class scores from label weights (classes x width, or 1 x width for two
/// classes, where the class-0 score is the negation).
std::vector<double> class_scores(const Matrix& weights, std::span<const double> features, std::size_t classes) {
  std::vector<double> raw(weights.rows(), 0.0);
  for (std::size_t r = 0; r < weights.rows(); ++r)
    for (std::size_t c = 0; c < weights.cols(); ++c) raw[r] += weights(r, c) * features[c];
  if (classes == 2) return {-raw[0], raw[0]};
  return raw;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

json ScmGroundTruth::to_json() const {
  json j;
  j["format"] = "pidistill-scm-truth";
  j["config"] = config.to_json();
  j["fingerprint"] = fingerprint;
  j["image_maps"] = json::array();
  for (const auto& m : image_maps) j["image_maps"].push_back(matrix_json(m));
  j["text_maps"] = json::array();
  for (const auto& m : text_maps) j["text_maps"].push_back(matrix_json(m));
  j["label_weights"] = matrix_json(label_weights);
  j["latents"] = matrix_json(latents);
  return j;
}

ScmGroundTruth ScmGroundTruth::from_json(const json& j) {
  ScmGroundTruth t;
  t.config = ScmConfig::from_json(j.at("config"));
  t.fingerprint = j.at("fingerprint").get<std::string>();
  for (const auto& m : j.at("image_maps")) t.image_maps.push_back(matrix_from_json(m));
  for (const auto& m : j.at("text_maps")) t.text_maps.push_back(matrix_from_json(m));
  t.label_weights = matrix_from_json(j.at("label_weights"));
  t.latents = matrix_from_json(j.at("latents"));
  return t;
}

GeneratedData generate(const ScmConfig& raw_config) {
  const ScmConfig cfg = raw_config.normalized();
  const std::size_t k = cfg.latent_dim;
  GeneratedData out;
  ScmGroundTruth& truth = out.truth;
  truth.config = cfg;
  truth.fingerprint = cfg.fingerprint();

  Rng proj = Rng::stream(cfg.seed, "scm.projection");
  const std::size_t n_image_maps = cfg.image_tokens + (cfg.image_cls ? 1 : 0);
  for (std::size_t t = 0; t < n_image_maps; ++t) truth.image_maps.push_back(random_map(cfg.d_image, k, cfg.image_signal, proj));
  for (std::size_t t = 0; t < cfg.text_tokens; ++t) truth.text_maps.push_back(random_map(cfg.d_text, k, cfg.text_signal, proj));
  const std::size_t label_rows = cfg.classes == 2 ? 1 : cfg.classes;
  const std::size_t label_cols = cfg.regime == Regime::prognostic ? k : cfg.d_text;
  truth.label_weights = Matrix(label_rows, label_cols);
  for (double& v : truth.label_weights.values()) v = proj.normal();

  Rng latent_rng = Rng::stream(cfg.seed, "scm.latent");
  Rng image_rng = Rng::stream(cfg.seed, "scm.image_noise");
  Rng text_rng = Rng::stream(cfg.seed, "scm.text_noise");
  Rng label_rng = Rng::stream(cfg.seed, "scm.label_noise");

  EmbeddingDataset& ds = out.dataset;
  ds.info.n_classes = cfg.classes;
  ds.info.d_image = cfg.d_image;
  ds.info.d_text = cfg.d_text;
  ds.info.image_has_cls = cfg.image_cls;
  ds.info.text_has_cls = false;
  ds.info.provenance = json{{"generator", "scm"}, {"scm_fingerprint", truth.fingerprint}, {"config", cfg.to_json()}};
  truth.latents = Matrix(cfg.n_samples, k);
  ds.samples.reserve(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    auto state = truth.latents.row(i);
    for (double& v : state) v = latent_rng.normal();
    Sample s;
    s.image = project_tokens(truth.image_maps, state, cfg.image_noise, image_rng);
    s.text = project_tokens(truth.text_maps, state, cfg.text_noise, text_rng);
    if (cfg.regime == Regime::diagnostic) {
      // Z causes Y: label read off the realized report tokens.
      s.label = argmax(class_scores(truth.label_weights, mean_token(*s.text), cfg.classes));
    } else {
      s.label = argmax(class_scores(truth.label_weights, state, cfg.classes));
    }
    const double flip = label_rng.uniform();
    if (flip < cfg.label_noise) {
      s.label = cfg.classes == 2 ? 1 - s.label : (s.label + 1 + label_rng.below(cfg.classes - 1)) % cfg.classes;
    }
    s.group_id = "g" + std::to_string(i / cfg.samples_per_group);
    ds.samples.push_back(std::move(s));
  }
  return out;
}

void save_ground_truth(const ScmGroundTruth& truth, const std::filesystem::path& path) {
  write_text_atomic(path, truth.to_json().dump() + "\n");
}

ScmGroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open ground truth " + path.string());
  try {
    return ScmGroundTruth::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw LoadError("malformed ground truth file: " + std::string(e.what()));
  }
}

namespace {

/// k x (T*d) map from flattened tokens to E[S | tokens] under S ~ N(0, I)
/// and isotropic noise: (A^T A + sigma^2 I)^{-1} A^T.
Eigen::MatrixXd posterior_map(const std::vector<Matrix>& maps, double noise) {
  const std::size_t d = maps.front().rows(), k = maps.front().cols();
  Eigen::MatrixXd a(static_cast<Eigen::Index>(maps.size() * d), static_cast<Eigen::Index>(k));
  for (std::size_t t = 0; t < maps.size(); ++t)
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < k; ++c)
        a(static_cast<Eigen::Index>(t * d + r), static_cast<Eigen::Index>(c)) = maps[t](r, c);
  Eigen::MatrixXd gram = a.transpose() * a;
  gram.diagonal().array() += noise * noise + 1e-12;
  return gram.ldlt().solve(a.transpose());
}

std::vector<double> posterior_mean(const Eigen::MatrixXd& map, const Matrix& tokens) {
  const Eigen::Map<const Eigen::VectorXd> flat(tokens.values().data(), static_cast<Eigen::Index>(tokens.size()));
  const Eigen::VectorXd m = map * flat;
  return {m.data(), m.data() + m.size()};
}

}  // namespace

Matrix oracle_scores(const ScmGroundTruth& truth, const EmbeddingDataset& data, OracleView view) {
  const auto& prov = data.info.provenance;
  if (!prov.contains("scm_fingerprint") || prov["scm_fingerprint"].get<std::string>() != truth.fingerprint) {
    throw DataError("ground truth does not match the dataset's provenance");
  }
  if (truth.latents.rows() != data.size()) throw DataError("ground truth sample count does not match dataset");
  const ScmConfig& cfg = truth.config;
  const std::size_t classes = cfg.classes;
  const bool diagnostic = cfg.regime == Regime::diagnostic;

  // Mean text map, for diagnostic functionals expressed in latent space.
  Matrix mean_text_map(cfg.d_text, cfg.latent_dim);
  for (const auto& m : truth.text_maps)
    for (std::size_t i = 0; i < m.size(); ++i) mean_text_map[i] += m[i] / static_cast<double>(truth.text_maps.size());
  const auto latent_scores = [&](std::span<const double> state) {
    if (!diagnostic) return class_scores(truth.label_weights, state, classes);
    std::vector<double> zbar(cfg.d_text, 0.0);
    for (std::size_t r = 0; r < cfg.d_text; ++r)
      for (std::size_t c = 0; c < cfg.latent_dim; ++c) zbar[r] += mean_text_map(r, c) * state[c];
    return class_scores(truth.label_weights, zbar, classes);
  };

  Eigen::MatrixXd post;
  if (view == OracleView::image) post = posterior_map(truth.image_maps, cfg.image_noise);
  if (view == OracleView::text && !diagnostic) post = posterior_map(truth.text_maps, cfg.text_noise);

  Matrix scores(data.size(), classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sample& s = data.samples[i];
    std::vector<double> sc;
    switch (view) {
      case OracleView::latent:
        sc = latent_scores(truth.latents.row(i));
        break;
      case OracleView::image:
        sc = latent_scores(posterior_mean(post, s.image));
        break;
      case OracleView::text:
        if (!s.text) throw DataError("sample " + std::to_string(i) + " has no report tokens");
        sc = diagnostic ? class_scores(truth.label_weights, mean_token(*s.text), classes)
                        : latent_scores(posterior_mean(post, *s.text));
        break;
    }
    std::copy(sc.begin(), sc.end(), scores.row(i).begin());
  }
  return scores;
}

double oracle_auc(const ScmGroundTruth& truth, const EmbeddingDataset& data, OracleView view) {
  const Matrix scores = oracle_scores(truth, data, view);
  const std::size_t classes = scores.cols();
  if (classes == 2) {
    std::vector<double> s(scores.rows());
    std::vector<bool> pos(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
      s[i] = scores(i, 1);
      pos[i] = data.samples[i].label == 1;
    }
    return auc_binary(s, pos);
  }
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> margin(scores.rows());
    std::vector<bool> pos(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
      double best_other = -INFINITY;
      for (std::size_t o = 0; o < classes; ++o)
        if (o != c) best_other = std::max(best_other, scores(i, o));
      margin[i] = scores(i, c) - best_other;
      pos[i] = data.samples[i].label == c;
    }
    try {
      total += auc_binary(margin, pos);
      ++used;
    } catch (const UndefinedMetricError&) {
      log_warning("oracle AUC: class " + std::to_string(c) + " skipped");
    }
  }
  if (used == 0) throw UndefinedMetricError("oracle AUC undefined");
  return total / static_cast<double>(used);
}

}  // namespace pidistill
