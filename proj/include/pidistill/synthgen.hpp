#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pidistill/dataset.hpp"
#include "pidistill/matrix.hpp"

namespace pidistill {

/// diagnostic: the report determines the label (S -> Z -> Y).
/// prognostic: the latent state determines a noisy label; image and report
/// are both noisy views of the state (S -> X, S -> Z, S -> Y).
enum class Regime { diagnostic, prognostic };

std::string to_string(Regime r);
Regime parse_regime(std::string_view s);

struct ScmConfig {
  Regime regime = Regime::prognostic;
  std::size_t latent_dim = 8;
  std::size_t n_samples = 1000;
  std::size_t d_image = 16;
  std::size_t d_text = 16;
  std::size_t image_tokens = 8;
  std::size_t text_tokens = 8;
  /// Gain of the S -> token projections.
  double image_signal = 1.0;
  double text_signal = 1.0;
  double image_noise = 1.0;  // sigma_x
  double text_noise = 0.5;   // sigma_z
  double label_noise = 0.0;  // eta, prognostic only
  std::size_t classes = 2;
  /// Consecutive samples sharing one group_id (several views of a subject).
  std::size_t samples_per_group = 1;
  /// Prepend a CLS-position token (an extra projection of S) to image tokens.
  bool image_cls = false;
  std::uint64_t seed = 0;

  /// Throws ConfigError; returns a copy with eta forced to 0 in the
  /// diagnostic regime.
  ScmConfig normalized() const;
  nlohmann::json to_json() const;
  static ScmConfig from_json(const nlohmann::json& j);
  std::string fingerprint() const;
};

/// Generating parameters and latent states. Kept out of the dataset files.
struct ScmGroundTruth {
  ScmConfig config;
  std::string fingerprint;
  std::vector<Matrix> image_maps;  // per image token: d_image x k
  std::vector<Matrix> text_maps;   // per text token: d_text x k
  /// prognostic: classes x k functionals of S (row 0 only when C == 2).
  /// diagnostic: classes x d_text functionals of the mean text token.
  Matrix label_weights;
  Matrix latents;  // n x k

  nlohmann::json to_json() const;
  static ScmGroundTruth from_json(const nlohmann::json& j);
};

struct GeneratedData {
  EmbeddingDataset dataset;
  ScmGroundTruth truth;
};

GeneratedData generate(const ScmConfig& config);

void save_ground_truth(const ScmGroundTruth& truth, const std::filesystem::path& path);
ScmGroundTruth load_ground_truth(const std::filesystem::path& path);

enum class OracleView { image, text, latent };
std::string to_string(OracleView v);
OracleView parse_oracle_view(std::string_view s);

/// Per-sample, per-class scores of the true generating functional restricted
/// to one view (posterior mean of S given that view for the linear-Gaussian
/// projections). n x classes.
Matrix oracle_scores(const ScmGroundTruth& truth, const EmbeddingDataset& data, OracleView view);

/// AUC of the oracle scores: binary on class 1 for C == 2, otherwise the
/// one-vs-rest mean over per-class margins. Throws DataError when the
/// dataset was not produced by this ground truth.
double oracle_auc(const ScmGroundTruth& truth, const EmbeddingDataset& data, OracleView view);

}  // namespace pidistill
