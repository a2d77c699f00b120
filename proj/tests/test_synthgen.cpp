#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "pidistill/error.hpp"
#include "pidistill/synthgen.hpp"
#include "test_util.hpp"

using namespace pidistill;

namespace {

ScmConfig prognostic(std::size_t n, double sx, double sz, double eta, std::uint64_t seed) {
  ScmConfig c;
  c.regime = Regime::prognostic;
  c.n_samples = n;
  c.image_noise = sx;
  c.text_noise = sz;
  c.label_noise = eta;
  c.seed = seed;
  return c;
}

// Standard error of an AUC near 0.5..0.9 with n/2 samples per class; a
// conservative bound of sqrt(1/(3n)) for balanced classes.
double auc_se(std::size_t n) { return std::sqrt(1.0 / (3.0 * static_cast<double>(n))); }

}  // namespace

TEST(Synthgen, ConfigValidation) {
  ScmConfig c;
  c.latent_dim = 0;
  EXPECT_THROW(generate(c), ConfigError);
  c = ScmConfig{};
  c.label_noise = 0.6;
  EXPECT_THROW(generate(c), ConfigError);
  c = ScmConfig{};
  c.regime = Regime::diagnostic;
  c.label_noise = 0.3;
  EXPECT_EQ(c.normalized().label_noise, 0.0);
  EXPECT_THROW(parse_regime("causal"), ConfigError);
}

TEST(Synthgen, ShapesAndValidation) {
  ScmConfig c;
  c.n_samples = 30;
  c.samples_per_group = 3;
  c.image_cls = true;
  const auto g = generate(c);
  ASSERT_EQ(g.dataset.size(), 30u);
  EXPECT_NO_THROW(g.dataset.validate());
  EXPECT_TRUE(g.dataset.info.image_has_cls);
  EXPECT_EQ(g.dataset.samples[0].image.rows(), c.image_tokens + 1);
  EXPECT_EQ(g.dataset.samples[0].text->rows(), c.text_tokens);
  EXPECT_EQ(g.dataset.samples[0].group_id, g.dataset.samples[2].group_id);
  EXPECT_NE(g.dataset.samples[2].group_id, g.dataset.samples[3].group_id);
  EXPECT_EQ(g.truth.latents.rows(), 30u);
  EXPECT_FALSE(g.dataset.info.provenance.dump().find("latents") != std::string::npos);
}

TEST(Synthgen, SeedDeterministicFiles) {
  const auto dir = test::scratch_dir("synth_det");
  ScmConfig c;
  c.n_samples = 50;
  c.seed = 17;
  write_dataset(generate(c).dataset, DatasetPaths::from_stem(dir / "a"));
  write_dataset(generate(c).dataset, DatasetPaths::from_stem(dir / "b"));
  const auto a = read_file_bytes(dir / "a.blob"), b = read_file_bytes(dir / "b.blob");
  EXPECT_EQ(a, b);
  c.seed = 18;
  write_dataset(generate(c).dataset, DatasetPaths::from_stem(dir / "c"));
  EXPECT_NE(read_file_bytes(dir / "c.blob"), a);
  EXPECT_NO_THROW(load_dataset(dir / "a.manifest.json"));
}

TEST(Synthgen, GroundTruthRoundTrip) {
  const auto dir = test::scratch_dir("synth_truth");
  ScmConfig c;
  c.n_samples = 40;
  const auto g = generate(c);
  save_ground_truth(g.truth, dir / "t.json");
  const auto back = load_ground_truth(dir / "t.json");
  EXPECT_EQ(back.fingerprint, g.truth.fingerprint);
  EXPECT_EQ(oracle_auc(back, g.dataset, OracleView::image), oracle_auc(g.truth, g.dataset, OracleView::image));
}

TEST(Synthgen, MismatchedTruthRejected) {
  ScmConfig c;
  c.n_samples = 40;
  const auto a = generate(c);
  c.seed = 1;
  const auto b = generate(c);
  EXPECT_THROW(oracle_auc(a.truth, b.dataset, OracleView::latent), DataError);
}

TEST(Synthgen, DiagnosticTextOracleIsExact) {
  for (double sz : {0.0, 0.5, 2.0}) {
    ScmConfig c;
    c.regime = Regime::diagnostic;
    c.n_samples = 500;
    c.text_noise = sz;
    const auto g = generate(c);
    EXPECT_EQ(oracle_auc(g.truth, g.dataset, OracleView::text), 1.0) << sz;
  }
  ScmConfig five;
  five.regime = Regime::diagnostic;
  five.classes = 5;
  five.n_samples = 500;
  const auto g = generate(five);
  EXPECT_EQ(oracle_auc(g.truth, g.dataset, OracleView::text), 1.0);
}

TEST(Synthgen, PureNoiseLabels) {
  const auto g = generate(prognostic(20000, 1.0, 0.5, 0.5, 3));
  for (auto v : {OracleView::image, OracleView::text, OracleView::latent}) {
    EXPECT_NEAR(oracle_auc(g.truth, g.dataset, v), 0.5, 3 * auc_se(20000));
  }
}

TEST(Synthgen, LatentOracleEqualsOneMinusEta) {
  // Y = 1[w.S > 0] flipped at rate eta; pairs split by side of the threshold
  // give AUC = (1 - eta)^2 + eta (1 - eta) = 1 - eta.
  for (double eta : {0.0, 0.1, 0.15, 0.3}) {
    const auto g = generate(prognostic(20000, 1.0, 0.5, eta, 5));
    EXPECT_NEAR(oracle_auc(g.truth, g.dataset, OracleView::latent), 1.0 - eta, 3 * auc_se(20000)) << eta;
  }
  const auto exact = generate(prognostic(2000, 1.0, 0.5, 0.0, 6));
  EXPECT_EQ(oracle_auc(exact.truth, exact.dataset, OracleView::latent), 1.0);
}

TEST(Synthgen, HugeImageNoiseIsChance) {
  const auto g = generate(prognostic(20000, 100.0, 0.5, 0.0, 7));
  const double auc = oracle_auc(g.truth, g.dataset, OracleView::image);
  EXPECT_GE(auc, 0.45);
  EXPECT_LE(auc, 0.55);
}

TEST(Synthgen, TextOracleNonIncreasingInNoise) {
  double prev = 1.0;
  for (double sz : {0.25, 1.0, 4.0}) {
    const auto g = generate(prognostic(20000, 1.0, sz, 0.1, 8));
    const double auc = oracle_auc(g.truth, g.dataset, OracleView::text);
    EXPECT_LE(auc, prev + 3 * auc_se(20000)) << sz;
    prev = auc;
  }
}

TEST(Synthgen, DataProcessingOrdering) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto g = generate(prognostic(20000, 2.0, 0.5, 0.1, seed));
    const double latent = oracle_auc(g.truth, g.dataset, OracleView::latent);
    EXPECT_LE(oracle_auc(g.truth, g.dataset, OracleView::image), latent + 3 * auc_se(20000));
    EXPECT_LE(oracle_auc(g.truth, g.dataset, OracleView::text), latent + 3 * auc_se(20000));
  }
}

// Reference Bayes AUCs for k=8, sigma_x=1, sigma_z=0.5, eta=0.15, estimated
// on 1e5 samples (seed 11).
TEST(Synthgen, ReferenceOracleAucs) {
  const auto g = generate(prognostic(100000, 1.0, 0.5, 0.15, 11));
  EXPECT_NEAR(oracle_auc(g.truth, g.dataset, OracleView::image), 0.8329509281083509, 1e-12);
  EXPECT_NEAR(oracle_auc(g.truth, g.dataset, OracleView::text), 0.842283463370606, 1e-12);
  EXPECT_NEAR(oracle_auc(g.truth, g.dataset, OracleView::latent), 0.8471621168596349, 1e-12);
  // An independent draw agrees within Monte-Carlo error.
  const auto h = generate(prognostic(100000, 1.0, 0.5, 0.15, 12));
  EXPECT_NEAR(oracle_auc(h.truth, h.dataset, OracleView::latent), 0.85, 3 * auc_se(100000));
}
