#include <algorithm>
#include <sstream>

#include <gtest/gtest.h>

#include "pidistill/checkpoint.hpp"
#include "pidistill/error.hpp"
#include "pidistill/split.hpp"
#include "pidistill/synthgen.hpp"
#include "pidistill/trainer.hpp"
#include "test_util.hpp"

using namespace pidistill;

namespace {

EmbeddingDataset small_synth(Regime regime, std::size_t n = 120, std::uint64_t seed = 1) {
  ScmConfig c;
  c.regime = regime;
  c.n_samples = n;
  c.d_image = 8;
  c.d_text = 8;
  c.image_tokens = 4;
  c.text_tokens = 4;
  c.seed = seed;
  return generate(c).dataset;
}

TrainConfig config_for(Method m, std::size_t epochs, std::uint64_t seed = 0) {
  TrainConfig c;
  c.method = m;
  c.epochs = epochs;
  c.seed = seed;
  c.batch_size = 32;
  c.run_id = to_string(m);
  return c;
}

std::vector<double> logged(const TrainResult& r, const std::string& split, const std::string& metric) {
  std::vector<double> out;
  for (const auto& e : r.log)
    if (e.split == split && e.metric == metric) out.push_back(e.value);
  return out;
}

std::string log_text(const TrainResult& r) {
  std::ostringstream os;
  write_metric_log(os, "x", r.log);
  return os.str();
}

}  // namespace

TEST(Trainer, MethodNames) {
  for (auto m : {Method::image_only, Method::teacher, Method::pi_distill, Method::self_distill}) {
    EXPECT_EQ(parse_method(to_string(m)), m);
  }
  EXPECT_THROW(parse_method("distill"), ConfigError);
  EXPECT_TRUE(needs_teacher(Method::pi_distill));
  EXPECT_FALSE(needs_teacher(Method::teacher));
}

TEST(Trainer, ConfigValidation) {
  TrainConfig c;
  EXPECT_EQ(c.effective_learning_rate(), 1e-4);
  c.head = HeadVariant::mean_lp;
  EXPECT_EQ(c.effective_learning_rate(), 1e-3);
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.tau = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.dropout_p = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NE(TrainConfig{}.fingerprint(), c.fingerprint());
}

TEST(Trainer, EpochBatches) {
  std::vector<std::size_t> idx(64);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  EXPECT_EQ(epoch_batches(idx, 1, 1, 64).size(), 1u);
  idx.resize(100);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto b = epoch_batches(idx, 1, 1, 64);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0].size(), 64u);
  EXPECT_EQ(b[1].size(), 36u);
  for (std::size_t epoch = 1; epoch < 5; ++epoch) {
    std::vector<std::size_t> all;
    for (const auto& batch : epoch_batches(idx, 3, epoch, 64)) all.insert(all.end(), batch.begin(), batch.end());
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, idx);
  }
  EXPECT_NE(epoch_batches(idx, 3, 1, 64), epoch_batches(idx, 3, 2, 64));
}

TEST(Trainer, ZeroEpochsReturnsInitialization) {
  const auto ds = small_synth(Regime::prognostic);
  const auto split = make_split(ds, 0, 1.0);
  const auto cfg = config_for(Method::teacher, 0);
  const auto r = train(ds, split, cfg);
  EXPECT_EQ(r.best_epoch, 0u);
  EXPECT_EQ(r.steps, 0u);
  EXPECT_EQ(logged(r, "validation", "auc").size(), 1u);
  EXPECT_EQ(r.best.val_auc, r.best_val_auc);
  const auto init = Checkpoint::from_model(initial_model(ds, cfg), "teacher", 0, 0.0, "");
  const auto a = r.best.model.parameters(), b = init.model.parameters();
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(*a[k], *b[k]);
}

TEST(Trainer, CheckpointHoldsBestLoggedAuc) {
  const auto ds = small_synth(Regime::prognostic);
  const auto split = make_split(ds, 2, 1.0, SplitOptions{0.3, true});
  for (auto m : {Method::image_only, Method::teacher}) {
    const auto r = train(ds, split, config_for(m, 15, 2));
    const auto aucs = logged(r, "validation", "auc");
    ASSERT_EQ(aucs.size(), 16u);
    EXPECT_EQ(r.best.val_auc, *std::max_element(aucs.begin(), aucs.end()));
    EXPECT_EQ(r.best.val_auc, aucs[r.best_epoch]);
    EXPECT_EQ(r.best.epoch, r.best_epoch);
  }
}

TEST(Trainer, TeacherLearnsDiagnosticLabels) {
  const auto ds = small_synth(Regime::diagnostic, 2000, 3);
  const auto split = make_split(ds, 0, 1.0, SplitOptions{0.25, true});
  auto cfg = config_for(Method::teacher, 100);
  cfg.batch_size = 64;
  const auto r = train(ds, split, cfg);
  EXPECT_GE(r.best_val_auc, 0.95);
}

TEST(Trainer, LambdaZeroMatchesImageOnly) {
  const auto ds = small_synth(Regime::prognostic);
  const auto split = make_split(ds, 4, 1.0);
  const auto teacher = train(ds, split, config_for(Method::teacher, 3, 4)).best;
  const auto base = train(ds, split, config_for(Method::image_only, 6, 4));
  auto cfg = config_for(Method::pi_distill, 6, 4);
  cfg.lambda = 0.0;
  const auto distilled = train(ds, split, cfg, &teacher);
  EXPECT_EQ(logged(distilled, "validation", "auc"), logged(base, "validation", "auc"));
  EXPECT_EQ(logged(distilled, "train", "loss"), logged(base, "train", "loss"));
  EXPECT_NEAR(distilled.last_val_auc, base.last_val_auc, 1e-9);
}

TEST(Trainer, DistillationChangesTrajectory) {
  const auto ds = small_synth(Regime::prognostic);
  const auto split = make_split(ds, 4, 1.0);
  const auto teacher = train(ds, split, config_for(Method::teacher, 3, 4)).best;
  const auto base = train(ds, split, config_for(Method::image_only, 3, 4));
  const auto distilled = train(ds, split, config_for(Method::pi_distill, 3, 4), &teacher);
  EXPECT_NE(logged(distilled, "train", "loss"), logged(base, "train", "loss"));
}

TEST(Trainer, TeacherUntouchedByStudentTraining) {
  const auto ds = small_synth(Regime::prognostic);
  const auto split = make_split(ds, 5, 1.0);
  const auto teacher = train(ds, split, config_for(Method::teacher, 2, 5)).best;
  const Checkpoint copy = teacher;
  train(ds, split, config_for(Method::pi_distill, 3, 5), &teacher);
  const auto a = teacher.model.parameters(), b = copy.model.parameters();
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(*a[k], *b[k]);
}

TEST(Trainer, RunsAreDeterministic) {
  const auto ds = small_synth(Regime::prognostic);
  const auto split = make_split(ds, 6, 0.5);
  auto cfg = config_for(Method::image_only, 4, 6);
  cfg.eval_train = true;
  EXPECT_EQ(log_text(train(ds, split, cfg)), log_text(train(ds, split, cfg)));
}

TEST(Trainer, SelfDistillUsesImageOnlyTeacher) {
  const auto ds = small_synth(Regime::prognostic);
  const auto split = make_split(ds, 7, 1.0);
  const auto image_teacher = train(ds, split, config_for(Method::image_only, 2, 7)).best;
  const auto teacher = train(ds, split, config_for(Method::teacher, 2, 7)).best;
  EXPECT_NO_THROW(train(ds, split, config_for(Method::self_distill, 1, 7), &image_teacher));
  EXPECT_THROW(train(ds, split, config_for(Method::self_distill, 1, 7), &teacher), ConfigError);
  EXPECT_THROW(train(ds, split, config_for(Method::pi_distill, 1, 7), &image_teacher), ConfigError);
  EXPECT_THROW(train(ds, split, config_for(Method::pi_distill, 1, 7), nullptr), ConfigError);
}

TEST(Trainer, MissingReportsRejected) {
  auto ds = small_synth(Regime::prognostic);
  const auto split = make_split(ds, 8, 1.0);
  const auto teacher = train(ds, split, config_for(Method::teacher, 1, 8)).best;
  ds.samples[split.train.front()].text.reset();
  EXPECT_THROW(train(ds, split, config_for(Method::teacher, 1, 8)), DataError);
  EXPECT_THROW(train(ds, split, config_for(Method::pi_distill, 1, 8), &teacher), DataError);
  EXPECT_NO_THROW(train(ds, split, config_for(Method::image_only, 1, 8)));
}

TEST(Trainer, NonFiniteLossNamesBatch) {
  const auto ds = small_synth(Regime::prognostic);
  const auto split = make_split(ds, 9, 1.0);
  auto cfg = config_for(Method::image_only, 5, 9);
  cfg.head = HeadVariant::mean_lp;
  cfg.learning_rate = 1e308;
  try {
    train(ds, split, cfg);
    FAIL() << "expected a training error";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos) << e.what();
  }
}

TEST(Trainer, LinearProbesTrain) {
  ScmConfig c;
  c.n_samples = 200;
  c.image_cls = true;
  c.image_noise = 0.5;
  const auto ds = generate(c).dataset;
  const auto split = make_split(ds, 0, 1.0, SplitOptions{0.25, true});
  for (auto head : {HeadVariant::mean_lp, HeadVariant::cls_lp}) {
    auto cfg = config_for(Method::image_only, 100);
    cfg.head = head;
    const auto r = train(ds, split, cfg);
    EXPECT_GT(r.best_val_auc, 0.8) << to_string(head);
  }
}

TEST(Trainer, MulticlassSelection) {
  ScmConfig c;
  c.regime = Regime::diagnostic;
  c.classes = 5;
  c.n_samples = 150;
  const auto ds = generate(c).dataset;
  const auto split = make_split(ds, 0, 1.0, SplitOptions{0.3, true});
  for (auto avg : {Averaging::micro, Averaging::ovr}) {
    auto cfg = config_for(Method::teacher, 3);
    cfg.selection_averaging = avg;
    const auto r = train(ds, split, cfg);
    EXPECT_TRUE(std::isfinite(r.best_val_auc));
  }
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = test::scratch_dir("ckpt");
  const auto ds = small_synth(Regime::prognostic);
  const auto split = make_split(ds, 1, 1.0);
  for (auto m : {Method::teacher, Method::image_only}) {
    const auto r = train(ds, split, config_for(m, 2, 1));
    save_checkpoint(r.best, dir / to_string(m));
    const auto back = load_checkpoint(dir / (to_string(m) + ".manifest.json"));
    EXPECT_EQ(back.method, r.best.method);
    EXPECT_EQ(back.epoch, r.best.epoch);
    EXPECT_EQ(back.val_auc, r.best.val_auc);
    EXPECT_EQ(back.config_fingerprint, r.best.config_fingerprint);
    const auto a = back.model.parameters(), b = r.best.model.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(*a[k], *b[k]);
    const auto ea = evaluate(back.model, ds, split.validation, Averaging::micro);
    const auto eb = evaluate(r.best.model, ds, split.validation, Averaging::micro);
    EXPECT_EQ(ea.auc, eb.auc);
  }
}

TEST(Checkpoint, CorruptionDetected) {
  const auto dir = test::scratch_dir("ckpt_bad");
  const auto ds = small_synth(Regime::prognostic);
  const auto r = train(ds, make_split(ds, 1, 1.0), config_for(Method::image_only, 1, 1));
  save_checkpoint(r.best, dir / "c");
  auto bytes = read_file_bytes(dir / "c.blob");
  bytes[5] ^= std::byte{0x10};
  write_file_atomic(dir / "c.blob", bytes);
  EXPECT_THROW(load_checkpoint(dir / "c"), LoadError);
  EXPECT_THROW(load_checkpoint(dir / "missing"), LoadError);
}
