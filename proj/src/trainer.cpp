#include "pidistill/trainer.hpp"

#include <cmath>
#include <charconv>
#include <sstream>

#include "pidistill/adam.hpp"
#include "pidistill/error.hpp"
#include "pidistill/hash.hpp"
#include "pidistill/kernels.hpp"
#include "pidistill/log.hpp"
#include "pidistill/losses.hpp"
#include "pidistill/tape.hpp"

namespace pidistill {

std::string to_string(Method m) {
  switch (m) {
    case Method::image_only: return "image_only";
    case Method::teacher: return "teacher";
    case Method::pi_distill: return "pi_distill";
    case Method::self_distill: return "self_distill";
  }
  return "unknown";
}

Method parse_method(std::string_view s) {
  if (s == "image_only") return Method::image_only;
  if (s == "teacher") return Method::teacher;
  if (s == "pi_distill") return Method::pi_distill;
  if (s == "self_distill") return Method::self_distill;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

bool needs_teacher(Method m) { return m == Method::pi_distill || m == Method::self_distill; }

double TrainConfig::effective_learning_rate() const {
  if (learning_rate) return *learning_rate;
  return head == HeadVariant::attention ? kAttentionLearningRate : kLinearProbeLearningRate;
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(effective_learning_rate() > 0.0)) throw ConfigError("learning rate must be positive");
  if (method == Method::teacher && head != HeadVariant::attention) {
    throw ConfigError("the multimodal teacher uses attention heads only");
  }
}

std::string TrainConfig::fingerprint() const {
  std::ostringstream s;
  s << to_string(method) << '|' << format_double(lambda) << '|' << format_double(tau) << '|'
    << format_double(effective_learning_rate()) << '|' << batch_size << '|' << epochs << '|' << seed << '|'
    << to_string(head) << '|' << format_double(dropout_p) << '|' << scale_logits << '|'
    << to_string(selection_averaging);
  Fnv1a h;
  h.update(s.str());
  return to_hex(h.digest());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

BatchTokens gather(const EmbeddingDataset& data, const std::vector<std::size_t>& indices, bool with_text) {
  BatchTokens b;
  b.image.reserve(indices.size());
  for (std::size_t i : indices) {
    const Sample& s = data.samples[i];
    b.image.push_back(&s.image);
    if (with_text) {
      if (!s.text) throw DataError("sample " + std::to_string(i) + " has no report tokens");
      b.text.push_back(&*s.text);
    }
  }
  return b;
}

HeadOptions head_options(const TrainConfig& c) {
  HeadOptions o;
  o.dropout_p = c.dropout_p;
  o.scale_logits = c.scale_logits;
  return o;
}

std::vector<std::size_t> all_indices(const SplitPlan& split) {
  std::vector<std::size_t> out = split.train;
  out.insert(out.end(), split.validation.begin(), split.validation.end());
  return out;
}

}  // namespace

ScoredSet predict(const Model& model, const EmbeddingDataset& data, const std::vector<std::size_t>& indices) {
  constexpr std::size_t kChunk = 256;
  ScoredSet s;
  s.scores = Matrix(indices.size(), model.classes());
  s.labels.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const std::size_t end = std::min(indices.size(), start + kChunk);
    const std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                         indices.begin() + static_cast<std::ptrdiff_t>(end));
    const Matrix probs = kernels::softmax_rows(model.predict_logits(gather(data, chunk, model.uses_text())), 1.0);
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      std::copy(probs.row(r).begin(), probs.row(r).end(), s.scores.row(start + r).begin());
    }
  }
  for (std::size_t i : indices) s.labels.push_back(data.samples[i].label);
  return s;
}

EvalMetrics evaluate(const Model& model, const EmbeddingDataset& data, const std::vector<std::size_t>& indices,
                     Averaging averaging) {
  const ScoredSet s = predict(model, data, indices);
  EvalMetrics m;
  try {
    m.auc = auc_multiclass(s, averaging).value;
  } catch (const UndefinedMetricError& e) {
    log_warning(std::string("validation AUC undefined: ") + e.what());
    m.auc = std::nan("");
  }
  try {
    m.auprc = auprc(s, Averaging::micro).value;
  } catch (const UndefinedMetricError& e) {
    log_warning(std::string("validation AUPRC undefined: ") + e.what());
    m.auprc = std::nan("");
  }
  return m;
}

Model initial_model(const EmbeddingDataset& data, const TrainConfig& config) {
  const HeadOptions opts = head_options(config);
  if (config.method == Method::teacher) {
    Rng rng = Rng::stream(config.seed, "init.teacher");
    return Model(TeacherClassifier::init(data.info.d_image, data.info.d_text, data.info.n_classes, opts, rng));
  }
  Rng rng = Rng::stream(config.seed, "init.student");
  return Model(StudentClassifier::init(data.info.d_image, data.info.n_classes, config.head, opts,
                                       data.info.image_has_cls, rng));
}

std::vector<std::vector<std::size_t>> epoch_batches(const std::vector<std::size_t>& train, std::uint64_t seed,
                                                    std::size_t epoch, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order = train;
  Rng rng = Rng::stream(seed, "shuffle", epoch);
  fisher_yates(order, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

namespace {

bool improves(double candidate, double best) {
  if (std::isnan(candidate)) return false;
  return std::isnan(best) || candidate > best;
}

TrainResult run_training(const EmbeddingDataset& data, const SplitPlan& split, const TrainConfig& config,
                         const Checkpoint* teacher) {
  config.validate();
  if (split.train.empty()) throw ConfigError("split has no training samples");
  if (split.validation.empty()) throw ConfigError("split has no validation samples");
  const std::size_t classes = data.info.n_classes;

  const bool distill = needs_teacher(config.method);
  const double lambda = distill ? config.lambda : 0.0;
  std::vector<std::vector<double>> soft(data.size());
  if (distill) {
    if (teacher == nullptr) throw ConfigError(to_string(config.method) + " requires a teacher checkpoint");
    if (config.method == Method::pi_distill && !teacher->model.is_teacher()) {
      throw ConfigError("pi_distill requires a multimodal teacher checkpoint");
    }
    if (config.method == Method::self_distill && teacher->model.is_teacher()) {
      throw ConfigError("self_distill requires an image-only teacher checkpoint");
    }
    if (teacher->model.classes() != classes) throw ConfigError("teacher class count does not match dataset");
    if (teacher->model.uses_text() && !data.text_complete(split.train)) {
      throw DataError("pi_distill needs report tokens for every training sample");
    }
    // Teacher logits in eval mode: deterministic, no RNG, no gradient.
    const Matrix logits = teacher->model.predict_logits(gather(data, split.train, teacher->model.uses_text()));
    const Matrix targets = kernels::softmax_rows(logits, config.tau);
    for (std::size_t r = 0; r < split.train.size(); ++r) {
      soft[split.train[r]].assign(targets.row(r).begin(), targets.row(r).end());
    }
  }
  if (config.method == Method::teacher) {
    if (!data.has_text()) throw DataError("teacher training requires report tokens (d_text is 0)");
    if (!data.text_complete(all_indices(split))) {
      throw DataError("teacher training requires report tokens for every train and validation sample");
    }
  }

  Model model = initial_model(data, config);
  const std::vector<Matrix*> params = model.parameters();
  AdamState adam = AdamState::zeros_like(params);
  AdamOptions adam_opts;
  adam_opts.learning_rate = config.effective_learning_rate();
  Rng dropout_rng = Rng::stream(config.seed, "dropout");

  TrainResult result{Checkpoint::from_model(model, to_string(config.method), 0, 0.0, config.fingerprint()),
                     {}, 0, std::nan(""), std::nan(""), std::nan(""), 0};
  const auto record_eval = [&](std::size_t epoch) {
    const EvalMetrics val = evaluate(model, data, split.validation, config.selection_averaging);
    result.log.push_back({epoch, "validation", "auc", val.auc});
    result.log.push_back({epoch, "validation", "auprc", val.auprc});
    if (config.eval_train) {
      const EvalMetrics tr = evaluate(model, data, split.train, config.selection_averaging);
      result.log.push_back({epoch, "train", "auc", tr.auc});
      result.log.push_back({epoch, "train", "auprc", tr.auprc});
    }
    result.last_val_auc = val.auc;
    if (epoch == 0 || improves(val.auc, result.best_val_auc)) {
      result.best_epoch = epoch;
      result.best_val_auc = val.auc;
      result.best_val_auprc = val.auprc;
      result.best = Checkpoint::from_model(model, to_string(config.method), epoch, val.auc, config.fingerprint());
    }
  };
  record_eval(0);

  const bool with_text = model.uses_text();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = epoch_batches(split.train, config.seed, epoch, config.batch_size);
    double loss_total = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b];
      Matrix targets(batch.size(), classes);
      for (std::size_t r = 0; r < batch.size(); ++r) {
        const Sample& s = data.samples[batch[r]];
        const auto t = distillation_target(s.label, soft[batch[r]], lambda, classes);
        std::copy(t.begin(), t.end(), targets.row(r).begin());
      }
      Tape tape;
      const std::vector<Var> vars = model.bind(tape, true);
      const Var logits = model.logits(tape, vars, gather(data, batch, with_text), dropout_rng, true);
      const Var probs = softmax_rows(tape, logits, 1.0);
      const Var loss = soft_cross_entropy_mean(tape, probs, targets);
      const double value = tape.value(loss)[0];
      if (!std::isfinite(value)) {
        throw TrainingError(config.run_id + ": non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b));
      }
      tape.backward(loss);
      std::vector<Matrix> grads;
      grads.reserve(vars.size());
      for (Var v : vars) grads.push_back(tape.grad(v));
      try {
        adam_step(params, grads, adam, adam_opts);
      } catch (const TrainingError& e) {
        throw TrainingError(config.run_id + ": epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                            ": " + e.what());
      }
      ++result.steps;
      loss_total += value * static_cast<double>(batch.size());
      seen += batch.size();
    }
    result.log.push_back({epoch, "train", "loss", loss_total / static_cast<double>(seen)});
    record_eval(epoch);
  }
  return result;
}

}  // namespace

TrainResult train_teacher(const EmbeddingDataset& data, const SplitPlan& split, const TrainConfig& config) {
  if (config.method != Method::teacher) throw ConfigError("train_teacher requires method=teacher");
  return run_training(data, split, config, nullptr);
}

TrainResult train_student(const EmbeddingDataset& data, const SplitPlan& split, const TrainConfig& config,
                          const Checkpoint* teacher) {
  if (config.method == Method::teacher) throw ConfigError("train_student cannot train a teacher");
  return run_training(data, split, config, teacher);
}

TrainResult train(const EmbeddingDataset& data, const SplitPlan& split, const TrainConfig& config,
                  const Checkpoint* teacher) {
  return config.method == Method::teacher ? train_teacher(data, split, config)
                                          : train_student(data, split, config, teacher);
}

void write_metric_log(std::ostream& out, const std::string& run_id, const std::vector<EpochMetric>& log,
                      bool header) {
  if (header) out << "run_id,epoch,split,metric,value\n";
  for (const auto& m : log) {
    out << run_id << ',' << m.epoch << ',' << m.split << ',' << m.metric << ',' << format_double(m.value) << '\n';
  }
}

}  // namespace pidistill
