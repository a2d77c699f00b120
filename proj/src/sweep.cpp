#include "pidistill/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "pidistill/error.hpp"
#include "pidistill/hash.hpp"
#include "pidistill/log.hpp"
#include "pidistill/metrics.hpp"

namespace pidistill {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool same_fraction(double a, double b) { return std::abs(a - b) <= 1e-12; }

}  // namespace

void SweepConfig::validate() const {
  if (dataset.empty()) throw ConfigError("sweep: dataset path is required");
  if (methods.empty()) throw ConfigError("sweep: at least one method is required");
  if (fractions.empty()) throw ConfigError("sweep: at least one fraction is required");
  if (seeds.empty()) throw ConfigError("sweep: at least one seed is required");
  if (workers == 0) throw ConfigError("sweep: workers must be at least 1");
  const std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
  if (distinct.size() != seeds.size()) throw ConfigError("sweep: seeds must be distinct");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("sweep: fraction " + format_double(f) + " outside (0, 1]");
    epochs_for(f);
  }
  train.validate();
}

std::size_t SweepConfig::epochs_for(double fraction) const {
  for (const auto& [f, e] : epochs_per_fraction) {
    if (same_fraction(f, fraction)) return e;
  }
  throw ConfigError("sweep: no epoch count for fraction " + format_double(fraction));
}

json SweepConfig::to_json() const {
  json j;
  j["dataset"] = dataset.string();
  j["methods"] = json::array();
  for (Method m : methods) j["methods"].push_back(to_string(m));
  j["fractions"] = fractions;
  j["seeds"] = seeds;
  j["epochs"] = json::array();
  for (const auto& [f, e] : epochs_per_fraction) j["epochs"].push_back({{"fraction", f}, {"epochs", e}});
  j["lambda"] = train.lambda;
  j["tau"] = train.tau;
  if (train.learning_rate) j["learning_rate"] = *train.learning_rate;
  j["batch_size"] = train.batch_size;
  j["head"] = to_string(train.head);
  j["dropout"] = train.dropout_p;
  j["scale_logits"] = train.scale_logits;
  j["selection_averaging"] = to_string(train.selection_averaging);
  j["validation_share"] = split.validation_share;
  j["grouped"] = split.grouped;
  j["output_dir"] = output_dir.string();
  j["workers"] = workers;
  j["record_wall_time"] = record_wall_time;
  return j;
}

SweepConfig SweepConfig::from_json(const json& j) {
  try {
    SweepConfig c;
    c.dataset = j.at("dataset").get<std::string>();
    for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
    c.fractions = j.at("fractions").get<std::vector<double>>();
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& e : j.at("epochs")) {
      c.epochs_per_fraction.emplace_back(e.at("fraction").get<double>(), e.at("epochs").get<std::size_t>());
    }
    c.train.lambda = j.value("lambda", c.train.lambda);
    c.train.tau = j.value("tau", c.train.tau);
    if (j.contains("learning_rate")) c.train.learning_rate = j["learning_rate"].get<double>();
    c.train.batch_size = j.value("batch_size", c.train.batch_size);
    c.train.head = parse_head_variant(j.value("head", std::string("attention")));
    c.train.dropout_p = j.value("dropout", c.train.dropout_p);
    c.train.scale_logits = j.value("scale_logits", c.train.scale_logits);
    c.train.selection_averaging = parse_averaging(j.value("selection_averaging", std::string("micro")));
    c.split.validation_share = j.value("validation_share", c.split.validation_share);
    c.split.grouped = j.value("grouped", c.split.grouped);
    c.output_dir = j.value("output_dir", std::string("sweep_out"));
    c.workers = j.value("workers", c.workers);
    c.record_wall_time = j.value("record_wall_time", c.record_wall_time);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sweep config: ") + e.what());
  }
}

std::string make_run_id(Method m, HeadVariant head, double fraction, std::uint64_t seed) {
  return to_string(m) + "_" + to_string(m == Method::teacher ? HeadVariant::attention : head) + "_f" +
         format_double(fraction) + "_s" + std::to_string(seed);
}

std::vector<Cell> plan_sweep(const SweepConfig& config) {
  config.validate();
  const auto wants = [&](Method m) {
    return std::find(config.methods.begin(), config.methods.end(), m) != config.methods.end();
  };
  const bool need_teacher = wants(Method::teacher) || wants(Method::pi_distill);
  const bool need_image = wants(Method::image_only) || wants(Method::self_distill);
  const HeadVariant head = config.train.head;
  std::vector<Cell> independent, dependent;
  for (double f : config.fractions) {
    for (std::uint64_t s : config.seeds) {
      if (need_teacher) independent.push_back({Method::teacher, f, s, make_run_id(Method::teacher, head, f, s), {}});
      if (need_image) {
        independent.push_back({Method::image_only, f, s, make_run_id(Method::image_only, head, f, s), {}});
      }
      if (wants(Method::pi_distill)) {
        dependent.push_back({Method::pi_distill, f, s, make_run_id(Method::pi_distill, head, f, s),
                             make_run_id(Method::teacher, head, f, s)});
      }
      if (wants(Method::self_distill)) {
        dependent.push_back({Method::self_distill, f, s, make_run_id(Method::self_distill, head, f, s),
                             make_run_id(Method::image_only, head, f, s)});
      }
    }
  }
  independent.insert(independent.end(), dependent.begin(), dependent.end());
  return independent;
}

namespace {

json result_json(const RunResult& r) {
  json j{{"run_id", r.run_id},         {"method", r.method},         {"head", r.head},
         {"fraction", r.fraction},     {"n_train", r.n_train},       {"seed", r.seed},
         {"split_hash", r.split_hash}, {"best_epoch", r.best_epoch}, {"val_auc", format_double(r.val_auc)},
         {"val_auprc", format_double(r.val_auprc)}};
  if (r.wall_s) j["wall_s"] = *r.wall_s;
  return j;
}

double parse_double(const std::string& s) {
  if (s == "nan" || s == "NA") return std::nan("");
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("not a number: '" + s + "'");
  }
}

RunResult result_from_json(const json& j) {
  RunResult r;
  r.run_id = j.at("run_id").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.head = j.at("head").get<std::string>();
  r.fraction = j.at("fraction").get<double>();
  r.n_train = j.at("n_train").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.split_hash = j.at("split_hash").get<std::string>();
  r.best_epoch = j.at("best_epoch").get<std::size_t>();
  r.val_auc = parse_double(j.at("val_auc").get<std::string>());
  r.val_auprc = parse_double(j.at("val_auprc").get<std::string>());
  if (j.contains("wall_s")) r.wall_s = j["wall_s"].get<double>();
  return r;
}

struct SweepContext {
  const SweepConfig& config;
  const EmbeddingDataset& data;
  fs::path out;
};

fs::path cell_file(const fs::path& out, const std::string& run_id) { return out / "cells" / (run_id + ".json"); }

RunResult execute_cell(const SweepContext& ctx, const Cell& cell) {
  const auto start = std::chrono::steady_clock::now();
  TrainConfig cfg = ctx.config.train;
  cfg.method = cell.method;
  cfg.seed = cell.seed;
  cfg.epochs = ctx.config.epochs_for(cell.fraction);
  cfg.run_id = cell.run_id;
  if (cell.method == Method::teacher) cfg.head = HeadVariant::attention;
  const SplitPlan split = make_split(ctx.data, cell.seed, cell.fraction, ctx.config.split);

  std::optional<Checkpoint> teacher;
  if (cell.teacher_run_id) teacher = load_checkpoint(ctx.out / "checkpoints" / *cell.teacher_run_id);
  const TrainResult tr = train(ctx.data, split, cfg, teacher ? &*teacher : nullptr);

  save_checkpoint(tr.best, ctx.out / "checkpoints" / cell.run_id);
  std::ostringstream log;
  write_metric_log(log, cell.run_id, tr.log);
  write_text_atomic(ctx.out / "logs" / (cell.run_id + ".csv"), log.str());

  RunResult r;
  r.run_id = cell.run_id;
  r.method = to_string(cell.method);
  r.head = to_string(cfg.head);
  r.fraction = cell.fraction;
  r.n_train = split.train.size();
  r.seed = cell.seed;
  r.split_hash = to_hex(split.hash());
  r.best_epoch = tr.best_epoch;
  r.val_auc = tr.best_val_auc;
  r.val_auprc = tr.best_val_auprc;
  if (ctx.config.record_wall_time) {
    r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  // Result file last: its presence marks the cell complete.
  write_text_atomic(cell_file(ctx.out, cell.run_id), result_json(r).dump(1) + "\n");
  return r;
}

}  // namespace

SweepOutcome run_sweep(const SweepConfig& config) {
  const std::vector<Cell> plan = plan_sweep(config);
  const EmbeddingDataset data = load_dataset(config.dataset);
  const fs::path out = config.output_dir;
  fs::create_directories(out / "cells");
  write_text_atomic(out / "sweep_config.json", config.to_json().dump(1) + "\n");
  const SweepContext ctx{config, data, out};

  std::vector<std::optional<RunResult>> results(plan.size());
  std::vector<std::string> failure(plan.size());
  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < plan.size(); ++i) index_of[plan[i].run_id] = i;
  std::atomic<std::size_t> trained{0}, reused{0};

  const auto run_one = [&](std::size_t i) {
    const Cell& cell = plan[i];
    const fs::path done = cell_file(out, cell.run_id);
    try {
      if (fs::exists(done)) {
        std::ifstream in(done);
        results[i] = result_from_json(json::parse(in));
        ++reused;
        return;
      }
      if (cell.teacher_run_id) {
        const std::size_t dep = index_of.at(*cell.teacher_run_id);
        if (!results[dep]) throw Error("dependency " + *cell.teacher_run_id + " failed");
      }
      results[i] = execute_cell(ctx, cell);
      ++trained;
    } catch (const std::exception& e) {
      failure[i] = e.what();
      log_warning("cell " + cell.run_id + " failed: " + e.what());
    }
  };

  // Independent cells first, then their dependents.
  std::size_t split_at = 0;
  while (split_at < plan.size() && !plan[split_at].teacher_run_id) ++split_at;
  for (auto [begin, end] : {std::pair{std::size_t{0}, split_at}, std::pair{split_at, plan.size()}}) {
    std::atomic<std::size_t> next{begin};
    const std::size_t n_threads = std::min(config.workers, std::max<std::size_t>(end - begin, 1));
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < end; i = next++) run_one(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  SweepOutcome outcome;
  outcome.trained = trained;
  outcome.reused = reused;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (results[i]) {
      outcome.results.push_back(*results[i]);
    } else {
      outcome.failures.emplace_back(plan[i].run_id, failure[i]);
    }
  }
  write_text_atomic(out / "results.csv", results_csv(outcome.results));
  write_text_atomic(out / "summary.csv", summary_csv(outcome.results, {0.90, 0.95}));
  const fs::path failures_path = out / "failures.csv";
  if (!outcome.failures.empty()) {
    std::string text = "run_id,reason\n";
    for (const auto& [id, reason] : outcome.failures) {
      std::string clean = reason;
      std::replace(clean.begin(), clean.end(), ',', ';');
      std::replace(clean.begin(), clean.end(), '\n', ' ');
      text += id + "," + clean + "\n";
    }
    write_text_atomic(failures_path, text);
  } else if (fs::exists(failures_path)) {
    fs::remove(failures_path);
  }
  return outcome;
}

std::string results_csv(const std::vector<RunResult>& results) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& r : results) {
    out += r.run_id + "," + r.method + "," + r.head + "," + format_double(r.fraction) + "," +
           std::to_string(r.n_train) + "," + std::to_string(r.seed) + "," + r.split_hash + "," +
           std::to_string(r.best_epoch) + "," + format_double(r.val_auc) + "," + format_double(r.val_auprc) + "," +
           (r.wall_s ? format_double(*r.wall_s) : std::string("NA")) + "\n";
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
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

}  // namespace

std::vector<RunResult> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) {
    throw DataError("results CSV header must be: " + std::string(kResultsHeader));
  }
  std::vector<RunResult> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 11) throw DataError("results CSV line " + std::to_string(line_no) + " has " +
                                        std::to_string(f.size()) + " fields");
    RunResult r;
    r.run_id = f[0];
    r.method = f[1];
    r.head = f[2];
    r.fraction = parse_double(f[3]);
    r.n_train = std::stoull(f[4]);
    r.seed = std::stoull(f[5]);
    r.split_hash = f[6];
    r.best_epoch = std::stoull(f[7]);
    r.val_auc = parse_double(f[8]);
    r.val_auprc = parse_double(f[9]);
    if (f[10] != "NA") r.wall_s = parse_double(f[10]);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RunResult> read_results_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_results_csv(ss.str());
}

std::string summary_csv(const std::vector<RunResult>& results, const std::vector<double>& levels) {
  // (method, fraction) groups in first-appearance order.
  std::vector<std::pair<std::string, double>> keys;
  for (const auto& r : results) {
    const auto match = [&](const auto& k) { return k.first == r.method && same_fraction(k.second, r.fraction); };
    if (std::find_if(keys.begin(), keys.end(), match) == keys.end()) keys.emplace_back(r.method, r.fraction);
  }
  std::string out = std::string(kSummaryHeader) + "\n";
  for (const auto& [method, fraction] : keys) {
    std::vector<double> auc, auprc, n_train;
    for (const auto& r : results) {
      if (r.method != method || !same_fraction(r.fraction, fraction)) continue;
      auc.push_back(r.val_auc);
      auprc.push_back(r.val_auprc);
      n_train.push_back(static_cast<double>(r.n_train));
    }
    const double mean_n = aggregate(n_train, 0.95).mean;
    for (const auto& [metric, values] : {std::pair{"val_auc", &auc}, std::pair{"val_auprc", &auprc}}) {
      for (double level : levels) {
        const MetricSummary s = aggregate(*values, level);
        out += method + "," + format_double(fraction) + "," + format_double(mean_n) + "," + metric + "," +
               format_double(s.mean) + "," + (s.n() >= 2 ? format_double(s.sd) : "NA") + "," +
               (s.half_width ? format_double(s.ci_lo()) : "NA") + "," +
               (s.half_width ? format_double(s.ci_hi()) : "NA") + "," + format_double(level) + "," +
               std::to_string(s.n()) + "\n";
      }
    }
  }
  return out;
}

}  // namespace pidistill
