// Command-line front end: synth, train, sweep, eval, inspect, plotdata.
//
// Exit codes: 0 success, 1 failure, 2 invalid configuration.
// PIDISTILL_OUTPUT_ROOT, when set, prefixes relative output paths.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pidistill/checkpoint.hpp"
#include "pidistill/dataset.hpp"
#include "pidistill/error.hpp"
#include "pidistill/hash.hpp"
#include "pidistill/log.hpp"
#include "pidistill/plotdata.hpp"
#include "pidistill/split.hpp"
#include "pidistill/sweep.hpp"
#include "pidistill/synthgen.hpp"
#include "pidistill/trainer.hpp"

namespace fs = std::filesystem;
using namespace pidistill;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

fs::path output_path(const fs::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("PIDISTILL_OUTPUT_ROOT"); root != nullptr && *root != '\0') {
    return fs::path(root) / p;
  }
  return p;
}

struct TrainFlags {
  std::string method = "image_only";
  double lambda = kDefaultLambda;
  double tau = kDefaultTau;
  double learning_rate = 0.0;  // 0: variant default
  std::size_t batch_size = 64;
  std::string head = "attention";
  double dropout = 0.2;
  bool no_scale = false;
  std::string averaging = "micro";
  double validation_share = 0.1;
  bool per_image = false;

  void add_to(CLI::App* app, bool with_method) {
    if (with_method) {
      app->add_option("--method", method, "image_only | teacher | pi_distill | self_distill")->capture_default_str();
    }
    app->add_option("--lambda", lambda, "imitation weight in [0, 1]")->capture_default_str();
    app->add_option("--tau", tau, "teacher softmax temperature")->capture_default_str();
    app->add_option("--lr", learning_rate, "learning rate (default 1e-4 attention, 1e-3 linear probes)");
    app->add_option("--batch-size", batch_size)->capture_default_str();
    app->add_option("--head", head, "attention | mean_lp | cls_lp")->capture_default_str();
    app->add_option("--dropout", dropout, "dropout on attention weights")->capture_default_str();
    app->add_flag("--no-scale", no_scale, "disable 1/sqrt(d) attention scaling");
    app->add_option("--averaging", averaging, "AUC averaging for checkpoint selection (micro | ovr)")
        ->capture_default_str();
    app->add_option("--validation-share", validation_share)->capture_default_str();
    app->add_flag("--per-image", per_image, "split per sample instead of per group_id");
  }

  TrainConfig config() const {
    TrainConfig c;
    c.method = parse_method(method);
    c.lambda = lambda;
    c.tau = tau;
    if (learning_rate > 0.0) c.learning_rate = learning_rate;
    c.batch_size = batch_size;
    c.head = parse_head_variant(head);
    c.dropout_p = dropout;
    c.scale_logits = !no_scale;
    c.selection_averaging = parse_averaging(averaging);
    c.validate();
    return c;
  }

  SplitOptions split() const { return SplitOptions{validation_share, !per_image}; }
};

void print_metrics(const std::string& label, const EvalMetrics& m) {
  std::cout << label << " auc=" << format_double(m.auc) << " auprc=" << format_double(m.auprc) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privileged-information distillation on frozen embeddings"};
  app.set_config("--config", "", "TOML/INI file setting any flag; command-line values take precedence");
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "log progress");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic causal-graph dataset");
  ScmConfig scm;
  std::string regime = "prognostic";
  std::string synth_out = "synth";
  bool balance = false;
  synth->add_option("--regime", regime, "diagnostic | prognostic")->capture_default_str();
  synth->add_option("--latent-dim", scm.latent_dim)->capture_default_str();
  synth->add_option("--n", scm.n_samples, "number of samples")->capture_default_str();
  synth->add_option("--d-image", scm.d_image)->capture_default_str();
  synth->add_option("--d-text", scm.d_text)->capture_default_str();
  synth->add_option("--image-tokens", scm.image_tokens)->capture_default_str();
  synth->add_option("--text-tokens", scm.text_tokens)->capture_default_str();
  synth->add_option("--image-signal", scm.image_signal)->capture_default_str();
  synth->add_option("--text-signal", scm.text_signal)->capture_default_str();
  synth->add_option("--image-noise", scm.image_noise)->capture_default_str();
  synth->add_option("--text-noise", scm.text_noise)->capture_default_str();
  synth->add_option("--label-noise", scm.label_noise)->capture_default_str();
  synth->add_option("--classes", scm.classes)->capture_default_str();
  synth->add_option("--samples-per-group", scm.samples_per_group)->capture_default_str();
  synth->add_flag("--image-cls", scm.image_cls, "prepend a CLS-position image token");
  synth->add_option("--seed", scm.seed)->capture_default_str();
  synth->add_flag("--balance", balance, "subsample the majority class (binary only)");
  synth->add_option("--out", synth_out, "output stem")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a single model");
  TrainFlags train_flags;
  train_flags.add_to(train_cmd, true);
  std::string train_data, teacher_path, train_out = "runs";
  std::size_t train_epochs = 10;
  std::uint64_t train_seed = 0;
  double train_fraction = 1.0;
  bool eval_train = false;
  train_cmd->add_option("--data", train_data, "dataset manifest")->required();
  train_cmd->add_option("--teacher", teacher_path, "teacher checkpoint (pi_distill, self_distill)");
  train_cmd->add_option("--epochs", train_epochs)->capture_default_str();
  train_cmd->add_option("--seed", train_seed)->capture_default_str();
  train_cmd->add_option("--fraction", train_fraction, "training fraction of the pool")->capture_default_str();
  train_cmd->add_flag("--eval-train", eval_train, "log train-split metrics each epoch");
  train_cmd->add_option("--out", train_out, "output directory")->capture_default_str();

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "run a method x fraction x seed grid");
  TrainFlags sweep_flags;
  sweep_flags.add_to(sweep_cmd, false);
  std::string sweep_data, sweep_out = "sweep_out", sweep_file;
  std::vector<std::string> sweep_methods;
  std::vector<double> sweep_fractions;
  std::vector<std::uint64_t> sweep_seeds;
  std::vector<std::string> sweep_epochs;
  std::size_t workers = 1;
  bool dry_run = false, wall_time = false;
  sweep_cmd->add_option("--sweep-file", sweep_file, "JSON sweep definition (flags below override it)");
  sweep_cmd->add_option("--data", sweep_data, "dataset manifest");
  sweep_cmd->add_option("--methods", sweep_methods)->delimiter(',');
  sweep_cmd->add_option("--fractions", sweep_fractions)->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep_seeds)->delimiter(',');
  sweep_cmd->add_option("--epochs", sweep_epochs, "fraction:epochs pairs, e.g. 0.05:100,0.5:50")->delimiter(',');
  sweep_cmd->add_option("--workers", workers)->capture_default_str();
  sweep_cmd->add_option("--out", sweep_out)->capture_default_str();
  sweep_cmd->add_flag("--dry-run", dry_run, "print the cell plan without training");
  sweep_cmd->add_flag("--record-wall-time", wall_time, "write wall_s (results no longer byte-reproducible)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "recompute metrics from a checkpoint");
  std::string eval_ckpt, eval_data, eval_split = "validation", eval_averaging = "micro";
  std::uint64_t eval_seed = 0;
  double eval_fraction = 1.0, eval_share = 0.1;
  bool eval_per_image = false;
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--split", eval_split, "validation | train | all")->capture_default_str();
  eval_cmd->add_option("--seed", eval_seed)->capture_default_str();
  eval_cmd->add_option("--fraction", eval_fraction)->capture_default_str();
  eval_cmd->add_option("--validation-share", eval_share)->capture_default_str();
  eval_cmd->add_flag("--per-image", eval_per_image);
  eval_cmd->add_option("--averaging", eval_averaging)->capture_default_str();

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "print a dataset manifest summary and validate it");
  std::string inspect_data, inspect_truth;
  inspect_cmd->add_option("--data", inspect_data)->required();
  inspect_cmd->add_option("--truth", inspect_truth, "ground-truth file for oracle AUCs");

  // plotdata
  auto* plot_cmd = app.add_subcommand("plotdata", "emit figure-ready CSVs from a results table");
  std::string plot_results, plot_out = "plotdata";
  PlotOptions plot_opts;
  plot_cmd->add_option("--results", plot_results)->required();
  plot_cmd->add_option("--out", plot_out)->capture_default_str();
  plot_cmd->add_option("--baseline", plot_opts.baseline)->capture_default_str();
  plot_cmd->add_option("--methods", plot_opts.methods)->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  set_log_level(verbose ? LogLevel::info : LogLevel::warning);

  try {
    if (*synth) {
      scm.regime = parse_regime(regime);
      GeneratedData g = generate(scm);
      if (balance) {
        std::vector<std::size_t> all(g.dataset.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        const auto labels = g.dataset.labels();
        auto keep = balance_by_label(all, labels, scm.seed);
        std::sort(keep.begin(), keep.end());
        g.dataset = subset(g.dataset, keep);
        g.dataset.info.provenance["balanced_indices"] = keep;
        // Oracle rows follow the kept samples.
        Matrix latents(keep.size(), g.truth.latents.cols());
        for (std::size_t i = 0; i < keep.size(); ++i) {
          std::copy(g.truth.latents.row(keep[i]).begin(), g.truth.latents.row(keep[i]).end(), latents.row(i).begin());
        }
        g.truth.latents = std::move(latents);
      }
      const fs::path stem = output_path(synth_out);
      write_dataset(g.dataset, DatasetPaths::from_stem(stem));
      fs::path truth_path = stem;
      truth_path += ".truth.json";
      save_ground_truth(g.truth, truth_path);
      std::cout << "wrote " << g.dataset.size() << " samples to " << stem.string() << ".{manifest.json,blob}\n";
      for (OracleView v : {OracleView::image, OracleView::text, OracleView::latent}) {
        std::cout << "oracle_auc[" << to_string(v) << "]=" << format_double(oracle_auc(g.truth, g.dataset, v))
                  << "\n";
      }
      return 0;
    }

    if (*train_cmd) {
      TrainConfig cfg = train_flags.config();
      cfg.epochs = train_epochs;
      cfg.seed = train_seed;
      cfg.eval_train = eval_train;
      if (needs_teacher(cfg.method) && teacher_path.empty()) {
        throw ConfigError(to_string(cfg.method) + " requires --teacher");
      }
      const EmbeddingDataset data = load_dataset(train_data);
      const SplitPlan split = make_split(data, cfg.seed, train_fraction, train_flags.split());
      cfg.run_id = make_run_id(cfg.method, cfg.head, train_fraction, cfg.seed);
      std::optional<Checkpoint> teacher;
      if (!teacher_path.empty()) teacher = load_checkpoint(teacher_path);
      const TrainResult r = train(data, split, cfg, teacher ? &*teacher : nullptr);
      const fs::path dir = output_path(train_out);
      save_checkpoint(r.best, dir / cfg.run_id);
      std::ostringstream log;
      write_metric_log(log, cfg.run_id, r.log);
      write_text_atomic(dir / (cfg.run_id + ".log.csv"), log.str());
      std::cout << "run_id=" << cfg.run_id << " n_train=" << split.train.size()
                << " split_hash=" << to_hex(split.hash()) << " best_epoch=" << r.best_epoch
                << " val_auc=" << format_double(r.best_val_auc) << " val_auprc=" << format_double(r.best_val_auprc)
                << "\ncheckpoint=" << (dir / cfg.run_id).string() << ".manifest.json\n";
      return 0;
    }

    if (*sweep_cmd) {
      SweepConfig sc;
      if (!sweep_file.empty()) {
        std::ifstream in(sweep_file);
        if (!in) throw ConfigError("cannot open sweep file " + sweep_file);
        try {
          sc = SweepConfig::from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError("sweep file is not valid JSON: " + std::string(e.what()));
        }
      }
      const auto given = [&](const char* name) { return sweep_cmd->count(name) > 0; };
      if (given("--data")) sc.dataset = sweep_data;
      if (given("--methods")) {
        sc.methods.clear();
        for (const auto& m : sweep_methods) sc.methods.push_back(parse_method(m));
      }
      if (given("--fractions")) sc.fractions = sweep_fractions;
      if (given("--seeds")) sc.seeds = sweep_seeds;
      if (given("--epochs")) {
        sc.epochs_per_fraction.clear();
        for (const auto& pair : sweep_epochs) {
          const auto colon = pair.find(':');
          if (colon == std::string::npos) throw ConfigError("--epochs expects fraction:epochs, got " + pair);
          try {
            sc.epochs_per_fraction.emplace_back(std::stod(pair.substr(0, colon)), std::stoul(pair.substr(colon + 1)));
          } catch (const std::logic_error&) {
            throw ConfigError("--epochs expects fraction:epochs, got " + pair);
          }
        }
      }
      if (given("--workers") || sweep_file.empty()) sc.workers = workers;
      if (given("--out") || sweep_file.empty()) sc.output_dir = sweep_out;
      if (given("--record-wall-time")) sc.record_wall_time = wall_time;
      if (sweep_file.empty() || given("--lambda") || given("--tau") || given("--lr") || given("--batch-size") ||
          given("--head") || given("--dropout") || given("--no-scale") || given("--averaging")) {
        TrainConfig tc = sweep_flags.config();
        if (!sweep_file.empty()) {
          // Only explicitly given flags override the file.
          TrainConfig merged = sc.train;
          if (given("--lambda")) merged.lambda = tc.lambda;
          if (given("--tau")) merged.tau = tc.tau;
          if (given("--lr")) merged.learning_rate = tc.learning_rate;
          if (given("--batch-size")) merged.batch_size = tc.batch_size;
          if (given("--head")) merged.head = tc.head;
          if (given("--dropout")) merged.dropout_p = tc.dropout_p;
          if (given("--no-scale")) merged.scale_logits = tc.scale_logits;
          if (given("--averaging")) merged.selection_averaging = tc.selection_averaging;
          tc = merged;
        }
        sc.train = tc;
      }
      if (given("--validation-share") || sweep_file.empty()) sc.split.validation_share = sweep_flags.validation_share;
      if (given("--per-image") || sweep_file.empty()) sc.split.grouped = !sweep_flags.per_image;
      sc.output_dir = output_path(sc.output_dir);

      const auto plan = plan_sweep(sc);
      if (dry_run) {
        std::cout << "cells=" << plan.size() << "\n";
        for (const auto& c : plan) {
          std::cout << c.run_id << " epochs=" << sc.epochs_for(c.fraction);
          if (c.teacher_run_id) std::cout << " after=" << *c.teacher_run_id;
          std::cout << "\n";
        }
        return 0;
      }
      const SweepOutcome out = run_sweep(sc);
      std::cout << "cells=" << plan.size() << " trained=" << out.trained << " reused=" << out.reused
                << " failed=" << out.failures.size() << "\nresults=" << (sc.output_dir / "results.csv").string()
                << "\n";
      for (const auto& [id, reason] : out.failures) std::cerr << "failed " << id << ": " << reason << "\n";
      return out.failures.empty() ? 0 : kExitFailure;
    }

    if (*eval_cmd) {
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      const EmbeddingDataset data = load_dataset(eval_data);
      const SplitPlan split = make_split(data, eval_seed, eval_fraction, SplitOptions{eval_share, !eval_per_image});
      std::vector<std::size_t> indices;
      if (eval_split == "validation") {
        indices = split.validation;
      } else if (eval_split == "train") {
        indices = split.train;
      } else if (eval_split == "all") {
        for (std::size_t i = 0; i < data.size(); ++i) indices.push_back(i);
      } else {
        throw ConfigError("--split must be validation, train or all");
      }
      std::cout << "checkpoint method=" << ckpt.method << " epoch=" << ckpt.epoch
                << " recorded_val_auc=" << format_double(ckpt.val_auc) << "\n";
      print_metrics(eval_split, evaluate(ckpt.model, data, indices, parse_averaging(eval_averaging)));
      return 0;
    }

    if (*inspect_cmd) {
      const EmbeddingDataset data = load_dataset(inspect_data);
      std::vector<std::size_t> hist(data.info.n_classes, 0);
      std::size_t with_text = 0, tokens = 0;
      for (const auto& s : data.samples) {
        ++hist[s.label];
        tokens += s.image.rows();
        if (s.text) ++with_text;
      }
      std::cout << "samples=" << data.size() << " classes=" << data.info.n_classes << " d_image=" << data.info.d_image
                << " d_text=" << data.info.d_text << " image_has_cls=" << data.info.image_has_cls
                << " text_has_cls=" << data.info.text_has_cls << "\n";
      std::cout << "samples_with_text=" << with_text << " mean_image_tokens="
                << format_double(static_cast<double>(tokens) / static_cast<double>(data.size())) << "\n";
      for (std::size_t c = 0; c < hist.size(); ++c) std::cout << "class[" << c << "]=" << hist[c] << "\n";
      std::cout << "provenance=" << data.info.provenance.dump() << "\nvalidation=ok\n";
      if (!inspect_truth.empty()) {
        const ScmGroundTruth truth = load_ground_truth(inspect_truth);
        for (OracleView v : {OracleView::image, OracleView::text, OracleView::latent}) {
          std::cout << "oracle_auc[" << to_string(v) << "]=" << format_double(oracle_auc(truth, data, v)) << "\n";
        }
      }
      return 0;
    }

    if (*plot_cmd) {
      emit_plotdata(read_results_csv(plot_results), output_path(plot_out), plot_opts);
      std::cout << "wrote curves.csv, bars.csv, paired_diffs.csv to " << output_path(plot_out).string() << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
