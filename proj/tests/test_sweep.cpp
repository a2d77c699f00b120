#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "pidistill/error.hpp"
#include "pidistill/metrics.hpp"
#include "pidistill/plotdata.hpp"
#include "pidistill/sweep.hpp"
#include "pidistill/synthgen.hpp"
#include "test_util.hpp"

using namespace pidistill;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

fs::path tiny_dataset(const fs::path& dir) {
  ScmConfig c;
  c.n_samples = 80;
  c.d_image = 6;
  c.d_text = 6;
  c.image_tokens = 3;
  c.text_tokens = 3;
  const auto paths = DatasetPaths::from_stem(dir / "data");
  write_dataset(generate(c).dataset, paths);
  return paths.manifest;
}

SweepConfig tiny_sweep(const fs::path& dir, std::vector<Method> methods, std::vector<double> fractions,
                       std::vector<std::uint64_t> seeds) {
  SweepConfig s;
  s.dataset = tiny_dataset(dir);
  s.methods = std::move(methods);
  s.fractions = fractions;
  for (double f : fractions) s.epochs_per_fraction.emplace_back(f, 2);
  s.seeds = std::move(seeds);
  s.train.batch_size = 16;
  s.split.validation_share = 0.25;
  s.output_dir = dir / "out";
  return s;
}

const std::vector<Method> kAllMethods{Method::image_only, Method::teacher, Method::pi_distill, Method::self_distill};

RunResult row(std::string method, double fraction, std::uint64_t seed, double auc) {
  RunResult r;
  r.method = std::move(method);
  r.head = "attention";
  r.fraction = fraction;
  r.n_train = static_cast<std::size_t>(fraction * 1000);
  r.seed = seed;
  r.run_id = r.method + "_" + std::to_string(seed);
  r.split_hash = "00";
  r.val_auc = auc;
  r.val_auprc = auc - 0.1;
  return r;
}

}  // namespace

TEST(Sweep, RunIds) {
  EXPECT_EQ(make_run_id(Method::pi_distill, HeadVariant::attention, 0.05, 3), "pi_distill_attention_f0.05_s3");
  EXPECT_EQ(make_run_id(Method::teacher, HeadVariant::mean_lp, 1.0, 0), "teacher_attention_f1_s0");
}

TEST(Sweep, PlanCountsAndOrder) {
  SweepConfig s;
  s.dataset = "d.manifest.json";
  s.methods = kAllMethods;
  s.fractions = {0.05, 0.5};
  s.seeds = {0, 1, 2, 3, 4};
  s.epochs_per_fraction = {{0.05, 100}, {0.5, 50}};
  const auto plan = plan_sweep(s);
  std::map<std::string, std::size_t> counts;
  std::set<std::string> ids;
  for (const auto& c : plan) {
    ++counts[to_string(c.method)];
    ids.insert(c.run_id);
  }
  // 40 cells: 10 per method, where the 10 teacher and 10 image_only rows
  // double as the checkpoints reused by pi_distill and self_distill.
  EXPECT_EQ(plan.size(), 40u);
  EXPECT_EQ(ids.size(), 40u);
  for (const auto& [m, n] : counts) EXPECT_EQ(n, 10u) << m;
  std::set<std::string> seen;
  for (const auto& c : plan) {
    if (c.teacher_run_id) EXPECT_TRUE(seen.count(*c.teacher_run_id)) << c.run_id;
    seen.insert(c.run_id);
  }
  EXPECT_EQ(s.epochs_for(0.05), 100u);
}

TEST(Sweep, PlanAddsMissingDependencies) {
  SweepConfig s;
  s.dataset = "d.manifest.json";
  s.methods = {Method::pi_distill};
  s.fractions = {1.0};
  s.seeds = {0};
  s.epochs_per_fraction = {{1.0, 1}};
  const auto plan = plan_sweep(s);
  ASSERT_EQ(plan.size(), 2u);
  EXPECT_EQ(plan[0].method, Method::teacher);
  EXPECT_EQ(plan[1].teacher_run_id, plan[0].run_id);
}

TEST(Sweep, ConfigValidation) {
  SweepConfig s;
  s.dataset = "d.manifest.json";
  s.methods = {Method::image_only};
  s.fractions = {0.1, 0.2};
  s.seeds = {0};
  s.epochs_per_fraction = {{0.1, 5}};
  EXPECT_THROW(s.validate(), ConfigError);
  s.epochs_per_fraction.emplace_back(0.2, 5);
  EXPECT_NO_THROW(s.validate());
  s.seeds = {1, 1};
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Sweep, ConfigJsonRoundTrip) {
  SweepConfig s;
  s.dataset = "d.manifest.json";
  s.methods = kAllMethods;
  s.fractions = {0.1};
  s.seeds = {3, 4};
  s.epochs_per_fraction = {{0.1, 7}};
  s.train.lambda = 0.5;
  s.train.tau = 2.5;
  s.workers = 3;
  const auto back = SweepConfig::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_EQ(back.train.tau, 2.5);
}

TEST(Sweep, SingleCell) {
  const auto dir = test::scratch_dir("sweep_single");
  const auto s = tiny_sweep(dir, {Method::image_only}, {1.0}, {0});
  const auto out = run_sweep(s);
  EXPECT_EQ(out.results.size(), 1u);
  EXPECT_EQ(line_count(slurp(s.output_dir / "results.csv")), 2u);

  const auto dir2 = test::scratch_dir("sweep_single_distill");
  const auto s2 = tiny_sweep(dir2, {Method::pi_distill}, {1.0}, {0});
  EXPECT_EQ(run_sweep(s2).results.size(), 2u);
}

TEST(Sweep, IdempotentAndWorkerIndependent) {
  const auto dir = test::scratch_dir("sweep_idem");
  auto s = tiny_sweep(dir, kAllMethods, {0.5, 1.0}, {0, 1});
  const auto first = run_sweep(s);
  EXPECT_TRUE(first.failures.empty());
  EXPECT_EQ(first.trained, 16u);
  const std::string results = slurp(s.output_dir / "results.csv");
  const std::string summary = slurp(s.output_dir / "summary.csv");

  const auto again = run_sweep(s);
  EXPECT_EQ(again.trained, 0u);
  EXPECT_EQ(again.reused, 16u);
  EXPECT_EQ(slurp(s.output_dir / "results.csv"), results);

  s.output_dir = dir / "out4";
  s.workers = 4;
  run_sweep(s);
  EXPECT_EQ(slurp(s.output_dir / "results.csv"), results);
  EXPECT_EQ(slurp(s.output_dir / "summary.csv"), summary);
}

TEST(Sweep, MethodsShareSplits) {
  const auto dir = test::scratch_dir("sweep_pairs");
  const auto s = tiny_sweep(dir, kAllMethods, {0.5}, {0, 1});
  const auto out = run_sweep(s);
  std::map<std::uint64_t, std::set<std::string>> hashes;
  for (const auto& r : out.results) hashes[r.seed].insert(r.split_hash);
  for (const auto& [seed, h] : hashes) EXPECT_EQ(h.size(), 1u) << seed;
  EXPECT_NE(*hashes[0].begin(), *hashes[1].begin());
}

TEST(Sweep, SummaryRecomputable) {
  const auto dir = test::scratch_dir("sweep_summary");
  const auto s = tiny_sweep(dir, {Method::image_only}, {1.0}, {0, 1, 2});
  run_sweep(s);
  const auto rows = read_results_csv(s.output_dir / "results.csv");
  std::vector<double> aucs;
  for (const auto& r : rows) aucs.push_back(r.val_auc);
  const auto agg = aggregate(aucs, 0.95);
  const std::string summary = slurp(s.output_dir / "summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')), kSummaryHeader);
  EXPECT_EQ(summary, summary_csv(rows, {0.90, 0.95}));
  EXPECT_NE(summary.find(format_double(agg.ci_hi())), std::string::npos);
}

TEST(Sweep, FailedCellsRecorded) {
  const auto dir = test::scratch_dir("sweep_fail");
  auto s = tiny_sweep(dir, {Method::image_only, Method::self_distill}, {0.01}, {0});
  const auto out = run_sweep(s);
  EXPECT_EQ(out.failures.size(), 2u);
  EXPECT_TRUE(fs::exists(s.output_dir / "failures.csv"));
}

TEST(Sweep, ResultsCsvRoundTrip) {
  std::vector<RunResult> rows{row("image_only", 0.1, 0, 0.7), row("pi_distill", 0.1, 0, 0.75)};
  rows[1].wall_s = 1.5;
  const std::string text = results_csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), kResultsHeader);
  EXPECT_EQ(results_csv(parse_results_csv(text)), text);
  EXPECT_THROW(parse_results_csv("bad,header\n"), DataError);
}

TEST(Plotdata, SingleCell) {
  const auto t = make_plot_tables({row("image_only", 0.1, 0, 0.7)}, PlotOptions{});
  EXPECT_EQ(line_count(t.bars), 1u + 2u);  // header + auc + auprc
  EXPECT_EQ(t.bars.substr(0, t.bars.find('\n')), kBarHeader);
  EXPECT_EQ(t.curves.substr(0, t.curves.find('\n')), kCurveHeader);
  EXPECT_EQ(t.diffs.substr(0, t.diffs.find('\n')), kDiffHeader);
}

TEST(Plotdata, PairedDifferencesByHand) {
  // Seed 0: 0.80 - 0.70 = 0.10; seed 1: 0.74 - 0.70 = 0.04.
  const std::vector<RunResult> rows{row("image_only", 0.1, 0, 0.70), row("image_only", 0.1, 1, 0.70),
                                    row("pi_distill", 0.1, 0, 0.80), row("pi_distill", 0.1, 1, 0.74)};
  const auto t = make_plot_tables(rows, PlotOptions{});
  std::istringstream in(t.diffs);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line.rfind("pi_distill,image_only,0.1,val_auc,", 0), 0u) << line;
  const std::vector<double> d{0.80 - 0.70, 0.74 - 0.70};
  const auto agg = aggregate(d, 0.95);
  EXPECT_NE(line.find(format_double(agg.mean)), std::string::npos) << line;
  EXPECT_NEAR(agg.mean, 0.07, 1e-12);
  EXPECT_NE(line.find(format_double(agg.ci_lo())), std::string::npos) << line;
}

TEST(Plotdata, EmptySelection) {
  PlotOptions o;
  o.methods = {"teacher"};
  EXPECT_THROW(make_plot_tables({row("image_only", 0.1, 0, 0.7)}, o), DataError);
  EXPECT_THROW(make_plot_tables({}, PlotOptions{}), DataError);
}

TEST(Plotdata, WritesFiles) {
  const auto dir = test::scratch_dir("plotdata");
  emit_plotdata({row("image_only", 0.1, 0, 0.7), row("image_only", 0.1, 1, 0.72)}, dir / "p", PlotOptions{});
  for (const char* f : {"curves.csv", "bars.csv", "paired_diffs.csv"}) EXPECT_TRUE(fs::exists(dir / "p" / f)) << f;
}
