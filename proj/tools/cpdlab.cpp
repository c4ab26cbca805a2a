// cpdlab command line: experiment grid, lower bound, kernel audit, slices,
// curves and the reduction identities.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cpdlab/analysis.hpp"
#include "cpdlab/error.hpp"
#include "cpdlab/experiment.hpp"
#include "cpdlab/plots.hpp"

using namespace cpdlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitCheck = 2;

std::uint64_t env_seed() {
  const char* s = std::getenv("CPDLAB_SEED");
  if (!s || !*s) return 0;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigInvalid, std::string("CPDLAB_SEED is not an unsigned integer: ") + s);
  }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path);
  out << text;
}

// Shared experiment flags. Precedence: flags > config file > CPDLAB_SEED > defaults.
struct GridFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> out;
  bool desk = false;
  bool paper = false;

  void attach(CLI::App* app, bool with_out = true) {
    app->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Master seed (default $CPDLAB_SEED or 0)");
    app->add_option("--jobs", jobs, "Concurrent cells")->check(CLI::PositiveNumber);
    if (with_out) app->add_option("--out", out, "Output path");
    auto* d = app->add_flag("--desk", desk, "Desk scale: 200/600 points, 3 runs");
    auto* p = app->add_flag("--paper", paper, "Full scale: 1000/3000 points, 5 runs");
    d->excludes(p);
  }

  ExperimentConfig resolve() const {
    ExperimentConfig base;
    apply_preset(base, ScalePreset::Desk);
    base.seed = env_seed();
    ExperimentConfig c = config.empty() ? base : parse_experiment_config(slurp(config), base);
    if (paper) apply_preset(c, ScalePreset::Paper);
    if (desk) apply_preset(c, ScalePreset::Desk);
    if (seed) c.seed = *seed;
    if (jobs) c.jobs = *jobs;
    if (out) c.out = *out;
    validate(c);
    return c;
  }
};

int cmd_train(const GridFlags& flags, const std::string& export_dir) {
  ExperimentConfig c = flags.resolve();
  if (c.out.empty()) c.out = "results.csv";
  if (!export_dir.empty()) {
    std::filesystem::create_directories(export_dir);
    for (const auto& kernel : c.kernels)
      for (std::size_t run = 0; run < c.runs; ++run) {
        const auto ds = synth_dataset(dataset_spec_for(c, kernel, run));
        const auto stem = export_dir + "/" + kernel + "_run" + std::to_string(run);
        export_dataset_csv(ds, stem + "_inputs.csv", stem + "_pairs.csv");
      }
  }
  const auto rows = run_experiment(c, [](const ResultRow& r) {
    std::fprintf(stderr, "%-9s %-6s T=%-5zu K=%zu run=%zu mspe=%.6g %s\n", r.kernel.c_str(), r.model.c_str(), r.T,
                 r.K, r.run, r.mspe, r.status.c_str());
  });
  std::fprintf(stderr, "%zu rows -> %s (summary: %s.summary.json)\n", rows.size(), c.out.c_str(), c.out.c_str());
  return kExitOk;
}

int cmd_lower_bound(const GridFlags& flags, std::size_t p, double half_width, std::size_t n_mc, bool check) {
  const ExperimentConfig c = flags.resolve();
  LowerBoundConfig lb;
  lb.p = p;
  lb.half_width = half_width;
  lb.n_mc = n_mc;
  lb.n_train = c.n_train;
  lb.units = {100};
  lb.train = c.train;
  lb.seed = c.seed;
  const auto report = verify_lower_bound(lb);
  write_text(c.out, to_json(report) + "\n");
  if (!check) return kExitOk;
  bool ok = true;
  for (const auto& e : report.entries) ok = ok && e.empirical_mae >= 0.95 * report.bound;
  std::fprintf(stderr, "lower-bound check: %s\n", ok ? "PASS" : "FAIL");
  return ok ? kExitOk : kExitCheck;
}

int cmd_audit(std::size_t n, std::optional<std::uint64_t> seed, const std::string& out, bool check) {
  const auto report = audit_kernels(n, seed ? *seed : env_seed());
  write_text(out, to_json(report) + "\n");
  if (!check) return kExitOk;
  const auto bad = audit_mismatches(report);
  for (const auto& m : bad) std::fprintf(stderr, "mismatch: %s\n", m.c_str());
  std::fprintf(stderr, "audit check: %s\n", bad.empty() ? "PASS" : "FAIL");
  return bad.empty() ? kExitOk : kExitCheck;
}

int cmd_reduce_check(std::optional<std::uint64_t> seed, std::size_t pairs, bool check) {
  const auto report = reduce_check(seed ? *seed : env_seed(), pairs);
  std::cout << to_json(report) << "\n";
  std::printf("max deviation: %.3g\n",
              std::max({report.csips_vs_sips, report.sips_vs_mips, report.sips_vs_mips_lookup}));
  if (!check) return kExitOk;
  const bool ok = report.csips_vs_sips <= 1e-12 && report.sips_vs_mips <= 1e-12 && report.sips_vs_mips_lookup <= 1e-12;
  std::fprintf(stderr, "reduce-check: %s\n", ok ? "PASS" : "FAIL");
  return ok ? kExitOk : kExitCheck;
}

struct SliceFlags {
  std::string kernel = "nsd";
  std::vector<std::string> models;
  bool fit = false;
  std::size_t units = 1000;
  std::size_t dim = 10;
  std::size_t grid = 50;
  std::size_t dir1 = 0;
  std::size_t dir2 = 1;
  std::string save_dir;
};

int cmd_slice(const GridFlags& flags, const SliceFlags& s) {
  ExperimentConfig c = flags.resolve();
  const std::string out = c.out.empty() ? "slice.svg" : c.out;
  const auto spec_ds = dataset_spec_for(c, s.kernel, 0);
  const GroundTruthSpec truth{spec_ds.fstar, spec_ds.kernel};
  validate(truth);

  SliceSpec spec;
  spec.p = spec_ds.p;
  spec.dir1 = s.dir1;
  spec.dir2 = s.dir2;
  spec.grid = s.grid;
  // Poincare inputs live in the unit ball; stay inside it along both axes.
  spec.half_width = spec_ds.input_law == InputLaw::BetaBall ? 0.7 : spec_ds.half_width;

  std::vector<SlicePanel> panels;
  panels.push_back({"true " + s.kernel, evaluate_slice([&](auto x, auto x2) { return true_similarity(truth, x, x2); }, spec)});

  auto add_model = [&](const std::string& title, const SimilarityModel& m) {
    panels.push_back({title, evaluate_slice([&](auto x, auto x2) { return similarity(m, x, x2); }, spec)});
  };
  for (const auto& path : s.models) {
    const auto m = load_model(path);
    add_model(std::string(to_string(head_of(m))) + " (" + std::filesystem::path(path).filename().string() + ")", m);
  }
  if (s.fit) {
    const auto ds = synth_dataset(spec_ds);
    for (Head h : {Head::Ips, Head::Sips}) {
      SimilarityModel m;
      const auto row = run_cell(c, ds, s.kernel, h, s.units, s.dim, 0, &m);
      std::fprintf(stderr, "%s T=%zu K=%zu mspe=%.6g %s\n", row.model.c_str(), s.units, s.dim, row.mspe,
                   row.status.c_str());
      add_model(std::string(to_string(h)) + " fit", m);
      if (!s.save_dir.empty()) {
        std::filesystem::create_directories(s.save_dir);
        save_model(m, s.save_dir + "/" + s.kernel + "_" + to_string(h) + ".json");
      }
    }
  }
  write_text(out, slice_svg(panels, spec));
  std::fprintf(stderr, "wrote %s (%zu panels)\n", out.c_str(), panels.size());
  return kExitOk;
}

int cmd_plot(const std::string& in, const std::string& out) {
  const auto rows = read_results_csv(in);
  write_text(out, curves_svg(summarize(rows)));
  std::fprintf(stderr, "wrote %s\n", out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cpdlab: similarity models over CPD kernels"};
  app.require_subcommand(1);

  GridFlags grid;
  std::string export_dir;
  auto* train = app.add_subcommand("train", "Run the experiment grid and write a results CSV");
  grid.attach(train);
  train->add_option("--export-data", export_dir, "Also write each (kernel, run) dataset as CSV into this directory");

  GridFlags lb_flags;
  std::size_t lb_p = 2, lb_mc = 100000;
  double lb_m = 1.0;
  bool lb_check = false;
  auto* lower = app.add_subcommand("lower-bound", "Train IPS on -||x-x'||^2 and compare its error to 2pM^2/3");
  lb_flags.attach(lower);
  lower->add_option("--p", lb_p, "Input dimension")->check(CLI::PositiveNumber);
  lower->add_option("--M", lb_m, "Half-width of the input box")->check(CLI::PositiveNumber);
  lower->add_option("--n-mc", lb_mc, "Monte-Carlo pairs");
  lower->add_flag("--check", lb_check, "Exit 2 unless every MAE clears 0.95 x bound");

  std::size_t audit_n = 50;
  std::optional<std::uint64_t> audit_seed;
  std::string audit_out;
  bool audit_check = false;
  auto* audit = app.add_subcommand("audit", "Certify the kernel zoo and replay the counterexamples");
  audit->add_option("--n", audit_n, "Points per Gram")->check(CLI::Range(2, 100000));
  audit->add_option("--seed", audit_seed, "Seed (default $CPDLAB_SEED or 0)");
  audit->add_option("--out", audit_out, "JSON report path (default stdout)");
  audit->add_flag("--check", audit_check, "Exit 2 if the verdicts differ from the expected table");

  GridFlags slice_flags;
  SliceFlags sf;
  auto* slice = app.add_subcommand("slice", "Heatmap of h(s e1, t e2): truth, saved models, optional fits");
  slice_flags.attach(slice);
  slice->add_option("--kernel", sf.kernel, "Ground-truth kernel");
  slice->add_option("--model", sf.models, "Saved model JSON (repeatable)");
  slice->add_flag("--fit", sf.fit, "Train IPS and SIPS on the kernel and add their panels");
  slice->add_option("--units", sf.units, "Hidden units for --fit");
  slice->add_option("--dim", sf.dim, "Feature dimension K for --fit");
  slice->add_option("--save-fits", sf.save_dir, "Write the --fit models as JSON into this directory");
  slice->add_option("--grid", sf.grid, "Grid resolution")->check(CLI::Range(2, 2000));
  slice->add_option("--dir1", sf.dir1, "Coordinate index of e1");
  slice->add_option("--dir2", sf.dir2, "Coordinate index of e2");

  std::string plot_in = "results.csv", plot_out = "curves.svg";
  auto* plot = app.add_subcommand("plot", "MSPE against K from a results CSV");
  plot->add_option("--in", plot_in, "Results CSV")->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "SVG path");

  std::optional<std::uint64_t> rc_seed;
  std::size_t rc_pairs = 100;
  bool rc_check = false;
  auto* rc = app.add_subcommand("reduce-check", "C-SIPS -> SIPS -> MIPS identities, max deviation");
  rc->add_option("--seed", rc_seed, "Seed (default $CPDLAB_SEED or 0)");
  rc->add_option("--pairs", rc_pairs, "Random pairs per identity")->check(CLI::PositiveNumber);
  rc->add_flag("--check", rc_check, "Exit 2 if any deviation exceeds 1e-12");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(grid, export_dir);
    if (*lower) return cmd_lower_bound(lb_flags, lb_p, lb_m, lb_mc, lb_check);
    if (*audit) return cmd_audit(audit_n, audit_seed, audit_out, audit_check);
    if (*slice) return cmd_slice(slice_flags, sf);
    if (*plot) return cmd_plot(plot_in, plot_out);
    if (*rc) return cmd_reduce_check(rc_seed, rc_pairs, rc_check);
  } catch (const Error& e) {
    std::fprintf(stderr, "cpdlab: %s [%s]\n", e.what(), to_string(e.code()));
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cpdlab: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
