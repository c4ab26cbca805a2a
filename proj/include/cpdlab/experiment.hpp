#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "cpdlab/models.hpp"
#include "cpdlab/training.hpp"

namespace cpdlab {

/// Declarative grid: every (kernel, model, T, K, run) cell is trained
/// independently with its own sub-seed.
struct ExperimentConfig {
  std::vector<std::string> kernels = {"cosine", "nsd", "poincare"};
  std::vector<Head> models = {Head::Ips, Head::Sips, Head::Csips};
  std::vector<std::size_t> units = {10, 100, 1000};
  std::vector<std::size_t> dims = {1, 2, 3, 4, 5, 6, 7, 8};
  std::size_t runs = 5;
  Activation activation = Activation::ReLU;

  std::size_t p = 5;
  std::size_t n_train = 200;
  std::size_t n_test = 600;
  double alpha = 1.0;  // neg-dist-alpha
  int q = 1;           // wasserstein1d
  std::optional<double> half_width;

  TrainConfig train;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string out;
};

enum class ScalePreset { Desk, Paper };

/// Desk: n_train 200, n_test 600, 3 runs. Paper: 1000 / 3000, 5 runs.
void apply_preset(ExperimentConfig& config, ScalePreset preset);

/// Reads a JSON document on top of `base`; unknown keys are rejected.
/// Throws ConfigInvalid.
ExperimentConfig parse_experiment_config(const std::string& json_text, ExperimentConfig base = {});
void validate(const ExperimentConfig& config);

struct ResultRow {
  std::string kernel;
  std::string model;
  std::size_t T = 0;
  std::size_t K = 0;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  double mspe = 0.0;
  double final_train_loss = 0.0;
  std::optional<double> gamma;
  double wall_ms = 0.0;
  std::string status = "ok";  // "ok" or "diverged"
};

using CellKey = std::tuple<std::string, std::string, std::size_t, std::size_t, std::size_t>;
CellKey key_of(const ResultRow& row);

inline constexpr const char* kResultsSchema = "cpdlab.results.v1";

/// First line "#schema=cpdlab.results.v1", second the column header.
std::string results_csv_header();
std::string format_result_row(const ResultRow& row);
/// Throws SchemaError on a missing schema line or malformed rows.
std::vector<ResultRow> read_results_csv(const std::string& path);

std::uint64_t dataset_seed(std::uint64_t seed, const std::string& kernel, std::size_t run);
std::uint64_t cell_seed(std::uint64_t seed, const std::string& kernel, Head model, std::size_t T,
                        std::size_t K, std::size_t run);

DatasetSpec dataset_spec_for(const ExperimentConfig& config, const std::string& kernel, std::size_t run);

/// Trains one cell; divergence is recorded in the row rather than thrown.
/// When `trained` is given it receives the final model.
ResultRow run_cell(const ExperimentConfig& config, const Dataset& dataset, const std::string& kernel,
                   Head model, std::size_t T, std::size_t K, std::size_t run,
                   SimilarityModel* trained = nullptr);

/// Runs the whole grid. With a non-empty `config.out` rows are appended to
/// that CSV as they finish and cells already present are skipped; the
/// summary goes to `<out>.summary.json`. Returns every row of the grid,
/// including resumed ones.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config,
                                      const std::function<void(const ResultRow&)>& on_row = {});

struct CellSummary {
  std::string kernel;
  std::string model;
  std::size_t T = 0;
  std::size_t K = 0;
  std::size_t runs = 0;
  double mean = 0.0;
  /// Sample standard deviation (n - 1); 0 for a single run.
  double stddev = 0.0;
};

/// Mean and std of mspe per (kernel, model, T, K), diverged runs excluded.
std::vector<CellSummary> summarize(const std::vector<ResultRow>& rows);
std::string summary_json(const std::vector<CellSummary>& cells);

}  // namespace cpdlab
