#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cpdlab/error.hpp"
#include "cpdlab/kernels.hpp"
#include "cpdlab/matrix.hpp"
#include "cpdlab/models.hpp"
#include "cpdlab/rng.hpp"

namespace cpdlab {

// ---------------------------------------------------------------------------
// Pair-indexed values over all unordered pairs i < j of n points, packed row
// by row: (0,1), (0,2), ..., (0,n-1), (1,2), ...

class PairValues {
 public:
  PairValues() = default;
  explicit PairValues(std::size_t n, double fill = 0.0);

  std::size_t points() const noexcept { return n_; }
  std::size_t size() const noexcept { return values_.size(); }

  static std::size_t index(std::size_t i, std::size_t j, std::size_t n) {
    return i * n - i * (i + 1) / 2 + (j - i - 1);
  }
  /// Symmetric access; i != j.
  double operator()(std::size_t i, std::size_t j) const {
    return i < j ? values_[index(i, j, n_)] : values_[index(j, i, n_)];
  }
  double& at(std::size_t i, std::size_t j) { return i < j ? values_[index(i, j, n_)] : values_[index(j, i, n_)]; }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Synthetic data.

enum class InputLaw { UniformBox, BetaBall };

struct DatasetSpec {
  KernelSpec kernel = NsdKernel{};
  FeatureTransform fstar = FeatureTransform::PaperMap4D;
  std::size_t p = 5;
  std::size_t n_train = 200;
  std::size_t n_test = 600;
  InputLaw input_law = InputLaw::UniformBox;
  double half_width = 2.0;
  std::uint64_t seed = 0;
};

/// Per-kernel defaults: poincare draws Beta-radius points in the unit ball
/// with the identity feature map, everything else draws from [-2, 2]^5
/// through the 4-dimensional ground-truth map.
DatasetSpec default_dataset_spec(const KernelSpec& kernel, std::uint64_t seed = 0);

struct Split {
  Matrix x;
  PairValues h_star;
  /// Observed binary/count weights, filled by `attach_graph`.
  std::optional<PairValues> weights;
};

struct Dataset {
  GroundTruthSpec truth;
  Split train;
  Split test;
};

/// Train and test inputs come from disjoint substreams of spec.seed.
Dataset synth_dataset(const DatasetSpec& spec);

/// h*_ij for every pair of rows of x.
PairValues true_pair_values(const GroundTruthSpec& truth, const Matrix& x);

// ---------------------------------------------------------------------------
// Losses.

struct L2Groups {
  bool weights = true;
  bool biases = true;
  bool offset_maps = true;
  bool gamma = true;
};

struct LossAndGrad {
  /// Data term plus penalty.
  double loss = 0.0;
  double data_loss = 0.0;
  double penalty = 0.0;
  Gradients grads;
};

/// Mean over pairs of (h*_ij - h(x_i, x_j))^2 plus l2 * sum(theta^2).
LossAndGrad mse_loss_and_grad(const SimilarityModel& m, const Matrix& x, const PairValues& h_star,
                              double l2, const L2Groups& groups = {});

/// Mean binary cross-entropy of sigmoid(h_ij) against w_ij in {0, 1}, plus
/// the same penalty. Throws NonBinaryWeight.
LossAndGrad logistic_loss_and_grad(const SimilarityModel& m, const Matrix& x, const PairValues& w,
                                   double l2, const L2Groups& groups = {});

/// Single-threaded per-pair references built from `pair_gradient`. They are
/// quadratic in n times the network cost and exist to check the batched
/// versions.
LossAndGrad mse_loss_and_grad_reference(const SimilarityModel& m, const Matrix& x,
                                        const PairValues& h_star, double l2, const L2Groups& groups = {});
LossAndGrad logistic_loss_and_grad_reference(const SimilarityModel& m, const Matrix& x,
                                             const PairValues& w, double l2,
                                             const L2Groups& groups = {});

/// h(x_i, x_j) for all pairs.
PairValues predict_pairs(const SimilarityModel& m, const Matrix& x);

/// Mean squared prediction error over all pairs; no penalty.
double mspe(const SimilarityModel& m, const Matrix& x, const PairValues& h_star);

// ---------------------------------------------------------------------------
// Optimisation.

enum class LossKind { Mse, Logistic };

struct LrSchedule {
  enum class Mode { PaperLiteral, StepFloor };
  Mode mode = Mode::StepFloor;
  double gamma_step = 0.5;
  std::size_t period = 1000;
  double lr_min = 1e-6;
};

/// PaperLiteral: lr0 * 0.1^floor(iter / 100).
/// StepFloor: max(lr_min, lr0 * gamma_step^floor(iter / period)).
double lr_schedule(std::size_t iter, double lr0, const LrSchedule& schedule);

struct TrainConfig {
  std::size_t iterations = 10000;
  double lr0 = 0.001;
  LrSchedule schedule;
  double l2 = 0.01;
  L2Groups l2_groups;
  LossKind loss = LossKind::Mse;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kTraceEvery = 100;

struct TrainReport {
  /// Objective at iterations 0, 100, 200, ..., length iterations / 100 + 1.
  std::vector<double> loss_trace;
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;
  double final_data_loss = 0.0;
  double mspe_test = 0.0;
  double wall_ms = 0.0;
  std::optional<double> gamma;
  std::size_t iterations_run = 0;
};

/// Raised when the objective stops being finite; carries the trace so far.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, TrainReport partial)
      : Error(ErrorCode::DivergenceDetected, what), report_(std::move(partial)) {}
  const TrainReport& report() const noexcept { return report_; }

 private:
  TrainReport report_;
};

/// Full-batch gradient descent over every training pair, then MSPE on the
/// test pairs. Logistic training needs `dataset.train.weights`.
TrainReport gd_train(SimilarityModel& m, const Dataset& dataset, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Generative graph sampling.

enum class GraphMode { Bernoulli, Poisson };

/// w_ij ~ Bern(sigmoid(h_ij)) or Po(exp(h_ij)); symmetric with w_ii = 0 by
/// construction. Poisson throws OverflowGuard when exp(h) > 1e9.
PairValues sample_graph(const PairValues& h, GraphMode mode, Rng& rng);
PairValues sample_graph(const SimilarityModel& m, const Matrix& x, GraphMode mode, Rng& rng);

/// Samples Bernoulli/Poisson weights from the training h* into train.weights.
void attach_graph(Dataset& dataset, GraphMode mode, Rng& rng);

// ---------------------------------------------------------------------------
// CSV exchange.
//
// inputs: header "split,index,x1,...,xp", one row per input vector.
// pairs:  header "split,i,j,h_star", one row per unordered pair i < j.
// split is "train" or "test".

void export_dataset_csv(const Dataset& dataset, const std::string& inputs_path,
                        const std::string& pairs_path);
Dataset import_dataset_csv(const std::string& inputs_path, const std::string& pairs_path);

}  // namespace cpdlab
