#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cpdlab/matrix.hpp"
#include "cpdlab/rng.hpp"

namespace cpdlab {

enum class Activation { ReLU, Sigmoid, Tanh };

const char* to_string(Activation a);
Activation parse_activation(std::string_view name);

/// Elementwise activation and its derivative (ReLU'(0) is taken as 0).
double activate(Activation a, double z);
double activate_derivative(Activation a, double z);

/// Two-layer network x -> A * act(B x + c).
struct MlpParams {
  Matrix A;               // K x T
  Matrix B;               // T x p
  std::vector<double> c;  // T
  Activation activation = Activation::ReLU;

  std::size_t input_dim() const noexcept { return B.cols(); }
  std::size_t hidden() const noexcept { return B.rows(); }
  std::size_t output_dim() const noexcept { return A.rows(); }
};

/// Free embedding vectors: f(x) = table^T x. With a 1-hot x for node i this
/// returns row i, which is the matrix-decomposition feature map.
struct LookupTable {
  Matrix table;  // n x K

  std::size_t input_dim() const noexcept { return table.rows(); }
  std::size_t output_dim() const noexcept { return table.cols(); }
};

using FeatureMap = std::variant<MlpParams, LookupTable>;

std::size_t input_dim(const FeatureMap& f);
std::size_t output_dim(const FeatureMap& f);
std::size_t parameter_count(const FeatureMap& f);

struct IpsModel {
  FeatureMap f;
};
/// <f(x), f(x')> + u(x) + u(x'), u has one output.
struct SipsModel {
  FeatureMap f;
  FeatureMap u;
};
/// <f(x), f(x')> - gamma
struct CsipsModel {
  FeatureMap f;
  double gamma = 0.0;
};
/// <f+(x), f+(x')> - <r-(x), r-(x')>
struct MipsModel {
  FeatureMap f_plus;
  FeatureMap r_minus;
};

using SimilarityModel = std::variant<IpsModel, SipsModel, CsipsModel, MipsModel>;

enum class Head { Ips, Sips, Csips, Mips };
enum class FeatureKind { Mlp, Lookup };

const char* to_string(Head h);
Head parse_head(std::string_view name);
Head head_of(const SimilarityModel& m);

/// Checks the structural invariants (matching input dims, scalar SIPS
/// offset, consistent MLP shapes). Throws DimMismatch.
void validate(const SimilarityModel& m);

// ---------------------------------------------------------------------------
// Initialisation: Glorot-uniform weights, zero biases, gamma = 0, lookup rows
// N(0, 0.1^2 / K).

MlpParams init_mlp(Rng& rng, std::size_t p, std::size_t hidden, std::size_t k, Activation act);
LookupTable init_lookup(Rng& rng, std::size_t n, std::size_t k);

struct ModelShape {
  Head head = Head::Ips;
  FeatureKind kind = FeatureKind::Mlp;
  std::size_t input_dim = 5;  // p for MLPs, node count for lookup tables
  std::size_t hidden = 100;   // T, ignored for lookup tables
  std::size_t output_dim = 4; // K (K+ for MIPS)
  std::size_t minus_dim = 0;  // K- for MIPS; 0 means "same as K"
  Activation activation = Activation::ReLU;
};

SimilarityModel make_model(const ModelShape& shape, Rng& rng);

// ---------------------------------------------------------------------------
// Forward / backward on single inputs.

struct MlpCache {
  std::vector<double> pre;     // B x + c
  std::vector<double> hidden;  // act(pre)
  std::vector<double> out;     // A hidden
};

MlpCache mlp_forward(const MlpParams& m, std::span<const double> x);

struct MlpGrads {
  Matrix A;
  Matrix B;
  std::vector<double> c;
  std::vector<double> x;
};

/// Exact gradients of <upstream, m(x)> with respect to A, B, c and x.
MlpGrads mlp_backward(const MlpParams& m, std::span<const double> x, const MlpCache& cache,
                      std::span<const double> upstream);

std::vector<double> feature_forward(const FeatureMap& f, std::span<const double> x);

double ips(const IpsModel& m, std::span<const double> x, std::span<const double> x2);
double sips(const SipsModel& m, std::span<const double> x, std::span<const double> x2);
double csips(const CsipsModel& m, std::span<const double> x, std::span<const double> x2);
double mips(const MipsModel& m, std::span<const double> x, std::span<const double> x2);
double similarity(const SimilarityModel& m, std::span<const double> x, std::span<const double> x2);

/// MIPS with f+(x) = (f(x), u(x), 1) and r-(x) = u(x) - 1, which equals the
/// SIPS model identically. Both maps of `s` must be the same kind; the
/// constant coordinate comes from one extra hidden unit with zero input
/// weights.
MipsModel sips_to_mips(const SipsModel& s);

// ---------------------------------------------------------------------------
// Flat parameter view. Order: per head the maps in declaration order
// (IPS: f; SIPS: f, u; C-SIPS: f, gamma; MIPS: f+, r-), and per MLP A, B, c
// row-major.

struct Gradients {
  std::vector<double> values;
};

std::size_t parameter_count(const SimilarityModel& m);

/// Weight: A, B and lookup tables. Bias: hidden biases c. Gamma: the C-SIPS
/// offset. `offset_map` marks parameters of SIPS's u and MIPS's r-.
enum class ParamGroup { Weight, Bias, Gamma };
struct ParamTag {
  ParamGroup group;
  bool offset_map;
};
std::vector<ParamTag> parameter_tags(const SimilarityModel& m);

std::vector<double> flatten_parameters(const SimilarityModel& m);
void assign_parameters(SimilarityModel& m, std::span<const double> theta);

/// d(upstream * h(x, x'))/d(theta) for a single pair. When x and x' pass
/// through the same map both paths are accumulated.
Gradients pair_gradient(const SimilarityModel& m, std::span<const double> x,
                        std::span<const double> x2, double upstream);

// ---------------------------------------------------------------------------
// Batched evaluation over the rows of an input matrix. Each output entry is
// a fixed-order sum, so the OpenMP versions match a single thread bit for bit.

struct BatchCache {
  Matrix pre;     // n x T (MLP only)
  Matrix hidden;  // n x T (MLP only)
  Matrix out;     // n x K
};

BatchCache feature_forward_batch(const FeatureMap& f, const Matrix& x);

/// Accumulates d(sum_i <upstream_i, f(x_i)>)/d(params) into `grad`, a span
/// of length parameter_count(f).
void feature_backward_batch(const FeatureMap& f, const Matrix& x, const BatchCache& cache,
                            const Matrix& upstream, std::span<double> grad);

// ---------------------------------------------------------------------------
// Serialisation: a versioned JSON document with a header
// {head, feature_map, p, K, T, activation} followed by every map's
// parameter arrays in declaration order.

std::string model_to_json(const SimilarityModel& m);
SimilarityModel model_from_json(std::string_view text);
void save_model(const SimilarityModel& m, const std::string& path);
SimilarityModel load_model(const std::string& path);

}  // namespace cpdlab
