#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cpdlab/definiteness.hpp"
#include "cpdlab/training.hpp"

namespace cpdlab {

// ---------------------------------------------------------------------------
// Inner-product lower bound for the negative squared distance.

/// 2 p M^2 / 3
double nsd_ips_lower_bound(std::size_t p, double half_width);

struct LowerBoundEntry {
  std::size_t T = 0;
  std::size_t K = 0;
  double empirical_mae = 0.0;
  double margin = 0.0;  // mae - bound
  double mspe_test = 0.0;
};

struct LowerBoundReport {
  std::size_t p = 0;
  double half_width = 0.0;
  double bound = 0.0;
  std::size_t n_mc = 0;
  std::vector<LowerBoundEntry> entries;
};

struct LowerBoundConfig {
  std::size_t p = 2;
  double half_width = 1.0;
  std::vector<std::size_t> units = {100};
  std::vector<std::size_t> dims = {2, 8};
  std::size_t n_train = 200;
  std::size_t n_test = 200;
  std::size_t n_mc = 100000;
  TrainConfig train;
  std::uint64_t seed = 0;
};

/// Mean |-||x - x'||^2 - <f(x), f(x')>| over n pairs drawn fresh from
/// Uniform[-M, M]^p.
double ips_nsd_mae(const SimilarityModel& ips_model, std::size_t p, double half_width, std::size_t n_pairs,
                   Rng& rng);

/// Trains IPS on h* = -||x - x'||^2 (identity features, uniform inputs) for
/// every (T, K) and reports its Monte-Carlo mean absolute error against the
/// closed-form bound. Requires n_mc >= 10^4.
LowerBoundReport verify_lower_bound(const LowerBoundConfig& config);
std::string to_json(const LowerBoundReport& report);

// ---------------------------------------------------------------------------
// Definiteness audit of the kernel zoo.

struct AuditEntry {
  std::string kernel;
  std::string params;  // e.g. "alpha=1", "q=2"
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double min_eig = 0.0;
  double centered_min_eig = 0.0;
  bool pd = false;
  bool cpd = false;
  std::optional<CounterexampleRecord> counterexample;
  std::string error;  // non-empty when the kernel raised
};

struct AuditReport {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double tol = 0.0;
  std::vector<AuditEntry> entries;
  CounterexampleRecord poincare_pd;
  CounterexampleRecord jeffreys_cpd;
};

/// Certifies every zoo kernel on n points from its natural sampler, then
/// searches for CPD violations; neg-jeffreys and poincare also carry their
/// known counterexamples.
AuditReport audit_kernels(std::size_t n, std::uint64_t seed, double tol = kDefaultDefinitenessTol);

/// Expected verdicts: cosine PD; nsd, neg-dist-alpha, poincare, wasserstein1d
/// CPD but not PD; neg-jeffreys and epanechnikov not CPD. Returns the list of
/// mismatches (empty when the audit agrees).
std::vector<std::string> audit_mismatches(const AuditReport& report);

std::string to_json(const AuditReport& report);

// ---------------------------------------------------------------------------
// Reduction identities between the heads.

struct ReduceCheckReport {
  std::size_t pairs = 0;
  double csips_vs_sips = 0.0;       // max |C-SIPS(gamma) - SIPS(u = -gamma/2)|
  double sips_vs_mips = 0.0;        // max |SIPS - MIPS(sips_to_mips)| over MLP models
  double sips_vs_mips_lookup = 0.0; // same for lookup tables on 1-hot inputs
};

ReduceCheckReport reduce_check(std::uint64_t seed, std::size_t pairs = 100);
std::string to_json(const ReduceCheckReport& report);

/// SIPS whose offset network outputs -gamma/2 for every input.
SipsModel constant_offset_sips(const CsipsModel& c);

}  // namespace cpdlab
