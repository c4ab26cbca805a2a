#include "cpdlab/sampling.hpp"

#include <cmath>

#include "cpdlab/error.hpp"

namespace cpdlab {

Matrix sample_uniform_box(Rng& rng, std::size_t n, std::size_t p, double half_width) {
  if (n == 0 || p == 0) throw Error(ErrorCode::InvalidArgument, "sample_uniform_box: n and p must be >= 1");
  if (!(half_width > 0.0)) throw Error(ErrorCode::InvalidArgument, "sample_uniform_box: half-width must be > 0");
  Matrix x(n, p);
  for (double& v : x.data()) v = rng.uniform(-half_width, half_width);
  return x;
}

Matrix sample_ball_beta(Rng& rng, std::size_t n, std::size_t p) {
  if (n == 0 || p == 0) throw Error(ErrorCode::InvalidArgument, "sample_ball_beta: n and p must be >= 1");
  Matrix x(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = x.row(i);
    // Resample when the direction underflows or rounding pushes the norm to 1.
    for (;;) {
      for (double& v : row) v = rng.normal();
      const double norm = std::sqrt(squared_norm(row));
      const double radius = rng.beta_a1(5.0);
      if (!(norm > 0.0)) continue;
      for (double& v : row) v *= radius / norm;
      if (squared_norm(row) < 1.0) break;
    }
  }
  return x;
}

}  // namespace cpdlab
