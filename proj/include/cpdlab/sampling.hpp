#pragma once

#include <cstddef>

#include "cpdlab/matrix.hpp"
#include "cpdlab/rng.hpp"

namespace cpdlab {

/// n rows drawn i.i.d. uniform on [-half_width, half_width]^p.
Matrix sample_uniform_box(Rng& rng, std::size_t n, std::size_t p, double half_width);

/// n rows x = r * z / ||z|| with z ~ N_p(0, I) and r ~ Beta(5, 1); ||x|| < 1.
Matrix sample_ball_beta(Rng& rng, std::size_t n, std::size_t p);

}  // namespace cpdlab
