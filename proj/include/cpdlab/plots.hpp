#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cpdlab/experiment.hpp"
#include "cpdlab/matrix.hpp"

namespace cpdlab {

using PairFunction = std::function<double(std::span<const double>, std::span<const double>)>;

struct SliceSpec {
  std::size_t p = 5;
  std::size_t dir1 = 0;  // coordinate of e1
  std::size_t dir2 = 1;  // coordinate of e2
  double half_width = 2.0;
  std::size_t grid = 50;
};

/// values(a, b) = h(s_a e1, t_b e2) with s, t on an even grid over [-M, M].
Matrix evaluate_slice(const PairFunction& h, const SliceSpec& spec);

struct SlicePanel {
  std::string title;
  Matrix values;
};

/// Heatmaps side by side on a shared colour scale, one <rect class="cell">
/// per grid value.
std::string slice_svg(const std::vector<SlicePanel>& panels, const SliceSpec& spec);

/// MSPE against K, one panel per (kernel, T), one line per model with
/// +-1 std error bars.
std::string curves_svg(const std::vector<CellSummary>& cells);

}  // namespace cpdlab
