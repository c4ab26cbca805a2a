#include "cpdlab/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "cpdlab/error.hpp"

namespace cpdlab {

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string fmt(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

// Blue (low) - white - red (high) ramp on [0, 1].
std::string ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  int r, g, b;
  if (t < 0.5) {
    const double u = t / 0.5;
    r = static_cast<int>(std::lround(33 + u * (247 - 33)));
    g = static_cast<int>(std::lround(102 + u * (247 - 102)));
    b = static_cast<int>(std::lround(172 + u * (247 - 172)));
  } else {
    const double u = (t - 0.5) / 0.5;
    r = static_cast<int>(std::lround(247 + u * (178 - 247)));
    g = static_cast<int>(std::lround(247 + u * (24 - 247)));
    b = static_cast<int>(std::lround(247 + u * (43 - 247)));
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

Matrix evaluate_slice(const PairFunction& h, const SliceSpec& spec) {
  if (spec.grid < 2) throw Error(ErrorCode::InvalidArgument, "slice: grid resolution must be >= 2");
  if (spec.dir1 >= spec.p || spec.dir2 >= spec.p) throw Error(ErrorCode::DimMismatch, "slice: direction outside input dimension");
  Matrix values(spec.grid, spec.grid);
  std::vector<double> x(spec.p, 0.0), x2(spec.p, 0.0);
  const double last = static_cast<double>(spec.grid - 1);
  for (std::size_t a = 0; a < spec.grid; ++a) {
    const double s = -spec.half_width + 2.0 * spec.half_width * static_cast<double>(a) / last;
    std::fill(x.begin(), x.end(), 0.0);
    x[spec.dir1] = s;
    for (std::size_t b = 0; b < spec.grid; ++b) {
      const double t = -spec.half_width + 2.0 * spec.half_width * static_cast<double>(b) / last;
      std::fill(x2.begin(), x2.end(), 0.0);
      x2[spec.dir2] = t;
      values(a, b) = h(x, x2);
    }
  }
  return values;
}

std::string slice_svg(const std::vector<SlicePanel>& panels, const SliceSpec& spec) {
  if (panels.empty()) throw Error(ErrorCode::InvalidArgument, "slice: no panels");
  double lo = HUGE_VAL, hi = -HUGE_VAL;
  for (const auto& p : panels)
    for (double v : p.values.data())
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!(hi > lo)) hi = lo + 1.0;

  const double size = 300.0, margin = 40.0, gap = 30.0;
  const double width = margin * 2 + panels.size() * size + (panels.size() - 1) * gap;
  const double height = size + margin * 2 + 40.0;
  const double cell = size / static_cast<double>(spec.grid);

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width, 6) << "\" height=\"" << fmt(height, 6)
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const auto& p = panels[k];
    if (p.values.rows() != spec.grid || p.values.cols() != spec.grid)
      throw Error(ErrorCode::DimMismatch, "slice: panel does not match the grid");
    const double x0 = margin + k * (size + gap);
    const double y0 = margin;
    os << "<g class=\"panel\">\n<text x=\"" << fmt(x0 + size / 2, 6) << "\" y=\"" << fmt(y0 - 10, 6)
       << "\" text-anchor=\"middle\">" << escape_xml(p.title) << "</text>\n";
    // s runs along x, t along y (upwards).
    for (std::size_t a = 0; a < spec.grid; ++a)
      for (std::size_t b = 0; b < spec.grid; ++b) {
        const double v = p.values(a, b);
        const double t = std::isfinite(v) ? (v - lo) / (hi - lo) : 0.5;
        os << "<rect class=\"cell\" x=\"" << fmt(x0 + a * cell, 6) << "\" y=\""
           << fmt(y0 + (spec.grid - 1 - b) * cell, 6) << "\" width=\"" << fmt(cell + 0.05, 6) << "\" height=\""
           << fmt(cell + 0.05, 6) << "\" fill=\"" << ramp(t) << "\"/>\n";
      }
    os << "<text x=\"" << fmt(x0 + size / 2, 6) << "\" y=\"" << fmt(y0 + size + 18, 6)
       << "\" text-anchor=\"middle\">s (e" << spec.dir1 + 1 << ", " << fmt(-spec.half_width) << " .. "
       << fmt(spec.half_width) << ")</text>\n</g>\n";
  }
  os << "<text x=\"" << fmt(margin, 6) << "\" y=\"" << fmt(height - 12, 6) << "\">colour scale: "
     << escape_xml(fmt(lo)) << " (blue) .. " << escape_xml(fmt(hi)) << " (red); t along e" << spec.dir2 + 1
     << "</text>\n</svg>\n";
  return os.str();
}

std::string curves_svg(const std::vector<CellSummary>& cells) {
  if (cells.empty()) throw Error(ErrorCode::SchemaError, "plot: no result rows");
  std::map<std::pair<std::string, std::size_t>, std::vector<const CellSummary*>> panels;
  for (const auto& c : cells) panels[{c.kernel, c.T}].push_back(&c);

  static const std::map<std::string, std::pair<const char*, const char*>> style = {
      {"ips", {"#000000", "IPS"}}, {"sips", {"#1f4fd1", "SIPS"}}, {"csips", {"#d11f1f", "C-SIPS"}},
      {"mips", {"#1f9d3a", "MIPS"}}};

  const double pw = 320.0, ph = 240.0, margin = 60.0, gap = 50.0;
  const std::size_t cols = std::min<std::size_t>(3, panels.size());
  const std::size_t rows = (panels.size() + cols - 1) / cols;
  const double width = margin * 2 + cols * pw + (cols - 1) * gap;
  const double height = margin * 2 + rows * ph + (rows - 1) * (gap + 20) + 30;

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width, 6) << "\" height=\"" << fmt(height, 6)
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";

  std::size_t idx = 0;
  for (const auto& [key, list] : panels) {
    const double x0 = margin + (idx % cols) * (pw + gap);
    const double y0 = margin + (idx / cols) * (ph + gap + 20);
    ++idx;
    std::size_t kmin = list.front()->K, kmax = list.front()->K;
    double ymax = 0.0;
    for (const auto* c : list) {
      kmin = std::min(kmin, c->K);
      kmax = std::max(kmax, c->K);
      if (std::isfinite(c->mean)) ymax = std::max(ymax, c->mean + c->stddev);
    }
    if (!(ymax > 0.0)) ymax = 1.0;
    auto px = [&](std::size_t k) {
      if (kmax == kmin) return x0 + pw / 2;
      return x0 + pw * static_cast<double>(k - kmin) / static_cast<double>(kmax - kmin);
    };
    auto py = [&](double v) { return y0 + ph - ph * v / ymax; };

    os << "<g class=\"panel\">\n"
       << "<text x=\"" << fmt(x0 + pw / 2, 6) << "\" y=\"" << fmt(y0 - 12, 6) << "\" text-anchor=\"middle\">"
       << escape_xml(key.first) << ", #units=" << key.second << "</text>\n"
       << "<rect x=\"" << fmt(x0, 6) << "\" y=\"" << fmt(y0, 6) << "\" width=\"" << fmt(pw, 6) << "\" height=\""
       << fmt(ph, 6) << "\" fill=\"none\" stroke=\"#888\"/>\n"
       << "<text x=\"" << fmt(x0 - 6, 6) << "\" y=\"" << fmt(y0 + 4, 6) << "\" text-anchor=\"end\">" << fmt(ymax, 3)
       << "</text>\n<text x=\"" << fmt(x0 - 6, 6) << "\" y=\"" << fmt(y0 + ph, 6) << "\" text-anchor=\"end\">0</text>\n"
       << "<text x=\"" << fmt(x0 + pw / 2, 6) << "\" y=\"" << fmt(y0 + ph + 30, 6)
       << "\" text-anchor=\"middle\">K (output dim); y: MSPE</text>\n";
    for (std::size_t k = kmin; k <= kmax; ++k)
      os << "<text x=\"" << fmt(px(k), 6) << "\" y=\"" << fmt(y0 + ph + 14, 6) << "\" text-anchor=\"middle\">" << k
         << "</text>\n";

    std::map<std::string, std::vector<const CellSummary*>> by_model;
    for (const auto* c : list) by_model[c->model].push_back(c);
    for (auto& [model, pts] : by_model) {
      std::sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->K < b->K; });
      const auto it = style.find(model);
      const std::string colour = it != style.end() ? it->second.first : "#777777";
      std::ostringstream line;
      for (const auto* c : pts) {
        if (!std::isfinite(c->mean)) continue;
        line << (line.tellp() > 0 ? " " : "") << fmt(px(c->K), 6) << "," << fmt(py(c->mean), 6);
      }
      os << "<polyline class=\"series\" data-model=\"" << escape_xml(model) << "\" fill=\"none\" stroke=\"" << colour
         << "\" stroke-width=\"1.5\" points=\"" << line.str() << "\"/>\n";
      for (const auto* c : pts) {
        if (!std::isfinite(c->mean)) continue;
        const double x = px(c->K);
        os << "<line class=\"errorbar\" x1=\"" << fmt(x, 6) << "\" x2=\"" << fmt(x, 6) << "\" y1=\""
           << fmt(py(c->mean - c->stddev), 6) << "\" y2=\"" << fmt(py(c->mean + c->stddev), 6) << "\" stroke=\""
           << colour << "\"/>\n"
           << "<circle class=\"point\" cx=\"" << fmt(x, 6) << "\" cy=\"" << fmt(py(c->mean), 6)
           << "\" r=\"3\" fill=\"" << colour << "\" data-mean=\"" << fmt(c->mean, 17) << "\" data-std=\""
           << fmt(c->stddev, 17) << "\"/>\n";
      }
    }
    os << "</g>\n";
  }

  double lx = margin;
  const double ly = height - 15;
  for (const char* model : {"ips", "sips", "csips", "mips"}) {
    const auto& s = style.at(model);
    bool present = false;
    for (const auto& c : cells) present = present || c.model == model;
    if (!present) continue;
    os << "<rect x=\"" << fmt(lx, 6) << "\" y=\"" << fmt(ly - 9, 6) << "\" width=\"10\" height=\"10\" fill=\"" << s.first
       << "\"/><text x=\"" << fmt(lx + 14, 6) << "\" y=\"" << fmt(ly, 6) << "\">" << s.second << "</text>\n";
    lx += 90;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace cpdlab
