#include "mfos/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mfos::report {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string esc(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  if (v != 0.0 && (std::abs(v) < 1e-3 || std::abs(v) >= 1e4)) {
    std::snprintf(buf, sizeof buf, "%.0e", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.4g", v);
  }
  return buf;
}

std::string header(int w, int h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + std::to_string(w) + "\" height=\"" +
         std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

// Linear or log axis mapping data values to pixels.
struct Axis {
  double lo = 0.0, hi = 1.0;
  double p0 = 0.0, p1 = 1.0;
  bool log = false;

  double map(double v) const {
    const double a = log ? std::log10(v) : v;
    const double l = log ? std::log10(lo) : lo;
    const double h = log ? std::log10(hi) : hi;
    return p0 + (a - l) / (h - l) * (p1 - p0);
  }

  std::vector<double> ticks() const {
    std::vector<double> t;
    if (log) {
      for (double e = std::floor(std::log10(lo)); e <= std::ceil(std::log10(hi)); e += 1.0) {
        const double v = std::pow(10.0, e);
        if (v >= lo * (1 - 1e-9) && v <= hi * (1 + 1e-9)) t.push_back(v);
      }
      if (t.size() < 3) {
        t.clear();
        for (double e = std::floor(std::log10(lo)); e <= std::ceil(std::log10(hi)); e += 1.0)
          for (double m : {1.0, 2.0, 5.0}) {
            const double v = m * std::pow(10.0, e);
            if (v >= lo * (1 - 1e-9) && v <= hi * (1 + 1e-9)) t.push_back(v);
          }
      }
      if (t.size() < 2) t = {lo, hi};
      return t;
    }
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
      if (raw <= m * mag) {
        step = m * mag;
        break;
      }
    for (double v = std::ceil(lo / step) * step; v <= hi + step * 1e-9; v += step) t.push_back(std::abs(v) < step * 1e-9 ? 0.0 : v);
    return t;
  }
};

void range_of(const std::vector<double>& v, bool log, double& lo, double& hi) {
  for (double a : v) {
    if (!std::isfinite(a) || (log && a <= 0.0)) continue;
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
}

Axis finish_axis(double lo, double hi, bool log, double p0, double p1, bool pad) {
  if (!(lo <= hi)) {
    lo = log ? 1.0 : 0.0;
    hi = log ? 10.0 : 1.0;
  }
  if (lo == hi) {
    if (log) {
      lo /= 2.0;
      hi *= 2.0;
    } else {
      lo -= 0.5;
      hi += 0.5;
    }
  } else if (pad && !log) {
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
  }
  return {lo, hi, p0, p1, log};
}

void frame(std::ostringstream& s, const Axis& ax, const Axis& ay, const ChartOptions& opt, int w, int h) {
  s << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << esc(opt.title) << "</text>\n";
  s << "<rect x=\"" << num(ax.p0) << "\" y=\"" << num(ay.p1) << "\" width=\"" << num(ax.p1 - ax.p0) << "\" height=\""
    << num(ay.p0 - ay.p1) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (double t : ax.ticks()) {
    const double px = ax.map(t);
    s << "<line x1=\"" << num(px) << "\" y1=\"" << num(ay.p0) << "\" x2=\"" << num(px) << "\" y2=\"" << num(ay.p0 + 4)
      << "\" stroke=\"#444\"/>\n";
    s << "<text x=\"" << num(px) << "\" y=\"" << num(ay.p0 + 16) << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
  }
  for (double t : ay.ticks()) {
    const double py = ay.map(t);
    s << "<line x1=\"" << num(ax.p0) << "\" y1=\"" << num(py) << "\" x2=\"" << num(ax.p1) << "\" y2=\"" << num(py)
      << "\" stroke=\"#eee\"/>\n";
    s << "<text x=\"" << num(ax.p0 - 6) << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
  }
  s << "<text x=\"" << num((ax.p0 + ax.p1) / 2) << "\" y=\"" << h - 8 << "\" text-anchor=\"middle\">" << esc(opt.x_label)
    << "</text>\n";
  s << "<text x=\"14\" y=\"" << num((ay.p0 + ay.p1) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << num((ay.p0 + ay.p1) / 2) << ")\">" << esc(opt.y_label) << "</text>\n";
}

// One row of entries, laid out left to right from x.
void legend(std::ostringstream& s, const std::vector<std::string>& names, double x, double y) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    s << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 8) << "\" width=\"10\" height=\"10\" fill=\""
      << kPalette[i % 8] << "\"/>\n";
    s << "<text x=\"" << num(x + 14) << "\" y=\"" << num(y + 1) << "\">" << esc(names[i]) << "</text>\n";
    x += 30.0 + 6.5 * static_cast<double>(names[i].size());
  }
}

}  // namespace

std::string line_chart(const std::vector<Series>& series, const ChartOptions& opt) {
  const int w = opt.width, h = opt.height;
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("line_chart: x/y size mismatch in " + s.name);
    range_of(s.x, opt.log_x, xlo, xhi);
    range_of(s.y, opt.log_y, ylo, yhi);
  }
  if (opt.reference) range_of({*opt.reference}, opt.log_y, ylo, yhi);
  const Axis ax = finish_axis(xlo, xhi, opt.log_x, 70, w - 20, false);
  const Axis ay = finish_axis(ylo, yhi, opt.log_y, h - 45, 46, true);
  std::ostringstream s;
  s << header(w, h);
  frame(s, ax, ay, opt, w, h);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& se = series[k];
    std::string path;
    bool pen_down = false;
    for (std::size_t i = 0; i < se.x.size(); ++i) {
      const bool ok = std::isfinite(se.x[i]) && std::isfinite(se.y[i]) && (!opt.log_x || se.x[i] > 0) &&
                      (!opt.log_y || se.y[i] > 0);
      if (!ok) {
        pen_down = false;
        continue;
      }
      path += (pen_down ? " L" : " M") + num(ax.map(se.x[i])) + " " + num(ay.map(se.y[i]));
      pen_down = true;
    }
    s << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << kPalette[k % 8] << "\" stroke-width=\"1.5\"/>\n";
    if (se.x.size() <= 12)
      for (std::size_t i = 0; i < se.x.size(); ++i)
        if (std::isfinite(se.y[i]) && (!opt.log_y || se.y[i] > 0))
          s << "<circle cx=\"" << num(ax.map(se.x[i])) << "\" cy=\"" << num(ay.map(se.y[i])) << "\" r=\"3\" fill=\""
            << kPalette[k % 8] << "\"/>\n";
  }
  if (opt.reference) {
    const double py = ay.map(*opt.reference);
    s << "<line x1=\"" << num(ax.p0) << "\" y1=\"" << num(py) << "\" x2=\"" << num(ax.p1) << "\" y2=\"" << num(py)
      << "\" stroke=\"black\" stroke-dasharray=\"5,4\"/>\n";
    if (!opt.reference_label.empty())
      s << "<text x=\"" << num(ax.p1 - 4) << "\" y=\"" << num(py - 4) << "\" text-anchor=\"end\">"
        << esc(opt.reference_label) << "</text>\n";
  }
  std::vector<std::string> names;
  for (const auto& se : series) names.push_back(se.name);
  legend(s, names, ax.p0, 36);
  s << "</svg>\n";
  return s.str();
}

std::string stacked_bar_chart(const std::vector<std::string>& categories, const std::vector<Stack>& stacks,
                              const ChartOptions& opt) {
  const int w = opt.width, h = opt.height;
  double top = 0.0;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    double sum = 0.0;
    for (const auto& st : stacks) {
      if (st.values.size() != categories.size()) throw std::invalid_argument("stacked_bar_chart: size mismatch");
      sum += std::max(0.0, st.values[c]);
    }
    top = std::max(top, sum);
  }
  const Axis ay = finish_axis(0.0, top > 0 ? top * 1.05 : 1.0, false, h - 45, 46, false);
  const double x0 = 60, x1 = w - 15;
  const Axis ax{0.0, 1.0, x0, x1, false};
  std::ostringstream s;
  s << header(w, h);
  s << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << esc(opt.title) << "</text>\n";
  for (double t : ay.ticks()) {
    const double py = ay.map(t);
    s << "<line x1=\"" << num(x0) << "\" y1=\"" << num(py) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(py)
      << "\" stroke=\"#eee\"/>\n";
    s << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
  }
  const double slot = (x1 - x0) / static_cast<double>(std::max<std::size_t>(categories.size(), 1));
  for (std::size_t c = 0; c < categories.size(); ++c) {
    double base = 0.0;
    const double bx = x0 + slot * static_cast<double>(c) + slot * 0.15;
    for (std::size_t k = 0; k < stacks.size(); ++k) {
      const double v = std::max(0.0, stacks[k].values[c]);
      const double ytop = ay.map(base + v);
      const double ybot = ay.map(base);
      s << "<rect x=\"" << num(bx) << "\" y=\"" << num(ytop) << "\" width=\"" << num(slot * 0.7) << "\" height=\""
        << num(ybot - ytop) << "\" fill=\"" << kPalette[k % 8] << "\"/>\n";
      base += v;
    }
    s << "<text x=\"" << num(bx + slot * 0.35) << "\" y=\"" << num(ay.p0 + 14) << "\" text-anchor=\"middle\">"
      << esc(categories[c]) << "</text>\n";
  }
  s << "<line x1=\"" << num(x0) << "\" y1=\"" << num(ay.p0) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(ay.p0)
    << "\" stroke=\"#444\"/>\n";
  s << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << h - 8 << "\" text-anchor=\"middle\">" << esc(opt.x_label)
    << "</text>\n";
  std::vector<std::string> names;
  for (const auto& st : stacks) names.push_back(st.name);
  legend(s, names, x0, 36);
  (void)ax;
  s << "</svg>\n";
  return s.str();
}

std::string heatmap(const std::vector<double>& values, std::size_t width, std::size_t height, double vmin,
                    double vmax, const ChartOptions& opt) {
  if (values.size() != width * height) throw std::invalid_argument("heatmap: value count does not match the grid");
  const int w = opt.width, h = opt.height;
  const double x0 = 10, y0 = 28, size = std::min(w - 20.0, h - 38.0);
  const double cw = size / static_cast<double>(width);
  const double ch = size / static_cast<double>(height);
  std::ostringstream s;
  s << header(w, h);
  s << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"12\">" << esc(opt.title) << "</text>\n";
  const double span = vmax > vmin ? vmax - vmin : 1.0;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double v = std::clamp((values[r * width + c] - vmin) / span, 0.0, 1.0);
      // White to dark blue.
      const int red = static_cast<int>(std::lround(255 * (1 - v) + 8 * v));
      const int green = static_cast<int>(std::lround(255 * (1 - v) + 48 * v));
      const int blue = static_cast<int>(std::lround(255 * (1 - v) + 107 * v));
      char fill[16];
      std::snprintf(fill, sizeof fill, "#%02x%02x%02x", red, green, blue);
      const double py = y0 + size - ch * static_cast<double>(r + 1);
      s << "<rect x=\"" << num(x0 + cw * static_cast<double>(c)) << "\" y=\"" << num(py) << "\" width=\"" << num(cw)
        << "\" height=\"" << num(ch) << "\" fill=\"" << fill << "\" shape-rendering=\"crispEdges\"/>\n";
    }
  }
  s << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(size) << "\" height=\"" << num(size)
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  s << "</svg>\n";
  return s.str();
}

std::string tile(const std::vector<std::string>& panels, int columns, int panel_width, int panel_height,
                 std::string_view title) {
  if (columns < 1) throw std::invalid_argument("tile: columns must be positive");
  const int rows = static_cast<int>((panels.size() + static_cast<std::size_t>(columns) - 1) / static_cast<std::size_t>(columns));
  const int top = title.empty() ? 0 : 26;
  const int w = columns * panel_width;
  const int h = rows * panel_height + top;
  std::ostringstream s;
  s << header(w, h);
  if (!title.empty())
    s << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << esc(title) << "</text>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) {
    const int c = static_cast<int>(i) % columns;
    const int r = static_cast<int>(i) / columns;
    std::string body = panels[i];
    // Re-root the panel as a nested svg placed at its cell.
    const auto open = body.find("<svg");
    if (open == std::string::npos) throw std::invalid_argument("tile: panel is not an SVG document");
    body.insert(open + 4, " x=\"" + std::to_string(c * panel_width) + "\" y=\"" +
                              std::to_string(top + r * panel_height) + "\"");
    s << body;
  }
  s << "</svg>\n";
  return s.str();
}

std::string trajectory_figure(const Trajectory& traj, const StateSpace& space, int every, std::string_view title) {
  const std::size_t ns = space.size();
  const int step = std::max(every, 1);
  std::vector<std::string> panels;
  if (space.is_grid()) {
    const auto g = *space.geometry();
    double vmax = 0.0;
    for (const auto& nu : traj.distributions)
      for (double m : nu.mass()) vmax = std::max(vmax, m);
    for (std::size_t i = 0; i < traj.distributions.size(); i += static_cast<std::size_t>(step)) {
      const int n = traj.start_time + static_cast<int>(i);
      const auto& nu = traj.distributions[i];
      std::vector<double> stopped(nu.stopped().begin(), nu.stopped().end());
      std::vector<double> alive(nu.alive().begin(), nu.alive().end());
      const auto h = traj.rules[i].expand(ns);
      ChartOptions o;
      o.width = o.height = 200;
      o.title = "stopped, n=" + std::to_string(n);
      panels.push_back(heatmap(stopped, g.width, g.height, 0.0, vmax, o));
      o.title = "continuing, n=" + std::to_string(n);
      panels.push_back(heatmap(alive, g.width, g.height, 0.0, vmax, o));
      o.title = "decision, n=" + std::to_string(n);
      panels.push_back(heatmap(h, g.width, g.height, 0.0, 1.0, o));
    }
    return tile(panels, 3, 200, 200, title);
  }
  std::vector<std::string> labels;
  for (std::size_t x = 0; x < ns; ++x) labels.push_back(space.label(x));
  for (std::size_t i = 0; i < traj.distributions.size(); i += static_cast<std::size_t>(step)) {
    const int n = traj.start_time + static_cast<int>(i);
    const auto& nu = traj.distributions[i];
    ChartOptions o;
    o.width = 320;
    o.height = 220;
    o.title = "n=" + std::to_string(n);
    o.x_label = "state";
    panels.push_back(stacked_bar_chart(labels,
                                       {{"stopped", {nu.stopped().begin(), nu.stopped().end()}},
                                        {"alive", {nu.alive().begin(), nu.alive().end()}}},
                                       o));
  }
  if (traj.final_distribution) {
    const auto& nu = *traj.final_distribution;
    ChartOptions o;
    o.width = 320;
    o.height = 220;
    o.title = "final";
    o.x_label = "state";
    panels.push_back(stacked_bar_chart(labels, {{"stopped", {nu.stopped().begin(), nu.stopped().end()}},
                                                {"alive", {nu.alive().begin(), nu.alive().end()}}},
                                       o));
  }
  return tile(panels, 3, 320, 220, title);
}

void write_text(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("error while writing " + path);
}

}  // namespace mfos::report
