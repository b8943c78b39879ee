#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mfos/core.hpp"
#include "mfos/mean_field.hpp"

namespace mfos::report {

// RFC 4180 field quoting.
std::string csv_field(std::string_view s);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::optional<double> reference;  // horizontal dashed line
  std::string reference_label;
  int width = 640;
  int height = 400;
};

std::string line_chart(const std::vector<Series>& series, const ChartOptions& opt);

// Stacked bars: one bar per category, one layer per stack entry.
struct Stack {
  std::string name;
  std::vector<double> values;  // one per category
};
std::string stacked_bar_chart(const std::vector<std::string>& categories, const std::vector<Stack>& stacks,
                              const ChartOptions& opt);

// Grid heatmap, values row-major (row * width + col), drawn with row 0 at the
// bottom so the first coordinate runs left to right.
std::string heatmap(const std::vector<double>& values, std::size_t width, std::size_t height, double vmin,
                    double vmax, const ChartOptions& opt);

// Tiles SVG documents into one, row by row.
std::string tile(const std::vector<std::string>& panels, int columns, int panel_width, int panel_height,
                 std::string_view title = {});

// Distribution evolution of a trajectory: stacked stopped/alive bars per
// time step for 1D spaces; stopped / continuing / decision heatmaps for grids,
// one row of panels every `every` steps.
std::string trajectory_figure(const Trajectory& traj, const StateSpace& space, int every, std::string_view title);

void write_text(const std::string& path, std::string_view content);

}  // namespace mfos::report
