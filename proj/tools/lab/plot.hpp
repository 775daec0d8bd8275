#pragma once

// Static figures built from a small set of primitives and rendered to both
// SVG and PNG.

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mosaic::lab {

using Rgb = std::array<unsigned char, 3>;

enum class Anchor { Start, Middle, End };

struct RectShape {
  double x, y, w, h;
  Rgb fill;
  std::optional<Rgb> stroke;
};
struct LineShape {
  double x1, y1, x2, y2;
  Rgb color;
  double width = 1.0;
};
struct CircleShape {
  double cx, cy, r;
  Rgb fill;
};
struct TextShape {
  double x, y;  // baseline
  std::string text;
  double size = 12.0;
  Anchor anchor = Anchor::Start;
  Rgb color{0, 0, 0};
};

class Figure {
 public:
  Figure(int width, int height) : width_(width), height_(height) {}
  void rect(RectShape r) { rects_.push_back(r); order_.push_back({0, rects_.size() - 1}); }
  void line(LineShape l) { lines_.push_back(l); order_.push_back({1, lines_.size() - 1}); }
  void circle(CircleShape c) { circles_.push_back(c); order_.push_back({2, circles_.size() - 1}); }
  void text(TextShape t) { texts_.push_back(std::move(t)); order_.push_back({3, texts_.size() - 1}); }

  std::string to_svg() const;
  void write_svg(const std::filesystem::path& path) const;
  void write_png(const std::filesystem::path& path) const;
  /// Writes <stem>.svg and <stem>.png; returns both file names.
  std::vector<std::string> write(const std::filesystem::path& dir, const std::string& stem) const;

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<RectShape>& rects() const { return rects_; }
  const std::vector<TextShape>& texts() const { return texts_; }

 private:
  int width_, height_;
  std::vector<RectShape> rects_;
  std::vector<LineShape> lines_;
  std::vector<CircleShape> circles_;
  std::vector<TextShape> texts_;
  std::vector<std::pair<int, std::size_t>> order_;  // draw order across primitive kinds
};

/// White-to-blue ramp over [0, 1].
Rgb sequential_color(double t);

/// Each column divided by its sum; all-zero columns stay zero.
Eigen::MatrixXd column_normalize(const Eigen::MatrixXd& A);

/// Latents ordered by their matched true factor, unmatched latents last (by index).
std::vector<int> aligned_order(const std::vector<int>& matched_factor, int n);

struct HeatmapSpec {
  Eigen::MatrixXd values;  // rows × cols, already in display order, in [0, 1]
  std::vector<std::string> row_labels, col_labels;
  std::string title, x_label, y_label;
};
Figure heatmap(const HeatmapSpec& spec);

/// Column-normalized influence with latents ordered by matched factor and
/// scaled so the strongest cell is 1.
Figure influence_heatmap(const Eigen::MatrixXd& A, const std::vector<int>& matched_factor, const std::vector<std::string>& channels);

struct BarSpec {
  std::vector<double> values;
  std::vector<std::string> labels;
  int highlight = -1;
  std::string title, x_label, y_label;
};
Figure bar_chart(const BarSpec& spec);

struct Series {
  std::string name;
  std::vector<double> y, err;  // err may be empty
};
struct LineSpec {
  std::vector<std::string> x_ticks;  // categorical positions, left to right
  std::vector<Series> series;
  std::string title, x_label, y_label;
};
Figure line_chart(const LineSpec& spec);

}  // namespace mosaic::lab
