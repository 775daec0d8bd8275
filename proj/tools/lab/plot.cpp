#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mosaic/common.hpp"

namespace mosaic::lab {
namespace {

const Rgb kAxis{60, 60, 60};
const Rgb kGrid{225, 225, 225};
const std::vector<Rgb> kPalette{{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40}, {148, 103, 189}, {140, 86, 75}};

std::string hex(const Rgb& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

cv::Scalar bgr(const Rgb& c) { return {static_cast<double>(c[2]), static_cast<double>(c[1]), static_cast<double>(c[0])}; }

// Hershey glyphs are ASCII only.
std::string ascii(const std::string& s) {
  std::string out;
  for (unsigned char ch : s) out.push_back(ch < 128 ? static_cast<char>(ch) : '?');
  return out;
}

std::vector<double> ticks(double lo, double hi, int target = 5) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  return out;
}

void frame_titles(Figure& f, const std::string& title, const std::string& x_label, const std::string& y_label, double plot_left,
                  double plot_right, double x_label_y) {
  if (!title.empty()) f.text({(plot_left + plot_right) / 2, 24, title, 15, Anchor::Middle});
  if (!x_label.empty()) f.text({(plot_left + plot_right) / 2, x_label_y, x_label, 12, Anchor::Middle});
  if (!y_label.empty()) f.text({10, 44, y_label, 12, Anchor::Start});
}

}  // namespace

std::string Figure::to_svg() const {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\"" << height_ << "\" viewBox=\"0 0 "
     << width_ << ' ' << height_ << "\" font-family=\"Helvetica, Arial, sans-serif\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << width_ << "\" height=\"" << height_ << "\" fill=\"#ffffff\"/>\n";
  for (const auto& [kind, i] : order_) {
    switch (kind) {
      case 0: {
        const auto& r = rects_[i];
        os << "<rect x=\"" << r.x << "\" y=\"" << r.y << "\" width=\"" << r.w << "\" height=\"" << r.h << "\" fill=\"" << hex(r.fill) << '"';
        if (r.stroke) os << " stroke=\"" << hex(*r.stroke) << "\" stroke-width=\"1\"";
        os << "/>\n";
        break;
      }
      case 1: {
        const auto& l = lines_[i];
        os << "<line x1=\"" << l.x1 << "\" y1=\"" << l.y1 << "\" x2=\"" << l.x2 << "\" y2=\"" << l.y2 << "\" stroke=\"" << hex(l.color)
           << "\" stroke-width=\"" << l.width << "\"/>\n";
        break;
      }
      case 2: {
        const auto& c = circles_[i];
        os << "<circle cx=\"" << c.cx << "\" cy=\"" << c.cy << "\" r=\"" << c.r << "\" fill=\"" << hex(c.fill) << "\"/>\n";
        break;
      }
      default: {
        const auto& t = texts_[i];
        const char* anchor = t.anchor == Anchor::Start ? "start" : t.anchor == Anchor::Middle ? "middle" : "end";
        os << "<text x=\"" << t.x << "\" y=\"" << t.y << "\" font-size=\"" << t.size << "\" text-anchor=\"" << anchor << "\" fill=\""
           << hex(t.color) << "\">" << escape(t.text) << "</text>\n";
      }
    }
  }
  os << "</svg>\n";
  return os.str();
}

void Figure::write_svg(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << to_svg();
}

void Figure::write_png(const std::filesystem::path& path) const {
  cv::Mat img(height_, width_, CV_8UC3, cv::Scalar(255, 255, 255));
  auto pt = [](double x, double y) { return cv::Point(static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y))); };
  for (const auto& [kind, i] : order_) {
    switch (kind) {
      case 0: {
        const auto& r = rects_[i];
        cv::rectangle(img, pt(r.x, r.y), pt(r.x + r.w, r.y + r.h) - cv::Point(1, 1), bgr(r.fill), cv::FILLED);
        if (r.stroke) cv::rectangle(img, pt(r.x, r.y), pt(r.x + r.w, r.y + r.h) - cv::Point(1, 1), bgr(*r.stroke), 1);
        break;
      }
      case 1: {
        const auto& l = lines_[i];
        cv::line(img, pt(l.x1, l.y1), pt(l.x2, l.y2), bgr(l.color), std::max(1, static_cast<int>(std::lround(l.width))), cv::LINE_AA);
        break;
      }
      case 2: {
        const auto& c = circles_[i];
        cv::circle(img, pt(c.cx, c.cy), static_cast<int>(std::lround(c.r)), bgr(c.fill), cv::FILLED, cv::LINE_AA);
        break;
      }
      default: {
        const auto& t = texts_[i];
        const double scale = t.size / 30.0;
        const auto text = ascii(t.text);
        int baseline = 0;
        const auto sz = cv::getTextSize(text, cv::FONT_HERSHEY_SIMPLEX, scale, 1, &baseline);
        double x = t.x;
        if (t.anchor == Anchor::Middle) x -= sz.width / 2.0;
        if (t.anchor == Anchor::End) x -= sz.width;
        cv::putText(img, text, pt(x, t.y), cv::FONT_HERSHEY_SIMPLEX, scale, bgr(t.color), 1, cv::LINE_AA);
      }
    }
  }
  if (!cv::imwrite(path.string(), img)) throw RuntimeFailure("cannot write " + path.string());
}

std::vector<std::string> Figure::write(const std::filesystem::path& dir, const std::string& stem) const {
  std::filesystem::create_directories(dir);
  write_svg(dir / (stem + ".svg"));
  write_png(dir / (stem + ".png"));
  return {stem + ".svg", stem + ".png"};
}

Rgb sequential_color(double t) {
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  const Rgb lo{247, 251, 255}, hi{8, 48, 107};
  Rgb c;
  for (int k = 0; k < 3; ++k) c[static_cast<std::size_t>(k)] = static_cast<unsigned char>(std::lround(lo[static_cast<std::size_t>(k)] + t * (hi[static_cast<std::size_t>(k)] - lo[static_cast<std::size_t>(k)])));
  return c;
}

Eigen::MatrixXd column_normalize(const Eigen::MatrixXd& A) {
  Eigen::MatrixXd out = A;
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    const double s = A.col(j).sum();
    if (s > 0.0) out.col(j) /= s;
    else out.col(j).setZero();
  }
  return out;
}

std::vector<int> aligned_order(const std::vector<int>& matched_factor, int n) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](int k) {
    const int f = static_cast<std::size_t>(k) < matched_factor.size() ? matched_factor[static_cast<std::size_t>(k)] : -1;
    return f < 0 ? std::pair{1, k} : std::pair{0, f};
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key(a) < key(b); });
  return order;
}

Figure heatmap(const HeatmapSpec& spec) {
  const auto rows = static_cast<int>(spec.values.rows()), cols = static_cast<int>(spec.values.cols());
  if (rows < 1 || cols < 1) throw DataError("heatmap: empty matrix");
  const double cw = std::clamp(640.0 / cols, 18.0, 44.0);
  const double ch = std::clamp(640.0 / rows, 12.0, 26.0);
  const double left = 130, top = 56;
  const double plot_w = cols * cw, plot_h = rows * ch;
  Figure f(static_cast<int>(left + plot_w + 110), static_cast<int>(top + plot_h + 84));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      f.rect({left + j * cw, top + i * ch, cw, ch, sequential_color(spec.values(i, j)), std::nullopt});
  f.line({left, top, left + plot_w, top, kAxis});
  f.line({left, top + plot_h, left + plot_w, top + plot_h, kAxis});
  f.line({left, top, left, top + plot_h, kAxis});
  f.line({left + plot_w, top, left + plot_w, top + plot_h, kAxis});
  for (int i = 0; i < rows; ++i)
    f.text({left - 6, top + (i + 0.5) * ch + 4, i < static_cast<int>(spec.row_labels.size()) ? spec.row_labels[static_cast<std::size_t>(i)] : std::to_string(i), 10, Anchor::End});
  for (int j = 0; j < cols; ++j)
    f.text({left + (j + 0.5) * cw, top + plot_h + 16, j < static_cast<int>(spec.col_labels.size()) ? spec.col_labels[static_cast<std::size_t>(j)] : std::to_string(j), 9, Anchor::Middle});
  const double bx = left + plot_w + 30;
  for (int s = 0; s < 20; ++s) f.rect({bx, top + plot_h * s / 20.0, 16, plot_h / 20.0 + 0.5, sequential_color(1.0 - s / 19.0), std::nullopt});
  f.text({bx + 22, top + 10, "1", 10});
  f.text({bx + 22, top + plot_h, "0", 10});
  frame_titles(f, spec.title, spec.x_label, spec.y_label, left, left + plot_w, top + plot_h + 44);
  return f;
}

Figure influence_heatmap(const Eigen::MatrixXd& A, const std::vector<int>& matched_factor, const std::vector<std::string>& channels) {
  const auto order = aligned_order(matched_factor, static_cast<int>(A.cols()));
  const auto N = column_normalize(A);
  HeatmapSpec hs;
  hs.values.resize(A.rows(), A.cols());
  for (std::size_t c = 0; c < order.size(); ++c) {
    const int k = order[c];
    hs.values.col(static_cast<Eigen::Index>(c)) = N.col(k);
    const int f = static_cast<std::size_t>(k) < matched_factor.size() ? matched_factor[static_cast<std::size_t>(k)] : -1;
    hs.col_labels.push_back("z" + std::to_string(k) + (f >= 0 ? ":f" + std::to_string(f) : ""));
  }
  const double mx = hs.values.maxCoeff();
  if (mx > 0) hs.values /= mx;
  hs.row_labels = channels;
  hs.title = "Column-normalized influence";
  hs.x_label = "latent (matched factor)";
  hs.y_label = "channel";
  return heatmap(hs);
}

Figure bar_chart(const BarSpec& spec) {
  const auto n = static_cast<int>(spec.values.size());
  if (n < 1) throw DataError("bar chart: no values");
  const double left = 70, top = 56, plot_h = 300;
  const double bw = std::clamp(560.0 / n, 14.0, 48.0);
  const double plot_w = n * bw;
  Figure f(static_cast<int>(left + plot_w + 40), static_cast<int>(top + plot_h + 80));
  double lo = std::min(0.0, *std::min_element(spec.values.begin(), spec.values.end()));
  double hi = std::max(0.0, *std::max_element(spec.values.begin(), spec.values.end()));
  if (hi == lo) hi = lo + 1.0;
  auto y_of = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };
  for (double t : ticks(lo, hi)) {
    f.line({left, y_of(t), left + plot_w, y_of(t), kGrid});
    f.text({left - 6, y_of(t) + 4, num(t), 10, Anchor::End});
  }
  for (int k = 0; k < n; ++k) {
    const double v = spec.values[static_cast<std::size_t>(k)];
    const double y0 = y_of(std::max(v, 0.0)), y1 = y_of(std::min(v, 0.0));
    f.rect({left + k * bw + bw * 0.15, y0, bw * 0.7, std::max(1.0, y1 - y0), k == spec.highlight ? kPalette[1] : kPalette[0], std::nullopt});
    f.text({left + (k + 0.5) * bw, top + plot_h + 16, k < static_cast<int>(spec.labels.size()) ? spec.labels[static_cast<std::size_t>(k)] : std::to_string(k), 9, Anchor::Middle});
  }
  f.line({left, top, left, top + plot_h, kAxis});
  f.line({left, y_of(0.0), left + plot_w, y_of(0.0), kAxis});
  frame_titles(f, spec.title, spec.x_label, spec.y_label, left, left + plot_w, top + plot_h + 44);
  return f;
}

Figure line_chart(const LineSpec& spec) {
  const auto n = static_cast<int>(spec.x_ticks.size());
  if (n < 1 || spec.series.empty()) throw DataError("line chart: no points");
  const double left = 70, top = 56, plot_w = 520, plot_h = 300;
  Figure f(static_cast<int>(left + plot_w + 170), static_cast<int>(top + plot_h + 80));
  double lo = 1e300, hi = -1e300;
  for (const auto& s : spec.series)
    for (std::size_t k = 0; k < s.y.size(); ++k) {
      if (!std::isfinite(s.y[k])) continue;
      const double e = k < s.err.size() && std::isfinite(s.err[k]) ? s.err[k] : 0.0;
      lo = std::min(lo, s.y[k] - e);
      hi = std::max(hi, s.y[k] + e);
    }
  if (lo > hi) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto x_of = [&](int k) { return n == 1 ? left + plot_w / 2 : left + 20 + (plot_w - 40) * k / (n - 1.0); };
  auto y_of = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };
  for (double t : ticks(lo, hi)) {
    f.line({left, y_of(t), left + plot_w, y_of(t), kGrid});
    f.text({left - 6, y_of(t) + 4, num(t), 10, Anchor::End});
  }
  for (int k = 0; k < n; ++k) f.text({x_of(k), top + plot_h + 16, spec.x_ticks[static_cast<std::size_t>(k)], 10, Anchor::Middle});
  f.line({left, top, left, top + plot_h, kAxis});
  f.line({left, top + plot_h, left + plot_w, top + plot_h, kAxis});
  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const auto& s = spec.series[si];
    const auto color = kPalette[si % kPalette.size()];
    for (std::size_t k = 0; k < s.y.size() && k < static_cast<std::size_t>(n); ++k) {
      if (!std::isfinite(s.y[k])) continue;
      const double x = x_of(static_cast<int>(k)), y = y_of(s.y[k]);
      if (k + 1 < s.y.size() && k + 1 < static_cast<std::size_t>(n) && std::isfinite(s.y[k + 1]))
        f.line({x, y, x_of(static_cast<int>(k + 1)), y_of(s.y[k + 1]), color, 2.0});
      if (k < s.err.size() && s.err[k] > 0.0) {
        f.line({x, y_of(s.y[k] - s.err[k]), x, y_of(s.y[k] + s.err[k]), color});
        f.line({x - 4, y_of(s.y[k] - s.err[k]), x + 4, y_of(s.y[k] - s.err[k]), color});
        f.line({x - 4, y_of(s.y[k] + s.err[k]), x + 4, y_of(s.y[k] + s.err[k]), color});
      }
      f.circle({x, y, 3.5, color});
    }
    const double ly = top + 12 + 18.0 * static_cast<double>(si);
    f.line({left + plot_w + 16, ly - 4, left + plot_w + 36, ly - 4, color, 2.0});
    f.text({left + plot_w + 42, ly, s.name, 11});
  }
  frame_titles(f, spec.title, spec.x_label, spec.y_label, left, left + plot_w, top + plot_h + 44);
  return f;
}

}  // namespace mosaic::lab
