#include "invlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "invlab/export.hpp"

namespace invlab {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Bounds {
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -std::numeric_limits<double>::infinity();
  double y0 = std::numeric_limits<double>::infinity();
  double y1 = -std::numeric_limits<double>::infinity();

  void add(double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  void add(const Vector& p) { add(p[0], p.size() > 1 ? p[1] : 0.0); }
  bool empty() const { return !(x0 <= x1); }

  void finish(double fx0, double fx1, double fy0, double fy1) {
    if (empty()) {
      x0 = fx0, x1 = fx1, y0 = fy0, y1 = fy1;
    }
    const double px = std::max((x1 - x0) * 0.05, 0.5);
    const double py = std::max((y1 - y0) * 0.05, 0.5);
    x0 -= px, x1 += px, y0 -= py, y1 += py;
  }
};

class Canvas {
 public:
  Canvas(const Bounds& b, const SvgStyle& style) : b_(b), style_(style) {}

  double sx(double x) const { return kMargin + (x - b_.x0) / (b_.x1 - b_.x0) * (style_.width - 2 * kMargin); }
  double sy(double y) const {
    return style_.height - kMargin - (y - b_.y0) / (b_.y1 - b_.y0) * (style_.height - 2 * kMargin);
  }
  double px(const Vector& p) const { return sx(p[0]); }
  double py(const Vector& p) const { return sy(p.size() > 1 ? p[1] : 0.0); }

  void open(std::ostringstream& os) const {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(style_.width) << "\" height=\""
       << fmt(style_.height) << "\" viewBox=\"0 0 " << fmt(style_.width) << ' ' << fmt(style_.height) << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!style_.title.empty())
      os << "<text x=\"" << fmt(style_.width / 2) << "\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">"
         << escape(style_.title) << "</text>\n";
  }

  void axes(std::ostringstream& os, const std::string& x_label, const std::string& y_label) const {
    const double left = kMargin, right = style_.width - kMargin;
    const double top = kMargin, bottom = style_.height - kMargin;
    os << "<g id=\"axes\" stroke=\"#444\" stroke-width=\"1\" fill=\"none\">\n";
    os << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(bottom) << "\" x2=\"" << fmt(right) << "\" y2=\""
       << fmt(bottom) << "\"/>\n";
    os << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(left) << "\" y2=\""
       << fmt(bottom) << "\"/>\n";
    os << "</g>\n<g id=\"ticks\" font-size=\"10\" fill=\"#444\">\n";
    for (int i = 0; i <= 4; ++i) {
      const double fx = b_.x0 + (b_.x1 - b_.x0) * i / 4.0;
      const double fy = b_.y0 + (b_.y1 - b_.y0) * i / 4.0;
      os << "<text x=\"" << fmt(sx(fx)) << "\" y=\"" << fmt(bottom + 14) << "\" text-anchor=\"middle\">" << fmt(fx)
         << "</text>\n";
      os << "<text x=\"" << fmt(left - 4) << "\" y=\"" << fmt(sy(fy) + 3) << "\" text-anchor=\"end\">" << fmt(fy)
         << "</text>\n";
    }
    if (!x_label.empty())
      os << "<text x=\"" << fmt((left + right) / 2) << "\" y=\"" << fmt(style_.height - 6)
         << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
    if (!y_label.empty())
      os << "<text x=\"12\" y=\"" << fmt((top + bottom) / 2) << "\" transform=\"rotate(-90 12 "
         << fmt((top + bottom) / 2) << ")\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
    os << "</g>\n";
  }

  void points(std::ostringstream& os, const char* id, const std::vector<Vector>& pts, const std::string& color) const {
    os << "<g id=\"" << id << "\" fill=\"" << color << "\">\n";
    for (const auto& p : pts)
      os << "<circle cx=\"" << fmt(px(p)) << "\" cy=\"" << fmt(py(p)) << "\" r=\"" << fmt(style_.point_radius)
         << "\"/>\n";
    os << "</g>\n";
  }

  void paths(std::ostringstream& os, const char* id, const std::vector<Trajectory>& trajs,
             const std::string& color) const {
    os << "<g id=\"" << id << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"0.8\">\n";
    for (const auto& t : trajs) {
      if (t.states.empty()) continue;
      os << "<polyline points=\"";
      for (std::size_t k = 0; k < t.states.size(); ++k)
        os << (k ? " " : "") << fmt(px(t.states[k])) << ',' << fmt(py(t.states[k]));
      os << "\"/>\n";
    }
    os << "</g>\n";
  }

 private:
  static constexpr double kMargin = 40.0;
  Bounds b_;
  const SvgStyle& style_;
};

}  // namespace

std::string render_svg_scatter(const SvgScatter& scene, const SvgStyle& style) {
  Bounds b;
  for (const auto* layer : {&scene.posterior, &scene.latents, &scene.reconstructions})
    for (const auto& p : *layer) b.add(p);
  for (const auto* paths : {&scene.inversion_paths, &scene.denoise_paths})
    for (const auto& t : *paths)
      for (const auto& p : t.states) b.add(p);
  b.finish(-15.0, 15.0, -4.0, 14.0);

  const Canvas c(b, style);
  std::ostringstream os;
  c.open(os);
  c.axes(os, "x0", "x1");
  c.paths(os, "inversion-paths", scene.inversion_paths, style.inversion_path_color);
  c.paths(os, "denoise-paths", scene.denoise_paths, style.denoise_path_color);
  os << "<g id=\"offsets\" stroke=\"" << style.offset_color << "\" stroke-width=\"0.6\">\n";
  for (const auto& [a, bpt] : scene.offsets)
    os << "<line x1=\"" << fmt(c.px(a)) << "\" y1=\"" << fmt(c.py(a)) << "\" x2=\"" << fmt(c.px(bpt)) << "\" y2=\""
       << fmt(c.py(bpt)) << "\"/>\n";
  os << "</g>\n";
  c.points(os, "posterior", scene.posterior, style.posterior_color);
  c.points(os, "latents", scene.latents, style.latent_color);
  c.points(os, "reconstructions", scene.reconstructions, style.reconstruction_color);
  os << "</svg>\n";
  return os.str();
}

void emit_svg_scatter(const SvgScatter& scene, const SvgStyle& style, const std::filesystem::path& path) {
  write_text_file(path, render_svg_scatter(scene, style));
}

std::string render_svg_curve(const std::vector<SvgSeries>& series, const std::string& x_label,
                             const std::string& y_label, const SvgStyle& style) {
  Bounds b;
  for (const auto& s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) b.add(s.x[i], s.y[i]);
  b.finish(0.0, 1.0, 0.0, 1.0);
  const Canvas c(b, style);
  std::ostringstream os;
  c.open(os);
  c.axes(os, x_label, y_label);
  for (const auto& s : series) {
    const std::size_t n = std::min(s.x.size(), s.y.size());
    os << "<g id=\"series-" << escape(s.name) << "\" stroke=\"" << s.color << "\" fill=\"" << s.color << "\">\n";
    os << "<polyline fill=\"none\" points=\"";
    for (std::size_t i = 0; i < n; ++i) os << (i ? " " : "") << fmt(c.sx(s.x[i])) << ',' << fmt(c.sy(s.y[i]));
    os << "\"/>\n";
    for (std::size_t i = 0; i < n; ++i) {
      os << "<circle cx=\"" << fmt(c.sx(s.x[i])) << "\" cy=\"" << fmt(c.sy(s.y[i])) << "\" r=\"3\"/>\n";
      if (i < s.labels.size())
        os << "<text x=\"" << fmt(c.sx(s.x[i]) + 5) << "\" y=\"" << fmt(c.sy(s.y[i]) - 5)
           << "\" font-size=\"10\" stroke=\"none\">" << escape(s.labels[i]) << "</text>\n";
    }
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace invlab
