#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "invlab/numerics.hpp"
#include "invlab/trajectory.hpp"

namespace invlab {

struct SvgStyle {
  std::string title;
  double width = 480;
  double height = 400;
  double point_radius = 2.0;
  std::string posterior_color = "#1f5fbf";
  std::string latent_color = "#8ec5ff";
  std::string reconstruction_color = "#2ca02c";
  std::string inversion_path_color = "#1f5fbf";
  std::string denoise_path_color = "#8ec5ff";
  std::string offset_color = "#d62728";
};

// Everything drawn on one scatter panel. Only the first two coordinates of
// each point are plotted.
struct SvgScatter {
  std::vector<Vector> posterior;
  std::vector<Vector> latents;
  std::vector<Vector> reconstructions;
  std::vector<Trajectory> inversion_paths;
  std::vector<Trajectory> denoise_paths;
  std::vector<std::pair<Vector, Vector>> offsets;
};

// Standalone SVG with axes and one <g> per layer, drawn in a fixed order.
std::string render_svg_scatter(const SvgScatter& scene, const SvgStyle& style);
void emit_svg_scatter(const SvgScatter& scene, const SvgStyle& style, const std::filesystem::path& path);

struct SvgSeries {
  std::string name;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<std::string> labels;  // optional per-point annotations
};

// Line plot with markers.
std::string render_svg_curve(const std::vector<SvgSeries>& series, const std::string& x_label,
                             const std::string& y_label, const SvgStyle& style);

}  // namespace invlab
