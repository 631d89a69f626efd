#include <doctest.h>

#include <chrono>
#include <sstream>

#include "invlab/export.hpp"
#include "invlab/svg.hpp"
#include "support.hpp"

using namespace invlab;
using invlab::test::vec;

TEST_CASE("shortest round-trip doubles") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-2.5e-7) == "-2.5e-07");
  for (double v : {1.0 / 3.0, 12345.678901234567, -1e-300, 2.0 / 7.0})
    CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("trajectory CSV layouts") {
  Trajectory t;
  t.times = {1.0, 0.5};
  t.states = {vec({1, 2}), vec({0.5, 0.25})};
  std::ostringstream one;
  write_trajectory_csv(one, t);
  CHECK(one.str() == "step,t,x0,x1\n0,1,1,2\n1,0.5,0.5,0.25\n");

  BatchTrajectory b;
  PointBatch s0(2, 2), s1(2, 2);
  s0 << 1, 3, 2, 4;
  s1 << 5, 7, 6, 8;
  b.push(0.0, s0);
  b.push(1.0, s1);
  std::ostringstream many;
  write_trajectories_csv(many, b);
  CHECK(many.str() == "traj,step,t,x0,x1\n0,0,0,1,2\n0,1,1,5,6\n1,0,0,3,4\n1,1,1,7,8\n");
}

TEST_CASE("points CSV header") {
  std::ostringstream os;
  write_points_csv(os, {{vec({1.5, 2}), 3}});
  CHECK(os.str() == "x0,x1,class_id\n1.5,2,3\n");
}

namespace {

SvgScatter scene_of(std::size_t n) {
  Rng rng(1);
  SvgScatter s;
  for (std::size_t i = 0; i < n; ++i) {
    s.posterior.push_back(sample_standard_normal(rng, 2));
    s.latents.push_back(sample_standard_normal(rng, 2));
    s.reconstructions.push_back(sample_standard_normal(rng, 2));
  }
  Trajectory t;
  t.times = {0, 1};
  t.states = {vec({0, 0}), vec({1, 1})};
  s.inversion_paths.push_back(t);
  s.denoise_paths.push_back(t);
  s.offsets.emplace_back(vec({0, 0}), vec({1, 0}));
  return s;
}

}  // namespace

TEST_CASE("scatter SVG is deterministic and well formed") {
  SvgStyle style;
  style.title = "a < b & c";
  const std::string a = render_svg_scatter(scene_of(50), style);
  CHECK(a == render_svg_scatter(scene_of(50), style));
  CHECK(a.rfind("<svg", 0) == 0);
  CHECK(a.find("</svg>") != std::string::npos);
  CHECK(a.find("a &lt; b &amp; c") != std::string::npos);

  const std::string empty = render_svg_scatter(SvgScatter{}, style);
  CHECK(empty.find("</svg>") != std::string::npos);
  CHECK(empty.find("nan") == std::string::npos);
}

TEST_CASE("large scatter stays fast and small") {
  const SvgScatter scene = scene_of(10000);
  const auto start = std::chrono::steady_clock::now();
  const std::string svg = render_svg_scatter(scene, SvgStyle{});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(secs < 2.0);
  CHECK(svg.size() < 5u * 1024u * 1024u);
}

TEST_CASE("curve SVG") {
  SvgSeries s{"mean_l2", "#1f5fbf", {0, 0.5, 1}, {0.3, 0.1, 0.02}, {"s=0", "s=0.5", "s=1"}};
  const std::string svg = render_svg_curve({s}, "scale", "error", SvgStyle{});
  CHECK(svg.find("s=0.5") != std::string::npos);
  CHECK(svg.find("mean_l2") != std::string::npos);
}
