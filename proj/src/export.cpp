#include "invlab/export.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>

#include "invlab/error.hpp"

namespace invlab {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

void write_header(std::ostream& os, bool with_traj, Eigen::Index d, char prefix) {
  if (with_traj) os << "traj,";
  os << "step,t";
  for (Eigen::Index i = 0; i < d; ++i) os << ',' << prefix << i;
  os << '\n';
}

void write_row(std::ostream& os, const Eigen::Ref<const Eigen::VectorXd>& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) os << ',' << format_double(x[i]);
  os << '\n';
}

double median_of(const Eigen::VectorXd& v) {
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

nlohmann::json conditions_summary(const std::vector<Condition>& conds) {
  nlohmann::json j;
  if (conds.empty()) return j;
  static const char* kModes[] = {"null", "class", "tight", "class+tight"};
  j["mode"] = kModes[static_cast<int>(conds.front().kind())];
  if (const auto& t = conds.front().tight_branch()) j["scale"] = t->scale;
  std::vector<int> classes;
  for (const auto& c : conds) classes.push_back(c.class_id());
  j["class_ids"] = classes;
  return j;
}

}  // namespace

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  write_header(os, false, traj.states.empty() ? 2 : traj.states.front().size(), 'x');
  for (std::size_t k = 0; k < traj.size(); ++k) {
    os << k << ',' << format_double(traj.times[k]);
    write_row(os, traj.states[k]);
  }
}

void write_trajectories_csv(std::ostream& os, const BatchTrajectory& traj) {
  write_header(os, true, traj.states.empty() ? 2 : traj.states.front().rows(), 'x');
  for (Eigen::Index j = 0; j < traj.points(); ++j) {
    for (std::size_t k = 0; k < traj.size(); ++k) {
      os << j << ',' << k << ',' << format_double(traj.times[k]);
      write_row(os, traj.states[k].col(j));
    }
  }
}

void write_noise_maps_csv(std::ostream& os, const NoiseMapSet& maps, int T) {
  write_header(os, true, maps.x_T.rows(), 'z');
  for (Eigen::Index j = 0; j < maps.x_T.cols(); ++j) {
    os << j << ",0," << T;
    write_row(os, maps.x_T.col(j));
    for (std::size_t i = 0; i < maps.maps.size(); ++i) {
      os << j << ',' << i + 1 << ',' << T - static_cast<int>(i);
      write_row(os, maps.maps[i].col(j));
    }
  }
}

nlohmann::json inversion_sidecar(const BatchInversion& inv, std::uint64_t seed) {
  nlohmann::json j = {{"method", to_string(inv.method)},
                      {"condition", conditions_summary(inv.conditions)},
                      {"seed", seed},
                      {"points", inv.terminal.cols()},
                      {"trajectory_length", inv.trajectory.size()}};
  if (inv.method == InversionMethod::ReNoise) {
    j["iterations"] = inv.iterations;
    nlohmann::json med = nlohmann::json::array();
    nlohmann::json mx = nlohmann::json::array();
    const auto K = static_cast<std::size_t>(std::max(inv.iterations, 1));
    for (std::size_t i = 0; i < inv.residuals.size(); i += K) {
      nlohmann::json m_row = nlohmann::json::array();
      nlohmann::json x_row = nlohmann::json::array();
      for (std::size_t k = 0; k < K && i + k < inv.residuals.size(); ++k) {
        m_row.push_back(median_of(inv.residuals[i + k]));
        x_row.push_back(inv.residuals[i + k].maxCoeff());
      }
      med.push_back(std::move(m_row));
      mx.push_back(std::move(x_row));
    }
    j["residual_median"] = std::move(med);
    j["residual_max"] = std::move(mx);
  }
  return j;
}

nlohmann::json noise_map_sidecar(const NoiseMapSet& maps, std::uint64_t seed) {
  return {{"method", "editfriendly"},
          {"condition", conditions_summary(maps.conditions)},
          {"guidance", maps.guidance},
          {"seed", seed},
          {"points", maps.x_T.cols()},
          {"maps", maps.maps.size()}};
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw Error("write failed for " + path.string());
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace invlab
