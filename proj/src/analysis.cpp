#include "invlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "invlab/error.hpp"

namespace invlab {

double recon_l2(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("recon_l2: dimension mismatch");
  return (a - b).norm();
}

Eigen::VectorXd recon_l2(const PointBatch& a, const PointBatch& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("recon_l2: shape mismatch");
  return (a - b).colwise().norm().transpose();
}

LatentCloudStats latent_cloud_stats(const PointBatch& latents) {
  const Eigen::Index n = latents.cols();
  if (n < 2) throw std::invalid_argument("latent_cloud_stats: need at least two latents");
  const Eigen::Index d = latents.rows();
  LatentCloudStats s;
  const Eigen::VectorXd mean = latents.rowwise().mean();
  const Eigen::MatrixXd centered = latents.colwise() - mean;
  s.covariance = centered * centered.transpose() / static_cast<double>(n - 1);
  s.cov_trace = s.covariance.trace();
  s.cov_deviation = (s.covariance - Eigen::MatrixXd::Identity(d, d)).norm();
  s.mean_norm = latents.colwise().norm().mean();
  double nll = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) nll += standard_normal_nll(latents.col(j));
  s.mean_nll = nll / static_cast<double>(n);
  return s;
}

LatentCloudStats latent_cloud_stats(std::span<const Vector> latents) {
  if (latents.size() < 2) throw std::invalid_argument("latent_cloud_stats: need at least two latents");
  return latent_cloud_stats(stack_columns(latents));
}

double edit_success_rate(const PointBatch& edited, int target_class, const GmmSpec& spec, double radius_multiplier) {
  if (edited.cols() == 0) throw std::invalid_argument("edit_success_rate: no points");
  if (!(radius_multiplier > 0.0)) throw std::invalid_argument("edit_success_rate: radius multiplier must be > 0");
  const Vector& center = spec.center_of(target_class);
  const double radius = radius_multiplier * spec.component_std;
  std::size_t hits = 0;
  for (Eigen::Index j = 0; j < edited.cols(); ++j) {
    const Vector x = edited.col(j);
    if ((x - center).norm() <= radius && assign_cluster(x, spec) == target_class) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(edited.cols());
}

double edit_success_rate(std::span<const Vector> edited, int target_class, const GmmSpec& spec,
                         double radius_multiplier) {
  if (edited.empty()) throw std::invalid_argument("edit_success_rate: no points");
  return edit_success_rate(stack_columns(edited), target_class, spec, radius_multiplier);
}

std::vector<double> trajectory_offsets(const Trajectory& inv, const Trajectory& den) {
  if (inv.size() != den.size() || inv.times.size() != inv.size() || den.times.size() != den.size())
    throw std::invalid_argument("trajectory_offsets: trajectories differ in length");
  auto order = [](const Trajectory& t) {
    std::vector<std::size_t> idx(t.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return t.times[a] < t.times[b]; });
    return idx;
  };
  const auto oi = order(inv);
  const auto od = order(den);
  std::vector<double> out;
  out.reserve(inv.size());
  for (std::size_t k = 0; k < oi.size(); ++k) {
    if (std::abs(inv.times[oi[k]] - den.times[od[k]]) > 1e-12)
      throw std::invalid_argument("trajectory_offsets: time grids are not aligned");
    out.push_back(recon_l2(inv.states[oi[k]], den.states[od[k]]));
  }
  return out;
}

bool is_out_of_distribution(const Vector& x, const GmmSpec& spec, double sigmas) {
  for (const auto& c : spec.centers)
    if ((x - c).norm() <= sigmas * spec.component_std) return false;
  return true;
}

double MetricsReport::mean_l2() const {
  if (l2.empty()) return 0.0;
  return std::accumulate(l2.begin(), l2.end(), 0.0) / static_cast<double>(l2.size());
}

double MetricsReport::median_l2() const {
  if (l2.empty()) return 0.0;
  std::vector<double> v = l2;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double MetricsReport::mean_nll() const {
  if (latent_nll.empty()) return 0.0;
  return std::accumulate(latent_nll.begin(), latent_nll.end(), 0.0) / static_cast<double>(latent_nll.size());
}

std::optional<double> MetricsReport::edit_success_rate() const {
  if (edit_success.empty()) return std::nullopt;
  const auto hits = std::count(edit_success.begin(), edit_success.end(), std::uint8_t{1});
  return static_cast<double>(hits) / static_cast<double>(edit_success.size());
}

LatentCloudStats MetricsReport::cloud() const { return latent_cloud_stats(latents); }

double MetricsReport::max_offset() const {
  double m = 0.0;
  for (const auto& o : offsets)
    for (double v : o) m = std::max(m, v);
  return m;
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = nlohmann::json::object();
  j["label"] = r.label;
  j["points"] = std::max(r.l2.size(), r.latents.size());
  j["mean_l2"] = r.mean_l2();
  j["median_l2"] = r.median_l2();
  if (!r.latent_nll.empty()) j["mean_latent_nll"] = r.mean_nll();
  if (r.latents.size() >= 2) {
    const auto c = r.cloud();
    j["latent_mean_norm"] = c.mean_norm;
    j["latent_cov_trace"] = c.cov_trace;
    j["latent_cov_deviation"] = c.cov_deviation;
  }
  if (auto rate = r.edit_success_rate()) j["edit_success_rate"] = *rate;
  if (!r.offsets.empty()) j["max_trajectory_offset"] = r.max_offset();
  if (!r.out_of_distribution.empty())
    j["out_of_distribution"] = std::count(r.out_of_distribution.begin(), r.out_of_distribution.end(), std::uint8_t{1});

  nlohmann::json per_point = nlohmann::json::array();
  const std::size_t n = std::max(r.l2.size(), r.latents.size());
  for (std::size_t i = 0; i < n; ++i) {
    nlohmann::json p = nlohmann::json::object();
    if (i < r.l2.size()) p["l2"] = r.l2[i];
    if (i < r.latent_nll.size()) p["latent_nll"] = r.latent_nll[i];
    if (i < r.latents.size())
      p["latent"] = std::vector<double>(r.latents[i].data(), r.latents[i].data() + r.latents[i].size());
    if (i < r.edited_cluster.size()) p["edited_cluster"] = r.edited_cluster[i];
    if (i < r.edit_success.size()) p["edit_success"] = r.edit_success[i] != 0;
    if (i < r.offsets.size()) p["offsets"] = r.offsets[i];
    if (i < r.out_of_distribution.size()) p["out_of_distribution"] = r.out_of_distribution[i] != 0;
    per_point.push_back(std::move(p));
  }
  j["per_point"] = std::move(per_point);
}

}  // namespace invlab
