#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "invlab/dataset.hpp"
#include "invlab/trajectory.hpp"

namespace invlab {

// Euclidean distance. Throws std::invalid_argument on dimension mismatch.
double recon_l2(const Vector& a, const Vector& b);
Eigen::VectorXd recon_l2(const PointBatch& a, const PointBatch& b);

struct LatentCloudStats {
  double mean_norm = 0.0;
  double cov_trace = 0.0;
  double cov_deviation = 0.0;  // |Sigma - I|_F
  double mean_nll = 0.0;
  Eigen::MatrixXd covariance;  // unbiased
};

// Requires at least two latents.
LatentCloudStats latent_cloud_stats(std::span<const Vector> latents);
LatentCloudStats latent_cloud_stats(const PointBatch& latents);

// Fraction of points that land in the target cluster and lie within
// radius_multiplier * component_std of its center.
double edit_success_rate(std::span<const Vector> edited, int target_class, const GmmSpec& spec,
                         double radius_multiplier = 3.0);
double edit_success_rate(const PointBatch& edited, int target_class, const GmmSpec& spec,
                         double radius_multiplier = 3.0);

// True when x lies more than `sigmas` component stds from every center.
bool is_out_of_distribution(const Vector& x, const GmmSpec& spec, double sigmas = 10.0);

// offset_k = |inv(t_k) - den(t_k)|, ordered by increasing time. The two
// trajectories must visit the same time stamps (in either order).
std::vector<double> trajectory_offsets(const Trajectory& inv, const Trajectory& den);

// Per-point records plus the aggregates derived from them.
struct MetricsReport {
  std::string label;
  std::vector<double> l2;                // round-trip error per point
  std::vector<double> latent_nll;        // prior NLL per inverted latent
  std::vector<Vector> latents;           // inverted latents (for covariance)
  std::vector<int> edited_cluster;       // assigned cluster of each edit, if any
  std::vector<std::uint8_t> edit_success;
  std::vector<std::vector<double>> offsets;  // per-point trajectory offsets, if recorded
  std::vector<std::uint8_t> out_of_distribution;  // input far from every component

  double mean_l2() const;
  double median_l2() const;
  double mean_nll() const;
  std::optional<double> edit_success_rate() const;
  LatentCloudStats cloud() const;
  double max_offset() const;
};

void to_json(nlohmann::json& j, const MetricsReport& r);

}  // namespace invlab
