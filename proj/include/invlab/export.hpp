#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "invlab/inversion.hpp"
#include "invlab/trajectory.hpp"

namespace invlab {

// Single trajectory: header step,t,x0,x1,...
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

// Many trajectories in one file: header traj,step,t,x0,x1,... where `traj`
// is the point index. Trajectories are written point by point.
void write_trajectories_csv(std::ostream& os, const BatchTrajectory& traj);

// Noise maps in replay order: header traj,step,t,z0,z1,...; the row with
// step 0 holds x_T itself.
void write_noise_maps_csv(std::ostream& os, const NoiseMapSet& maps, int T);

// Sidecar metadata for an inversion: method, conditions, scale, seed, and the
// median / max ReNoise residual per (step, iteration).
nlohmann::json inversion_sidecar(const BatchInversion& inv, std::uint64_t seed);
nlohmann::json noise_map_sidecar(const NoiseMapSet& maps, std::uint64_t seed);

// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace invlab
