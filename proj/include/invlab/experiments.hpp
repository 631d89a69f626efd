#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "invlab/analysis.hpp"
#include "invlab/checkpoint.hpp"
#include "invlab/config.hpp"

namespace invlab {

// Number of worker threads: INVLAB_THREADS if set (>= 1), else the hardware
// concurrency.
std::size_t worker_count();

struct LoadedModel {
  MlpModel model;
  std::optional<NoiseSchedule> schedule;  // epsilon models only
  std::filesystem::path path;
  std::string hash;

  const NoiseSchedule* sched() const { return schedule ? &*schedule : nullptr; }
};

// Loads config.checkpoint_path(). When the file is missing and
// train_if_missing is set, trains a model of the required objective first.
// Throws CheckpointError when the checkpoint is missing (and training is
// disabled), unreadable, of the wrong objective, or built for another dataset.
LoadedModel load_or_train(const ExperimentConfig& config, Objective required, std::ostream* log = nullptr);

// Held-out points for one seed: the config's input file if given, otherwise
// eval.points draws from eval.source_class (or `fallback_class`, or the whole
// mixture when neither is set).
std::vector<LabeledPoint> evaluation_points(const ExperimentConfig& config, std::uint64_t seed,
                                            std::optional<int> fallback_class = std::nullopt);

// One condition per point according to config.condition.
std::vector<Condition> build_conditions(const ConditionConfig& cc, const std::vector<LabeledPoint>& points);

// Invert, reconstruct and optionally edit a set of points, sharded across
// workers. Output is independent of the worker count.
struct RoundTripRequest {
  std::vector<Condition> inversion;
  std::vector<Condition> reconstruction;  // empty: same as inversion
  std::vector<Condition> edit;            // empty: no edit
  bool keep_trajectories = false;
  bool reconstruct = true;
  std::uint64_t noise_seed = 0;  // edit-friendly forward marginals
};

struct RoundTripResult {
  PointBatch latents;  // z_T, or x_T for edit-friendly inversion
  PointBatch reconstructions;
  std::optional<PointBatch> edited;
  BatchTrajectory inversion_trajectory;  // empty for edit-friendly inversion
  BatchTrajectory denoise_trajectory;
  std::vector<Eigen::VectorXd> residuals;  // ReNoise, see BatchInversion
  int iterations = 0;
  std::optional<NoiseMapSet> noise_maps;
};

RoundTripResult run_round_trip(const LoadedModel& model, const ExperimentConfig& config, const PointBatch& x0,
                               const RoundTripRequest& request);

// Per-point metrics of a round trip.
// Trajectory offsets are recorded for the first `offset_points` points.
MetricsReport make_report(const std::string& label, const PointBatch& x0, const RoundTripResult& rt,
                          const GmmSpec& spec, int target_class, double radius, std::size_t offset_points = 0);

// One line of a summary table. Missing values are written as empty cells.
struct SummaryRow {
  std::string experiment;
  std::string method;
  std::string condition;
  std::optional<double> scale;
  std::string seed;  // seed value, or "mean"
  std::size_t points = 0;
  double mean_l2 = 0.0;
  std::optional<double> median_l2;
  std::optional<double> mean_latent_nll;
  std::optional<double> edit_success;
};

SummaryRow summarize(const std::string& experiment, const std::string& method, const std::string& condition,
                     std::optional<double> scale, std::uint64_t seed, const MetricsReport& report);
// Column-wise mean of rows sharing (method, condition, scale); seed = "mean".
std::vector<SummaryRow> seed_means(const std::vector<SummaryRow>& rows);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);

struct TrainRun {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::filesystem::path checkpoint;
};

struct Fig3Result {
  MetricsReport null_condition;     // panel b
  MetricsReport correct_condition;  // panel c
  MetricsReport wrong_condition;    // panel d
  std::vector<std::size_t> prior_cluster_counts;  // panel a samples per class
};

struct Table1Result {
  std::vector<SummaryRow> rows;  // per seed, then the seed means
  double null_l2 = 0.0;
  double class_l2 = 0.0;
  double tight_l2 = 0.0;
};

struct SweepResult {
  std::vector<double> scales;
  std::vector<double> mean_l2;       // seed-averaged, one per scale
  std::vector<double> edit_success;  // seed-averaged, one per scale
  std::vector<SummaryRow> rows;
};

struct BaselineResult {
  MetricsReport tight_inversion;
  MetricsReport random_noise;
  std::vector<std::size_t> unconditional_cluster_counts;  // random noise at s = 0
  double unconditional_chi2 = 0.0;                        // vs uniform over classes
};

TrainRun run_train(const ExperimentConfig& config, std::ostream* log = nullptr);
void run_invert(const ExperimentConfig& config, std::ostream* log = nullptr);
MetricsReport run_reconstruct(const ExperimentConfig& config, std::ostream* log = nullptr);
MetricsReport run_edit(const ExperimentConfig& config, std::ostream* log = nullptr);
Fig3Result run_fig3(const ExperimentConfig& config, std::ostream* log = nullptr);
Table1Result run_table1_analog(const ExperimentConfig& config, std::ostream* log = nullptr);
SweepResult run_scale_sweep(const ExperimentConfig& config, std::ostream* log = nullptr);
BaselineResult run_random_noise_baseline(const ExperimentConfig& config, std::ostream* log = nullptr);
// Concatenates summary.csv files found under config.inputs (or config.out).
std::vector<SummaryRow> run_report(const ExperimentConfig& config, std::ostream* log = nullptr);

// Dispatches on config.kind.
void run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

}  // namespace invlab
