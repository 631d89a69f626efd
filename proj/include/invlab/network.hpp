#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "invlab/dataset.hpp"
#include "invlab/numerics.hpp"

namespace invlab {

// What the network output means.
enum class Objective { FlowMatching, EpsilonPrediction };

std::string to_string(Objective objective);
Objective parse_objective(const std::string& name);

// Anything that predicts a velocity (flow) or a noise vector (diffusion) for a
// batch of points at one time value. Samplers and inverters only see this
// interface, so analytic fields can stand in for the trained network.
class DenoisingModel {
 public:
  virtual ~DenoisingModel() = default;

  virtual Objective objective() const = 0;
  virtual std::size_t dim() const = 0;

  // `conds` holds one condition per column of `xs`, or a single condition
  // applied to every column. `t` is the model time: flow time in [0, 1], or
  // the diffusion step index divided by T.
  virtual PointBatch predict(const PointBatch& xs, double t, std::span<const Condition> conds) const = 0;

  Vector predict(const Vector& x, double t, const Condition& cond) const;
};

// Sinusoidal features of a scalar time: sin then cos at frequencies spaced
// geometrically from 1 to 1000.
constexpr int kTimeFeatures = 16;
Eigen::VectorXd time_embedding(double t);

// Architecture and data facts that travel with the weights.
struct ModelMeta {
  std::size_t dim = 2;
  std::size_t embed_dim = 16;
  std::vector<std::size_t> hidden = {128, 128};
  int num_classes = 5;
  Objective objective = Objective::FlowMatching;
  double tight_gain = 1.0;
  DataStats data_stats;
  GmmSpec dataset = GmmSpec::toy_default();
  // Diffusion schedule used in training; ignored by flow models.
  int diffusion_steps = 100;
  double beta_min = 1e-3;
  double beta_max = 0.2;
  std::uint64_t init_seed = 0;
  std::uint64_t train_seed = 0;

  std::size_t input_dim() const { return dim + kTimeFeatures + embed_dim; }
};

// Learnable weights. Trunk layers are stored as (out x in) matrices; the class
// table keeps one column per class with column 0 the null embedding; the tight
// projection maps a standardized anchor (d) to embedding space (E).
struct ModelParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::MatrixXd class_table;
  Eigen::MatrixXd tight_proj;

  // Zero-valued parameters with the shapes implied by `meta`.
  static ModelParams zeros(const ModelMeta& meta);
  // Scaled-normal init (std 1/sqrt(fan_in)), zero biases, N(0,1) class table.
  static ModelParams init(const ModelMeta& meta, Rng& rng, bool zero_output_layer = false);

  struct TensorView {
    std::string name;
    double* data;
    Eigen::Index rows;
    Eigen::Index cols;
    Eigen::Index size() const { return rows * cols; }
  };
  // Every tensor in declaration order: w0,b0,w1,b1,...,class_table,tight_proj.
  std::vector<TensorView> tensors();
  std::vector<TensorView> tensors() const;

  std::size_t parameter_count() const;
  bool same_shape(const ModelParams& other) const;
  bool all_finite() const;
};

// Intermediate values of one batched forward pass, kept for backprop.
struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre;   // pre-activations of hidden layers
  std::vector<Eigen::MatrixXd> post;  // SiLU outputs of hidden layers
  Eigen::MatrixXd output;
};

// Embedding column for a condition: table[class] + s * gain * W_p * standardize(anchor).
Eigen::VectorXd condition_embedding(const ModelMeta& meta, const ModelParams& params, const Condition& cond);

// Batched forward pass with a time value per column.
ForwardCache forward_batch(const ModelMeta& meta, const ModelParams& params, const PointBatch& xs,
                           const Eigen::VectorXd& times, std::span<const Condition> conds);

// Single-point forward.
Vector forward(const ModelMeta& meta, const ModelParams& params, const Vector& x, double t,
               const Condition& cond);

// One regression example: network input point, its time and condition, and the target.
struct TrainingPair {
  Vector x;
  double t = 0.0;
  Condition cond;
  Vector target;
};

struct LossAndGrad {
  double loss = 0.0;
  ModelParams grad;
};

// Mean over the batch of |forward - target|^2 and its exact gradient.
LossAndGrad loss_and_grad(const ModelMeta& meta, const ModelParams& params, std::span<const TrainingPair> batch);

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const ModelMeta& meta);
};

// In-place bias-corrected Adam update. Throws on shape mismatch.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr);

// The trained conditional MLP behind the DenoisingModel interface.
class MlpModel : public DenoisingModel {
 public:
  MlpModel(ModelMeta meta, ModelParams params);

  Objective objective() const override { return meta_.objective; }
  std::size_t dim() const override { return meta_.dim; }
  PointBatch predict(const PointBatch& xs, double t, std::span<const Condition> conds) const override;
  using DenoisingModel::predict;

  const ModelMeta& meta() const { return meta_; }
  const ModelParams& params() const { return params_; }
  ModelParams& mutable_params() { return params_; }

 private:
  ModelMeta meta_;
  ModelParams params_;
};

}  // namespace invlab
