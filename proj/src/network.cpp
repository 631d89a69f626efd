#include "invlab/network.hpp"

#include <cmath>
#include <stdexcept>

#include "invlab/error.hpp"

namespace invlab {

std::string to_string(Objective objective) {
  return objective == Objective::FlowMatching ? "flow_matching" : "epsilon_prediction";
}

Objective parse_objective(const std::string& name) {
  if (name == "flow_matching") return Objective::FlowMatching;
  if (name == "epsilon_prediction") return Objective::EpsilonPrediction;
  throw ConfigError("unknown objective '" + name + "'");
}

Vector DenoisingModel::predict(const Vector& x, double t, const Condition& cond) const {
  PointBatch xs = x;
  return predict(xs, t, std::span<const Condition>(&cond, 1)).col(0);
}

Eigen::VectorXd time_embedding(double t) {
  constexpr int half = kTimeFeatures / 2;
  Eigen::VectorXd e(kTimeFeatures);
  for (int k = 0; k < half; ++k) {
    const double freq = std::pow(1000.0, static_cast<double>(k) / (half - 1));
    e[k] = std::sin(freq * t);
    e[k + half] = std::cos(freq * t);
  }
  return e;
}

namespace {

Eigen::MatrixXd silu(const Eigen::MatrixXd& a) {
  return a.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
}

Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& a) {
  return a.unaryExpr([](double v) {
    const double s = 1.0 / (1.0 + std::exp(-v));
    return s * (1.0 + v * (1.0 - s));
  });
}

const Condition& cond_at(std::span<const Condition> conds, Eigen::Index j) {
  return conds.size() == 1 ? conds[0] : conds[static_cast<std::size_t>(j)];
}

void check_conditions(const ModelMeta& meta, std::span<const Condition> conds, Eigen::Index n) {
  if (conds.size() != 1 && conds.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("forward: need one condition or one per point");
  for (const auto& c : conds) {
    if (c.class_id() < 0 || c.class_id() > meta.num_classes)
      throw std::invalid_argument("forward: class id out of range");
    if (const auto& t = c.tight_branch(); t && static_cast<std::size_t>(t->anchor.size()) != meta.dim)
      throw std::invalid_argument("forward: tight anchor dimension mismatch");
  }
}

Eigen::VectorXd standardized_anchor(const ModelMeta& meta, const TightBranch& t) {
  return meta.data_stats.standardize(t.anchor);
}

}  // namespace

ModelParams ModelParams::zeros(const ModelMeta& meta) {
  ModelParams p;
  std::vector<std::size_t> sizes{meta.input_dim()};
  sizes.insert(sizes.end(), meta.hidden.begin(), meta.hidden.end());
  sizes.push_back(meta.dim);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    p.weights.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sizes[l + 1]),
                                              static_cast<Eigen::Index>(sizes[l])));
    p.biases.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sizes[l + 1])));
  }
  p.class_table = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(meta.embed_dim), meta.num_classes + 1);
  p.tight_proj = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(meta.embed_dim), static_cast<Eigen::Index>(meta.dim));
  return p;
}

ModelParams ModelParams::init(const ModelMeta& meta, Rng& rng, bool zero_output_layer) {
  ModelParams p = zeros(meta);
  auto fill = [&rng](Eigen::MatrixXd& m, double std) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = std * rng.standard_normal();
  };
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    if (zero_output_layer && l + 1 == p.weights.size()) continue;
    fill(p.weights[l], 1.0 / std::sqrt(static_cast<double>(p.weights[l].cols())));
  }
  fill(p.class_table, 1.0);
  fill(p.tight_proj, 1.0 / std::sqrt(static_cast<double>(meta.dim)));
  return p;
}

std::vector<ModelParams::TensorView> ModelParams::tensors() {
  std::vector<TensorView> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back({"w" + std::to_string(l), weights[l].data(), weights[l].rows(), weights[l].cols()});
    out.push_back({"b" + std::to_string(l), biases[l].data(), biases[l].rows(), 1});
  }
  out.push_back({"class_table", class_table.data(), class_table.rows(), class_table.cols()});
  out.push_back({"tight_proj", tight_proj.data(), tight_proj.rows(), tight_proj.cols()});
  return out;
}

std::vector<ModelParams::TensorView> ModelParams::tensors() const {
  return const_cast<ModelParams*>(this)->tensors();
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += static_cast<std::size_t>(t.size());
  return n;
}

bool ModelParams::same_shape(const ModelParams& other) const {
  const auto a = tensors();
  const auto b = other.tensors();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].rows != b[i].rows || a[i].cols != b[i].cols) return false;
  return true;
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors())
    if (!Eigen::Map<const Eigen::VectorXd>(t.data, t.size()).allFinite()) return false;
  return true;
}

Eigen::VectorXd condition_embedding(const ModelMeta& meta, const ModelParams& params, const Condition& cond) {
  Eigen::VectorXd e = params.class_table.col(cond.class_id());
  if (const auto& t = cond.tight_branch())
    e += (t->scale * meta.tight_gain) * (params.tight_proj * standardized_anchor(meta, *t));
  return e;
}

ForwardCache forward_batch(const ModelMeta& meta, const ModelParams& params, const PointBatch& xs,
                           const Eigen::VectorXd& times, std::span<const Condition> conds) {
  const Eigen::Index n = xs.cols();
  const auto d = static_cast<Eigen::Index>(meta.dim);
  if (xs.rows() != d) throw std::invalid_argument("forward: point dimension mismatch");
  if (times.size() != n && times.size() != 1) throw std::invalid_argument("forward: need one time or one per point");
  check_conditions(meta, conds, n);

  ForwardCache cache;
  cache.input.resize(static_cast<Eigen::Index>(meta.input_dim()), n);
  cache.input.topRows(d) = xs;
  if (times.size() == 1) {
    cache.input.middleRows(d, kTimeFeatures).colwise() = time_embedding(times[0]);
  } else {
    for (Eigen::Index j = 0; j < n; ++j) cache.input.block(d, j, kTimeFeatures, 1) = time_embedding(times[j]);
  }
  auto emb = cache.input.bottomRows(static_cast<Eigen::Index>(meta.embed_dim));
  if (conds.size() == 1) {
    emb.colwise() = condition_embedding(meta, params, conds[0]);
  } else {
    for (Eigen::Index j = 0; j < n; ++j) emb.col(j) = condition_embedding(meta, params, cond_at(conds, j));
  }

  const Eigen::MatrixXd* h = &cache.input;
  const std::size_t layers = params.weights.size();
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    Eigen::MatrixXd a = params.weights[l] * *h;
    a.colwise() += params.biases[l];
    cache.post.push_back(silu(a));
    cache.pre.push_back(std::move(a));
    h = &cache.post.back();
  }
  cache.output = params.weights.back() * *h;
  cache.output.colwise() += params.biases.back();
  return cache;
}

Vector forward(const ModelMeta& meta, const ModelParams& params, const Vector& x, double t, const Condition& cond) {
  Eigen::VectorXd times(1);
  times[0] = t;
  return forward_batch(meta, params, x, times, std::span<const Condition>(&cond, 1)).output.col(0);
}

LossAndGrad loss_and_grad(const ModelMeta& meta, const ModelParams& params, std::span<const TrainingPair> batch) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto d = static_cast<Eigen::Index>(meta.dim);
  PointBatch xs(d, n);
  PointBatch targets(d, n);
  Eigen::VectorXd times(n);
  std::vector<Condition> conds;
  conds.reserve(batch.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& p = batch[static_cast<std::size_t>(j)];
    xs.col(j) = p.x;
    targets.col(j) = p.target;
    times[j] = p.t;
    conds.push_back(p.cond);
  }

  const ForwardCache cache = forward_batch(meta, params, xs, times, conds);
  const Eigen::MatrixXd diff = cache.output - targets;

  LossAndGrad out;
  out.loss = diff.squaredNorm() / static_cast<double>(n);
  out.grad = ModelParams::zeros(meta);

  const std::size_t layers = params.weights.size();
  Eigen::MatrixXd delta = (2.0 / static_cast<double>(n)) * diff;
  for (std::size_t l = layers; l-- > 0;) {
    const Eigen::MatrixXd& below = l == 0 ? cache.input : cache.post[l - 1];
    out.grad.weights[l].noalias() = delta * below.transpose();
    out.grad.biases[l] = delta.rowwise().sum();
    Eigen::MatrixXd back = params.weights[l].transpose() * delta;
    if (l > 0) {
      delta = back.cwiseProduct(silu_grad(cache.pre[l - 1]));
    } else {
      delta = std::move(back);
    }
  }

  // delta now holds dL/d(input); its bottom rows are the embedding gradient.
  const auto emb_grad = delta.bottomRows(static_cast<Eigen::Index>(meta.embed_dim));
  for (Eigen::Index j = 0; j < n; ++j) {
    const Condition& c = conds[static_cast<std::size_t>(j)];
    out.grad.class_table.col(c.class_id()) += emb_grad.col(j);
    if (const auto& t = c.tight_branch()) {
      out.grad.tight_proj.noalias() +=
          (t->scale * meta.tight_gain) * emb_grad.col(j) * standardized_anchor(meta, *t).transpose();
    }
  }
  return out;
}

AdamState AdamState::for_params(const ModelMeta& meta) {
  AdamState s;
  s.m = ModelParams::zeros(meta);
  s.v = ModelParams::zeros(meta);
  return s;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr) {
  if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v))
    throw std::invalid_argument("adam_step: shape mismatch between params, grads and state");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    Eigen::Map<Eigen::ArrayXd> pa(p[i].data, p[i].size());
    Eigen::Map<const Eigen::ArrayXd> ga(g[i].data, g[i].size());
    Eigen::Map<Eigen::ArrayXd> ma(m[i].data, m[i].size());
    Eigen::Map<Eigen::ArrayXd> va(v[i].data, v[i].size());
    ma = state.beta1 * ma + (1.0 - state.beta1) * ga;
    va = state.beta2 * va + (1.0 - state.beta2) * ga.square();
    pa -= lr * (ma / bc1) / ((va / bc2).sqrt() + state.eps);
  }
  if (!params.all_finite()) throw Error("adam_step: parameters became non-finite");
}

MlpModel::MlpModel(ModelMeta meta, ModelParams params) : meta_(std::move(meta)), params_(std::move(params)) {
  if (!params_.same_shape(ModelParams::zeros(meta_))) throw CheckpointError("MlpModel: parameter shapes do not match meta");
}

PointBatch MlpModel::predict(const PointBatch& xs, double t, std::span<const Condition> conds) const {
  Eigen::VectorXd times(1);
  times[0] = t;
  return forward_batch(meta_, params_, xs, times, conds).output;
}

}  // namespace invlab
