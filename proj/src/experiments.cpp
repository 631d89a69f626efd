#include "invlab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <thread>

#include "invlab/error.hpp"
#include "invlab/export.hpp"
#include "invlab/svg.hpp"

namespace invlab {

namespace {

// Rng stream indices. Training uses 0..2 of the training seed.
constexpr std::uint64_t kEvalStream = 100;
constexpr std::uint64_t kPriorStream = 101;
constexpr std::uint64_t kRandomStream = 102;
constexpr std::uint64_t kNoiseSalt = 0x6e6f6973656d6170ULL;

constexpr Eigen::Index kShardSize = 64;

void say(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << '\n' << std::flush;
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

Objective objective_for(InversionMethod m) {
  return m == InversionMethod::Flow ? Objective::FlowMatching : Objective::EpsilonPrediction;
}

// Runs fn(shard, begin, count) for every shard; results land in caller-owned
// slots, so the worker count never changes the output.
template <typename Fn>
void for_each_shard(Eigen::Index n, Fn&& fn) {
  const auto shards = static_cast<std::size_t>((n + kShardSize - 1) / kShardSize);
  const std::size_t workers = std::min(worker_count(), shards);
  std::vector<std::exception_ptr> errors(shards);
  auto body = [&](std::size_t s) {
    const Eigen::Index begin = static_cast<Eigen::Index>(s) * kShardSize;
    try {
      fn(s, begin, std::min(kShardSize, n - begin));
    } catch (...) {
      errors[s] = std::current_exception();
    }
  };
  if (workers <= 1) {
    for (std::size_t s = 0; s < shards; ++s) body(s);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t s = next++; s < shards; s = next++) body(s);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<Condition> slice(const std::vector<Condition>& v, Eigen::Index begin, Eigen::Index count) {
  if (v.size() == 1) return v;
  return {v.begin() + begin, v.begin() + begin + count};
}

PointBatch concat(const std::vector<PointBatch>& parts) {
  Eigen::Index cols = 0;
  for (const auto& p : parts) cols += p.cols();
  if (parts.empty()) return {};
  PointBatch out(parts.front().rows(), cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p;
    c += p.cols();
  }
  return out;
}

BatchTrajectory concat(const std::vector<BatchTrajectory>& parts) {
  BatchTrajectory out;
  if (parts.empty() || parts.front().size() == 0) return out;
  out.times = parts.front().times;
  for (std::size_t k = 0; k < out.times.size(); ++k) {
    std::vector<PointBatch> ks;
    for (const auto& p : parts) ks.push_back(p.states[k]);
    out.states.push_back(concat(ks));
  }
  return out;
}

BatchTrajectory head_points(const BatchTrajectory& t, Eigen::Index k) {
  BatchTrajectory out;
  out.times = t.times;
  for (const auto& s : t.states) out.states.push_back(s.leftCols(std::min(k, s.cols())));
  return out;
}

PointBatch to_batch(const std::vector<LabeledPoint>& pts) {
  if (pts.empty()) throw ConfigError("no evaluation points");
  PointBatch b(pts.front().x.size(), static_cast<Eigen::Index>(pts.size()));
  for (std::size_t j = 0; j < pts.size(); ++j) b.col(static_cast<Eigen::Index>(j)) = pts[j].x;
  return b;
}

std::vector<Condition> uniform_conditions(const Condition& c, std::size_t n) { return std::vector<Condition>(n, c); }

void write_stream_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fill) {
  std::ostringstream os;
  fill(os);
  write_text_file(path, os.str());
}

// idx,class_id,x*,z*,r*[,e*]
void write_round_trip_points(const std::filesystem::path& path, const std::vector<LabeledPoint>& pts,
                             const RoundTripResult& rt) {
  write_stream_file(path, [&](std::ostream& os) {
    const Eigen::Index d = rt.latents.rows();
    const bool has_r = rt.reconstructions.cols() > 0;
    const bool has_e = rt.edited.has_value();
    os << "idx,class_id";
    for (Eigen::Index i = 0; i < d; ++i) os << ",x" << i;
    for (Eigen::Index i = 0; i < d; ++i) os << ",z" << i;
    if (has_r)
      for (Eigen::Index i = 0; i < d; ++i) os << ",r" << i;
    if (has_e)
      for (Eigen::Index i = 0; i < d; ++i) os << ",e" << i;
    os << '\n';
    for (std::size_t j = 0; j < pts.size(); ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      os << j << ',' << pts[j].class_id;
      for (Eigen::Index i = 0; i < d; ++i) os << ',' << format_double(pts[j].x[i]);
      for (Eigen::Index i = 0; i < d; ++i) os << ',' << format_double(rt.latents(i, c));
      if (has_r)
        for (Eigen::Index i = 0; i < d; ++i) os << ',' << format_double(rt.reconstructions(i, c));
      if (has_e)
        for (Eigen::Index i = 0; i < d; ++i) os << ',' << format_double((*rt.edited)(i, c));
      os << '\n';
    }
  });
}

void write_trajectory_file(const std::filesystem::path& path, const BatchTrajectory& t) {
  write_stream_file(path, [&](std::ostream& os) { write_trajectories_csv(os, t); });
}

void write_provenance(const ExperimentConfig& config, const LoadedModel* model) {
  write_json_file(config.out / "resolved_config.json", nlohmann::json(config));
  nlohmann::json p = {{"tool", "invlab"}, {"version", INVLAB_VERSION}, {"experiment", to_string(config.kind)}};
  if (model) {
    p["checkpoint"] = model->path.string();
    p["checkpoint_hash"] = model->hash;
    p["objective"] = to_string(model->model.objective());
  } else {
    p["checkpoint"] = nullptr;
    p["checkpoint_hash"] = nullptr;
  }
  write_json_file(config.out / "provenance.json", p);
}

SvgScatter scene_for(const PointBatch& x0, const RoundTripResult& rt, Eigen::Index paths) {
  SvgScatter s;
  s.posterior = columns(x0);
  s.latents = columns(rt.latents);
  if (rt.reconstructions.cols() > 0) s.reconstructions = columns(rt.reconstructions);
  const auto np = std::min<Eigen::Index>(paths, x0.cols());
  for (Eigen::Index j = 0; j < np; ++j) {
    if (rt.inversion_trajectory.size() > 0) s.inversion_paths.push_back(rt.inversion_trajectory.point(j));
    if (rt.denoise_trajectory.size() > 0) s.denoise_paths.push_back(rt.denoise_trajectory.point(j));
  }
  // Offset segments between states at equal times, every few steps.
  if (rt.inversion_trajectory.size() > 0 && rt.denoise_trajectory.size() == rt.inversion_trajectory.size()) {
    const std::size_t K = rt.inversion_trajectory.size();
    const std::size_t stride = std::max<std::size_t>(1, (K - 1) / 20);
    for (Eigen::Index j = 0; j < np; ++j)
      for (std::size_t k = 0; k < K; k += stride)
        s.offsets.emplace_back(rt.inversion_trajectory.states[k].col(j),
                               rt.denoise_trajectory.states[K - 1 - k].col(j));
  }
  return s;
}

double chi2_uniform(const std::vector<std::size_t>& counts) {
  double n = 0.0;
  for (auto c : counts) n += static_cast<double>(c);
  const double e = n / static_cast<double>(counts.size());
  double chi2 = 0.0;
  for (auto c : counts) chi2 += (static_cast<double>(c) - e) * (static_cast<double>(c) - e) / e;
  return chi2;
}

std::vector<std::size_t> cluster_counts(const PointBatch& pts, const GmmSpec& spec) {
  std::vector<std::size_t> counts(spec.size(), 0);
  for (Eigen::Index j = 0; j < pts.cols(); ++j) ++counts[spec.component_of(assign_cluster(pts.col(j), spec))];
  return counts;
}

// Deterministic sampling from given terminal latents (no inversion).
PointBatch sample_from(const LoadedModel& lm, const ExperimentConfig& config, const PointBatch& z,
                       const std::vector<Condition>& conds) {
  const InversionSettings settings = config.inversion_settings(lm.sched());
  std::vector<PointBatch> parts((static_cast<std::size_t>(z.cols()) + kShardSize - 1) / kShardSize);
  for_each_shard(z.cols(), [&](std::size_t s, Eigen::Index b, Eigen::Index m) {
    const auto c = slice(conds, b, m);
    if (lm.model.objective() == Objective::FlowMatching)
      parts[s] = euler_sample(lm.model, z.middleCols(b, m), FlowGrid(settings.flow_steps), c, settings.guidance).first;
    else
      parts[s] = ddim_sample(lm.model, z.middleCols(b, m), c, *lm.sched(), settings.guidance, settings.timesteps)
                     .states.back();
  });
  return concat(parts);
}

std::string method_name(const ExperimentConfig& c) { return to_string(c.method.name); }

}  // namespace

std::size_t worker_count() {
  if (const char* env = std::getenv("INVLAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

LoadedModel load_or_train(const ExperimentConfig& config, Objective required, std::ostream* log) {
  const auto path = config.checkpoint_path();
  if (!std::filesystem::exists(path)) {
    if (!config.train_if_missing) throw CheckpointError("checkpoint " + path.string() + " not found");
    TrainConfig tc;
    if (config.train) {
      tc = *config.train;
    } else {
      tc.objective = required;
    }
    if (tc.objective != required)
      throw ConfigError("train.objective is " + to_string(tc.objective) + " but the experiment needs " +
                        to_string(required));
    ExperimentConfig tcfg = config;
    tcfg.train = tc;
    say(log, "training " + to_string(required) + " model into " + path.string());
    run_train(tcfg, log);
  }
  Checkpoint ck = load_checkpoint(path);
  if (ck.meta.objective != required)
    throw CheckpointError("checkpoint " + path.string() + " holds a " + to_string(ck.meta.objective) +
                          " model, expected " + to_string(required));
  if (nlohmann::json(ck.meta.dataset) != nlohmann::json(config.dataset))
    throw CheckpointError("checkpoint " + path.string() + " was trained on a different dataset");
  LoadedModel lm{ck.model(), std::nullopt, path, file_hash(path)};
  if (required == Objective::EpsilonPrediction)
    lm.schedule = linear_beta_schedule(ck.meta.diffusion_steps, ck.meta.beta_min, ck.meta.beta_max);
  return lm;
}

std::vector<LabeledPoint> evaluation_points(const ExperimentConfig& config, std::uint64_t seed,
                                            std::optional<int> fallback_class) {
  if (config.input) {
    std::ifstream is(*config.input);
    if (!is) throw ConfigError("cannot open input " + config.input->string());
    auto pts = read_points_csv(is);
    if (pts.empty()) throw ConfigError("input " + config.input->string() + " has no points");
    if (static_cast<std::size_t>(pts.front().x.size()) != config.dataset.dim())
      throw ConfigError("input points do not match the dataset dimension");
    return pts;
  }
  Rng rng = Rng::stream(seed, kEvalStream);
  const auto cls = config.eval.source_class ? config.eval.source_class : fallback_class;
  if (cls) return sample_component(config.dataset, *cls, rng, config.eval.points);
  return sample_posterior(config.dataset, rng, config.eval.points);
}

std::vector<Condition> build_conditions(const ConditionConfig& cc, const std::vector<LabeledPoint>& points) {
  std::vector<Condition> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    switch (cc.mode) {
      case ConditionMode::Null: out.push_back(Condition::null()); break;
      case ConditionMode::Class: out.push_back(Condition::of_class(cc.label.value_or(p.class_id))); break;
      case ConditionMode::Tight: out.push_back(Condition::tight(p.x, cc.scale)); break;
    }
  }
  return out;
}

RoundTripResult run_round_trip(const LoadedModel& lm, const ExperimentConfig& config, const PointBatch& x0,
                               const RoundTripRequest& req) {
  const Eigen::Index n = x0.cols();
  const auto check = [&](const std::vector<Condition>& c, const char* what) {
    if (!c.empty() && c.size() != 1 && static_cast<Eigen::Index>(c.size()) != n)
      throw std::invalid_argument(std::string("run_round_trip: ") + what + " conditions do not match the points");
  };
  if (req.inversion.empty()) throw std::invalid_argument("run_round_trip: no inversion conditions");
  check(req.inversion, "inversion");
  check(req.reconstruction, "reconstruction");
  check(req.edit, "edit");
  if (objective_for(config.method.name) != lm.model.objective())
    throw CheckpointError(method_name(config) + " inversion does not fit a " + to_string(lm.model.objective()) +
                          " model");

  const InversionSettings settings = config.inversion_settings(lm.sched());
  const auto shards = static_cast<std::size_t>((n + kShardSize - 1) / kShardSize);

  struct Part {
    PointBatch latents, recon, edited;
    BatchTrajectory inv, den;
    std::vector<Eigen::VectorXd> residuals;
    int iterations = 0;
    std::optional<NoiseMapSet> maps;
  };
  std::vector<Part> parts(shards);

  for_each_shard(n, [&](std::size_t s, Eigen::Index b, Eigen::Index m) {
    Part& out = parts[s];
    const PointBatch xs = x0.middleCols(b, m);
    const auto ic = slice(req.inversion, b, m);
    const auto rc = req.reconstruction.empty() ? ic : slice(req.reconstruction, b, m);
    BatchTrajectory* den = req.keep_trajectories ? &out.den : nullptr;

    if (config.method.name == InversionMethod::EditFriendly) {
      Rng rng = Rng::stream(req.noise_seed ^ kNoiseSalt, s);
      NoiseMapSet maps = editfriendly_invert(lm.model, xs, ic, *lm.sched(), rng, settings.guidance);
      out.latents = maps.x_T;
      if (req.reconstruct) out.recon = ddpm_replay(lm.model, maps, rc, *lm.sched(), settings.guidance, den);
      if (!req.edit.empty())
        out.edited = edit_by_condition_swap(lm.model, maps, slice(req.edit, b, m), Sampler::Ddpm, *lm.sched());
      out.maps = std::move(maps);
      return;
    }

    BatchInversion inv;
    Sampler sampler = Sampler::Ddim;
    switch (config.method.name) {
      case InversionMethod::Flow:
        inv = flow_invert(lm.model, xs, ic, settings);
        sampler = Sampler::Flow;
        break;
      case InversionMethod::ReNoise: inv = renoise_invert(lm.model, xs, ic, *lm.sched(), settings); break;
      default: inv = ddim_invert(lm.model, xs, ic, *lm.sched(), settings); break;
    }
    if (req.reconstruct) out.recon = denoise_from(lm.model, inv, rc, lm.sched(), settings, den);
    if (!req.edit.empty())
      out.edited = edit_by_condition_swap(lm.model, inv, slice(req.edit, b, m), sampler, lm.sched(), settings);
    out.latents = inv.terminal;
    out.residuals = std::move(inv.residuals);
    out.iterations = inv.iterations;
    if (req.keep_trajectories) out.inv = std::move(inv.trajectory);
  });

  RoundTripResult rt;
  std::vector<PointBatch> lat, rec, ed;
  std::vector<BatchTrajectory> it, dt;
  for (auto& p : parts) {
    lat.push_back(std::move(p.latents));
    if (req.reconstruct) rec.push_back(std::move(p.recon));
    if (!req.edit.empty()) ed.push_back(std::move(p.edited));
    it.push_back(std::move(p.inv));
    dt.push_back(std::move(p.den));
  }
  rt.latents = concat(lat);
  if (req.reconstruct) rt.reconstructions = concat(rec);
  if (!req.edit.empty()) rt.edited = concat(ed);
  if (req.keep_trajectories) {
    rt.inversion_trajectory = concat(it);
    rt.denoise_trajectory = concat(dt);
  }
  rt.iterations = parts.front().iterations;
  for (std::size_t i = 0; i < parts.front().residuals.size(); ++i) {
    Eigen::VectorXd r(n);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
      r.segment(c, p.residuals[i].size()) = p.residuals[i];
      c += p.residuals[i].size();
    }
    rt.residuals.push_back(std::move(r));
  }
  if (parts.front().maps) {
    NoiseMapSet maps;
    std::vector<PointBatch> xt;
    for (const auto& p : parts) {
      xt.push_back(p.maps->x_T);
      maps.conditions.insert(maps.conditions.end(), p.maps->conditions.begin(), p.maps->conditions.end());
    }
    maps.x_T = concat(xt);
    maps.guidance = parts.front().maps->guidance;
    for (std::size_t i = 0; i < parts.front().maps->maps.size(); ++i) {
      std::vector<PointBatch> mi;
      for (const auto& p : parts) mi.push_back(p.maps->maps[i]);
      maps.maps.push_back(concat(mi));
    }
    rt.noise_maps = std::move(maps);
  }
  return rt;
}

MetricsReport make_report(const std::string& label, const PointBatch& x0, const RoundTripResult& rt,
                          const GmmSpec& spec, int target_class, double radius, std::size_t offset_points) {
  MetricsReport r;
  r.label = label;
  if (rt.reconstructions.cols() > 0) {
    const Eigen::VectorXd l2 = recon_l2(x0, rt.reconstructions);
    r.l2.assign(l2.data(), l2.data() + l2.size());
  }
  for (Eigen::Index j = 0; j < x0.cols(); ++j)
    r.out_of_distribution.push_back(is_out_of_distribution(x0.col(j), spec) ? 1 : 0);
  for (Eigen::Index j = 0; j < rt.latents.cols(); ++j) {
    r.latents.emplace_back(rt.latents.col(j));
    r.latent_nll.push_back(standard_normal_nll(r.latents.back()));
  }
  if (rt.edited) {
    for (Eigen::Index j = 0; j < rt.edited->cols(); ++j) {
      const PointBatch one = rt.edited->col(j);
      r.edited_cluster.push_back(assign_cluster(one.col(0), spec));
      r.edit_success.push_back(edit_success_rate(one, target_class, spec, radius) > 0.5 ? 1 : 0);
    }
  }
  if (rt.inversion_trajectory.size() > 0 && rt.denoise_trajectory.size() > 0) {
    const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(offset_points), x0.cols());
    for (Eigen::Index j = 0; j < k; ++j)
      r.offsets.push_back(trajectory_offsets(rt.inversion_trajectory.point(j), rt.denoise_trajectory.point(j)));
  }
  return r;
}

SummaryRow summarize(const std::string& experiment, const std::string& method, const std::string& condition,
                     std::optional<double> scale, std::uint64_t seed, const MetricsReport& report) {
  SummaryRow row;
  row.experiment = experiment;
  row.method = method;
  row.condition = condition;
  row.scale = scale;
  row.seed = std::to_string(seed);
  row.points = std::max(report.l2.size(), report.latents.size());
  row.mean_l2 = report.mean_l2();
  if (!report.l2.empty()) row.median_l2 = report.median_l2();
  if (!report.latent_nll.empty()) row.mean_latent_nll = report.mean_nll();
  row.edit_success = report.edit_success_rate();
  return row;
}

std::vector<SummaryRow> seed_means(const std::vector<SummaryRow>& rows) {
  std::vector<SummaryRow> out;
  std::vector<std::size_t> counts;
  for (const auto& r : rows) {
    if (r.seed == "mean") continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRow& o) {
      return o.experiment == r.experiment && o.method == r.method && o.condition == r.condition && o.scale == r.scale;
    });
    if (it == out.end()) {
      out.push_back(r);
      out.back().seed = "mean";
      counts.push_back(1);
      continue;
    }
    const auto i = static_cast<std::size_t>(it - out.begin());
    ++counts[i];
    it->points += r.points;
    it->mean_l2 += r.mean_l2;
    const auto add = [](std::optional<double>& a, const std::optional<double>& b) {
      if (a && b) *a += *b;
      else a.reset();
    };
    add(it->median_l2, r.median_l2);
    add(it->mean_latent_nll, r.mean_latent_nll);
    add(it->edit_success, r.edit_success);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double c = static_cast<double>(counts[i]);
    out[i].mean_l2 /= c;
    for (auto* v : {&out[i].median_l2, &out[i].mean_latent_nll, &out[i].edit_success})
      if (*v) **v /= c;
  }
  return out;
}

namespace {

constexpr const char* kSummaryHeader =
    "experiment,method,condition,scale,seed,points,mean_l2,median_l2,mean_latent_nll,edit_success";

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  write_stream_file(path, [&](std::ostream& os) {
    os << kSummaryHeader << '\n';
    for (const auto& r : rows)
      os << r.experiment << ',' << r.method << ',' << r.condition << ',' << opt(r.scale) << ',' << r.seed << ','
         << r.points << ',' << format_double(r.mean_l2) << ',' << opt(r.median_l2) << ',' << opt(r.mean_latent_nll)
         << ',' << opt(r.edit_success) << '\n';
  });
}

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kSummaryHeader) throw ConfigError(path.string() + ": not a summary table");
  std::vector<SummaryRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 10) throw ConfigError(path.string() + ": bad row '" + line + "'");
    try {
      SummaryRow r;
      r.experiment = cells[0];
      r.method = cells[1];
      r.condition = cells[2];
      r.scale = parse_opt(cells[3]);
      r.seed = cells[4];
      r.points = std::stoul(cells[5]);
      r.mean_l2 = std::stod(cells[6]);
      r.median_l2 = parse_opt(cells[7]);
      r.mean_latent_nll = parse_opt(cells[8]);
      r.edit_success = parse_opt(cells[9]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ConfigError(path.string() + ": bad row '" + line + "'");
    }
  }
  return rows;
}

TrainRun run_train(const ExperimentConfig& config, std::ostream* log) {
  TrainConfig tc = config.train.value_or(TrainConfig{});
  tc.validate();
  const TrainResult res = train_model(tc, config.dataset, [&](const LossRecord& r) {
    say(log, "step " + std::to_string(r.step) + " loss " + fixed(r.loss));
  });
  const auto path = config.checkpoint_path();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const nlohmann::json run = {{"train", tc}, {"dataset", config.dataset}};
  save_checkpoint(path, res.model.meta(), res.model.params(), &res.optimizer, run);

  write_stream_file(config.out / "loss_history.csv", [&](std::ostream& os) {
    os << "step,loss\n";
    for (const auto& r : res.history) os << r.step << ',' << format_double(r.loss) << '\n';
  });
  write_json_file(config.out / "train_summary.json",
                  {{"objective", to_string(tc.objective)},
                   {"steps", tc.steps},
                   {"initial_loss", res.initial_loss},
                   {"final_loss", res.final_loss},
                   {"loss_ratio", res.initial_loss / res.final_loss},
                   {"checkpoint", path.string()}});
  ExperimentConfig resolved = config;
  resolved.train = tc;
  resolved.kind = ExperimentKind::Train;
  const LoadedModel lm{res.model, std::nullopt, path, file_hash(path)};
  write_provenance(resolved, &lm);
  say(log, "loss " + fixed(res.initial_loss) + " -> " + fixed(res.final_loss));
  return {res.initial_loss, res.final_loss, path};
}

void run_invert(const ExperimentConfig& config, std::ostream* log) {
  const LoadedModel lm = load_or_train(config, objective_for(config.method.name), log);
  write_provenance(config, &lm);
  const auto pts = evaluation_points(config, config.seed);
  const PointBatch x0 = to_batch(pts);
  RoundTripRequest req;
  req.inversion = build_conditions(config.condition, pts);
  req.keep_trajectories = true;
  req.reconstruct = false;
  req.noise_seed = config.seed;
  const RoundTripResult rt = run_round_trip(lm, config, x0, req);

  write_round_trip_points(config.out / "latents.csv", pts, rt);
  if (rt.noise_maps) {
    write_stream_file(config.out / "noise_maps.csv",
                      [&](std::ostream& os) { write_noise_maps_csv(os, *rt.noise_maps, lm.sched()->steps()); });
    write_json_file(config.out / "noise_maps.json", noise_map_sidecar(*rt.noise_maps, config.seed));
  } else {
    write_trajectory_file(config.out / "inversion_trajectories.csv", rt.inversion_trajectory);
    BatchInversion inv;
    inv.terminal = rt.latents;
    inv.trajectory = rt.inversion_trajectory;
    inv.method = config.method.name;
    inv.conditions = req.inversion;
    inv.residuals = rt.residuals;
    inv.iterations = rt.iterations;
    write_json_file(config.out / "inversion.json", inversion_sidecar(inv, config.seed));
  }
  say(log, "inverted " + std::to_string(x0.cols()) + " points with " + method_name(config));
}

MetricsReport run_reconstruct(const ExperimentConfig& config, std::ostream* log) {
  const LoadedModel lm = load_or_train(config, objective_for(config.method.name), log);
  write_provenance(config, &lm);
  const auto pts = evaluation_points(config, config.seed);
  const PointBatch x0 = to_batch(pts);
  RoundTripRequest req;
  req.inversion = build_conditions(config.condition, pts);
  req.keep_trajectories = true;
  req.noise_seed = config.seed;
  const RoundTripResult rt = run_round_trip(lm, config, x0, req);
  const MetricsReport rep = make_report("reconstruct", x0, rt, config.dataset, config.eval.target_class,
                                        config.eval.radius, config.eval.trajectory_points);

  const auto k = static_cast<Eigen::Index>(config.eval.trajectory_points);
  write_round_trip_points(config.out / "points.csv", pts, rt);
  if (rt.inversion_trajectory.size() > 0)
    write_trajectory_file(config.out / "inversion_trajectories.csv", head_points(rt.inversion_trajectory, k));
  write_trajectory_file(config.out / "denoise_trajectories.csv", head_points(rt.denoise_trajectory, k));
  write_json_file(config.out / "metrics.json", nlohmann::json(rep));
  const std::optional<double> scale =
      config.condition.mode == ConditionMode::Tight ? std::optional<double>(config.condition.scale) : std::nullopt;
  write_summary_csv(config.out / "summary.csv",
                    {summarize("reconstruct", method_name(config), to_string(config.condition.mode), scale,
                               config.seed, rep)});
  SvgStyle style;
  style.title = "reconstruct: " + method_name(config) + ", " + to_string(config.condition.mode);
  emit_svg_scatter(scene_for(x0, rt, k), style, config.out / "reconstruction.svg");
  say(log, "mean L2 " + fixed(rep.mean_l2()) + ", mean latent NLL " + fixed(rep.mean_nll()));
  return rep;
}

MetricsReport run_edit(const ExperimentConfig& config, std::ostream* log) {
  const LoadedModel lm = load_or_train(config, objective_for(config.method.name), log);
  write_provenance(config, &lm);
  const auto pts = evaluation_points(config, config.seed);
  const PointBatch x0 = to_batch(pts);
  RoundTripRequest req;
  req.inversion = build_conditions(config.condition, pts);
  const Condition target = Condition::of_class(config.eval.target_class);
  for (const auto& c : req.inversion) req.edit.push_back(compose_edit_condition(c, target, config.method.edit_policy));
  req.noise_seed = config.seed;
  const RoundTripResult rt = run_round_trip(lm, config, x0, req);
  const MetricsReport rep =
      make_report("edit", x0, rt, config.dataset, config.eval.target_class, config.eval.radius);

  write_round_trip_points(config.out / "points.csv", pts, rt);
  write_json_file(config.out / "metrics.json", nlohmann::json(rep));
  const std::optional<double> scale =
      config.condition.mode == ConditionMode::Tight ? std::optional<double>(config.condition.scale) : std::nullopt;
  write_summary_csv(config.out / "summary.csv",
                    {summarize("edit", method_name(config), to_string(config.condition.mode), scale, config.seed,
                               rep)});
  SvgScatter scene;
  scene.posterior = columns(x0);
  scene.reconstructions = columns(*rt.edited);
  SvgStyle style;
  style.title = "edit to class " + std::to_string(config.eval.target_class);
  emit_svg_scatter(scene, style, config.out / "edit.svg");
  say(log, "edit success " + fixed(rep.edit_success_rate().value_or(0.0)) + ", mean L2 " + fixed(rep.mean_l2()));
  return rep;
}

Fig3Result run_fig3(const ExperimentConfig& base, std::ostream* log) {
  ExperimentConfig config = base;
  config.method.name = InversionMethod::Flow;
  const LoadedModel lm = load_or_train(config, Objective::FlowMatching, log);
  write_provenance(config, &lm);
  const auto k = static_cast<Eigen::Index>(config.eval.trajectory_points);
  const GmmSpec& spec = config.dataset;
  const InversionSettings settings = config.inversion_settings(nullptr);

  Fig3Result result;
  nlohmann::json metrics;
  std::vector<SummaryRow> rows;

  // (a) prior draws denoised under the null condition.
  {
    Rng rng = Rng::stream(config.seed, kPriorStream);
    const PointBatch z = sample_standard_normal_batch(rng, spec.dim(), config.eval.points);
    const auto [x, traj] =
        euler_sample(lm.model, z, FlowGrid(settings.flow_steps), uniform_conditions(Condition::null(), 1),
                     settings.guidance);
    result.prior_cluster_counts = cluster_counts(x, spec);
    write_trajectory_file(config.out / "panel_a_denoise.csv", head_points(traj, k));
    std::vector<LabeledPoint> pts;
    for (Eigen::Index j = 0; j < z.cols(); ++j) pts.push_back({z.col(j), 0});
    RoundTripResult view;
    view.latents = z;
    view.reconstructions = x;
    view.denoise_trajectory = traj;
    write_stream_file(config.out / "panel_a_points.csv", [&](std::ostream& os) {
      os << "idx,z0,z1,x0,x1,cluster\n";
      for (Eigen::Index j = 0; j < z.cols(); ++j)
        os << j << ',' << format_double(z(0, j)) << ',' << format_double(z(1, j)) << ',' << format_double(x(0, j))
           << ',' << format_double(x(1, j)) << ',' << assign_cluster(x.col(j), spec) << '\n';
    });
    SvgScatter scene = scene_for(x, view, k);
    scene.posterior.clear();
    SvgStyle style;
    style.title = "(a) prior samples, null condition";
    emit_svg_scatter(scene, style, config.out / "panel_a.svg");
    metrics["a"] = {{"label", "prior samples, null condition"},
                    {"points", z.cols()},
                    {"cluster_counts", result.prior_cluster_counts}};
  }

  const int source = config.eval.source_class.value_or(spec.max_class_id());
  const int wrong = config.eval.target_class;
  const auto pts = evaluation_points(config, config.seed, source);
  const PointBatch x0 = to_batch(pts);

  struct Panel {
    const char* id;
    std::string label;
    std::string condition;
    Condition cond;
    MetricsReport* out;
  };
  const Panel panels[] = {
      {"b", "null condition", "null", Condition::null(), &result.null_condition},
      {"c", "correct class " + std::to_string(source), "class", Condition::of_class(source),
       &result.correct_condition},
      {"d", "wrong class " + std::to_string(wrong), "wrong_class", Condition::of_class(wrong),
       &result.wrong_condition},
  };
  for (const auto& p : panels) {
    RoundTripRequest req;
    req.inversion = uniform_conditions(p.cond, 1);
    req.keep_trajectories = true;
    const RoundTripResult rt = run_round_trip(lm, config, x0, req);
    *p.out = make_report(p.label, x0, rt, spec, wrong, config.eval.radius, config.eval.trajectory_points);
    const std::string id = p.id;
    write_trajectory_file(config.out / ("panel_" + id + "_inversion.csv"), head_points(rt.inversion_trajectory, k));
    write_trajectory_file(config.out / ("panel_" + id + "_denoise.csv"), head_points(rt.denoise_trajectory, k));
    write_round_trip_points(config.out / ("panel_" + id + "_points.csv"), pts, rt);
    SvgStyle style;
    style.title = "(" + id + ") " + p.label;
    emit_svg_scatter(scene_for(x0, rt, k), style, config.out / ("panel_" + id + ".svg"));
    metrics[id] = *p.out;
    rows.push_back(summarize("fig3", "flow", p.condition, std::nullopt, config.seed, *p.out));
    say(log, "panel " + id + ": mean L2 " + fixed(p.out->mean_l2()) + ", latent NLL " + fixed(p.out->mean_nll()) +
                 ", cov trace " + fixed(p.out->cloud().cov_trace));
  }
  write_json_file(config.out / "metrics.json", metrics);
  write_summary_csv(config.out / "summary.csv", rows);
  return result;
}

Table1Result run_table1_analog(const ExperimentConfig& config, std::ostream* log) {
  const LoadedModel lm = load_or_train(config, objective_for(config.method.name), log);
  write_provenance(config, &lm);
  Table1Result result;
  nlohmann::json reports = nlohmann::json::array();
  const std::string method = method_name(config);

  for (const auto seed : config.seeds()) {
    const auto pts = evaluation_points(config, seed);
    const PointBatch x0 = to_batch(pts);
    const ConditionConfig variants[] = {{ConditionMode::Null, std::nullopt, 0.0},
                                        {ConditionMode::Class, std::nullopt, 0.0},
                                        {ConditionMode::Tight, std::nullopt, config.eval.tight_scale}};
    for (const auto& cc : variants) {
      RoundTripRequest req;
      req.inversion = build_conditions(cc, pts);
      req.noise_seed = seed;
      const RoundTripResult rt = run_round_trip(lm, config, x0, req);
      const std::string cond = to_string(cc.mode);
      const MetricsReport rep = make_report(cond, x0, rt, config.dataset, config.eval.target_class, config.eval.radius);
      const std::optional<double> scale = cc.mode == ConditionMode::Tight ? std::optional<double>(cc.scale) : std::nullopt;
      result.rows.push_back(summarize("table1", method, cond, scale, seed, rep));
      reports.push_back({{"seed", seed}, {"condition", cond}, {"report", rep}});
      say(log, "seed " + std::to_string(seed) + " " + cond + ": mean L2 " + fixed(rep.mean_l2()) + ", latent NLL " +
                   fixed(rep.mean_nll()));
    }
  }
  const auto means = seed_means(result.rows);
  for (const auto& m : means) {
    if (m.condition == "null") result.null_l2 = m.mean_l2;
    if (m.condition == "class") result.class_l2 = m.mean_l2;
    if (m.condition == "tight") result.tight_l2 = m.mean_l2;
  }
  result.rows.insert(result.rows.end(), means.begin(), means.end());

  write_stream_file(config.out / "table1.csv", [&](std::ostream& os) {
    os << "method,condition,scale,seed,mean_l2,mean_latent_nll\n";
    for (const auto& r : result.rows)
      os << r.method << ',' << r.condition << ',' << opt(r.scale) << ',' << r.seed << ',' << format_double(r.mean_l2)
         << ',' << opt(r.mean_latent_nll) << '\n';
  });
  write_summary_csv(config.out / "summary.csv", result.rows);
  write_json_file(config.out / "metrics.json", {{"reports", reports}});
  say(log, "mean L2 null " + fixed(result.null_l2) + " > class " + fixed(result.class_l2) + " > tight " +
               fixed(result.tight_l2));
  return result;
}

SweepResult run_scale_sweep(const ExperimentConfig& config, std::ostream* log) {
  const LoadedModel lm = load_or_train(config, objective_for(config.method.name), log);
  write_provenance(config, &lm);
  SweepResult result;
  result.scales = config.eval.scales;
  const std::string method = method_name(config);
  const int source = config.eval.source_class.value_or(config.dataset.max_class_id());
  const Condition target = Condition::of_class(config.eval.target_class);
  nlohmann::json reports = nlohmann::json::array();

  for (const auto seed : config.seeds()) {
    const auto pts = evaluation_points(config, seed, source);
    const PointBatch x0 = to_batch(pts);
    for (double s : result.scales) {
      RoundTripRequest req;
      req.inversion = tighten_all(x0, s);
      for (const auto& c : req.inversion)
        req.edit.push_back(compose_edit_condition(c, target, config.method.edit_policy));
      req.noise_seed = seed;
      const RoundTripResult rt = run_round_trip(lm, config, x0, req);
      const MetricsReport rep =
          make_report("tight", x0, rt, config.dataset, config.eval.target_class, config.eval.radius);
      result.rows.push_back(summarize("sweep-scale", method, "tight", s, seed, rep));
      reports.push_back({{"seed", seed},
                         {"scale", s},
                         {"mean_l2", rep.mean_l2()},
                         {"edit_success_rate", rep.edit_success_rate().value_or(0.0)},
                         {"l2", rep.l2},
                         {"edit_success", rep.edit_success}});
      say(log, "seed " + std::to_string(seed) + " s=" + format_double(s) + ": mean L2 " + fixed(rep.mean_l2()) +
                   ", edit success " + fixed(rep.edit_success_rate().value_or(0.0)));
    }
  }
  const auto means = seed_means(result.rows);
  for (double s : result.scales) {
    const auto it = std::find_if(means.begin(), means.end(), [&](const SummaryRow& r) { return r.scale == s; });
    result.mean_l2.push_back(it->mean_l2);
    result.edit_success.push_back(it->edit_success.value_or(0.0));
  }
  result.rows.insert(result.rows.end(), means.begin(), means.end());

  write_summary_csv(config.out / "sweep.csv", result.rows);
  write_summary_csv(config.out / "summary.csv", result.rows);
  write_stream_file(config.out / "sweep_summary.csv", [&](std::ostream& os) {
    os << "metric";
    for (double s : result.scales) os << ",s=" << format_double(s);
    os << "\nmean_l2";
    for (double v : result.mean_l2) os << ',' << format_double(v);
    os << "\nedit_success";
    for (double v : result.edit_success) os << ',' << format_double(v);
    os << '\n';
  });
  write_json_file(config.out / "metrics.json", {{"scales", result.scales}, {"runs", reports}});

  SvgSeries series{"tradeoff", "#1f5fbf", result.edit_success, result.mean_l2, {}};
  for (double s : result.scales) series.labels.push_back("s=" + format_double(s));
  SvgStyle style;
  style.title = "reconstruction vs editability";
  write_text_file(config.out / "tradeoff.svg",
                  render_svg_curve({series}, "edit success rate", "round-trip L2", style));
  return result;
}

BaselineResult run_random_noise_baseline(const ExperimentConfig& config, std::ostream* log) {
  const LoadedModel lm = load_or_train(config, objective_for(config.method.name), log);
  write_provenance(config, &lm);
  const auto pts = evaluation_points(config, config.seed);
  const PointBatch x0 = to_batch(pts);
  const double s = config.eval.tight_scale;
  const GmmSpec& spec = config.dataset;
  BaselineResult result;

  RoundTripRequest req;
  req.inversion = tighten_all(x0, s);
  req.noise_seed = config.seed;
  const RoundTripResult rt = run_round_trip(lm, config, x0, req);
  result.tight_inversion = make_report("tight inversion", x0, rt, spec, config.eval.target_class, config.eval.radius);

  Rng rng = Rng::stream(config.seed, kRandomStream);
  const PointBatch z = sample_standard_normal_batch(rng, spec.dim(), static_cast<std::size_t>(x0.cols()));
  RoundTripResult random;
  random.latents = z;
  random.reconstructions = sample_from(lm, config, z, req.inversion);
  result.random_noise = make_report("random noise", x0, random, spec, config.eval.target_class, config.eval.radius);

  // s = 0 removes the anchor, leaving unconditional sampling.
  const PointBatch uncond = sample_from(lm, config, z, tighten_all(x0, 0.0));
  result.unconditional_cluster_counts = cluster_counts(uncond, spec);
  result.unconditional_chi2 = chi2_uniform(result.unconditional_cluster_counts);

  const std::string method = method_name(config);
  write_summary_csv(config.out / "summary.csv",
                    {summarize("baseline-random", method, "tight", s, config.seed, result.tight_inversion),
                     summarize("baseline-random", "random_noise", "tight", s, config.seed, result.random_noise)});
  write_json_file(config.out / "baseline.json",
                  {{"tight_scale", s},
                   {"tight_inversion", result.tight_inversion},
                   {"random_noise", result.random_noise},
                   {"l2_ratio", result.tight_inversion.mean_l2() / result.random_noise.mean_l2()},
                   {"unconditional", {{"cluster_counts", result.unconditional_cluster_counts},
                                      {"chi2", result.unconditional_chi2},
                                      {"dof", spec.size() - 1}}}});
  say(log, "mean L2 tight inversion " + fixed(result.tight_inversion.mean_l2()) + ", random noise " +
               fixed(result.random_noise.mean_l2()));
  return result;
}

std::vector<SummaryRow> run_report(const ExperimentConfig& config, std::ostream* log) {
  const auto dirs = config.inputs.empty() ? std::vector<std::filesystem::path>{config.out} : config.inputs;
  std::vector<std::filesystem::path> files;
  for (const auto& d : dirs) {
    if (!std::filesystem::is_directory(d)) throw ConfigError("report input " + d.string() + " is not a directory");
    for (const auto& e : std::filesystem::recursive_directory_iterator(d))
      if (e.is_regular_file() && e.path().filename() == "summary.csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  std::vector<SummaryRow> rows;
  std::vector<std::string> sources;
  for (const auto& f : files) {
    auto r = read_summary_csv(f);
    rows.insert(rows.end(), r.begin(), r.end());
    sources.push_back(f.string());
  }
  write_provenance(config, nullptr);
  write_summary_csv(config.out / "report.csv", rows);
  write_json_file(config.out / "report.json", {{"sources", sources}, {"rows", rows.size()}});
  say(log, "collected " + std::to_string(rows.size()) + " rows from " + std::to_string(files.size()) + " tables");
  return rows;
}

void run_experiment(const ExperimentConfig& config, std::ostream* log) {
  switch (config.kind) {
    case ExperimentKind::Train: run_train(config, log); return;
    case ExperimentKind::Invert: run_invert(config, log); return;
    case ExperimentKind::Reconstruct: run_reconstruct(config, log); return;
    case ExperimentKind::Edit: run_edit(config, log); return;
    case ExperimentKind::Fig3: run_fig3(config, log); return;
    case ExperimentKind::Table1: run_table1_analog(config, log); return;
    case ExperimentKind::SweepScale: run_scale_sweep(config, log); return;
    case ExperimentKind::BaselineRandom: run_random_noise_baseline(config, log); return;
    case ExperimentKind::Report: run_report(config, log); return;
  }
}

}  // namespace invlab
