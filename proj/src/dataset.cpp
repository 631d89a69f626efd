#include "invlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "invlab/error.hpp"

namespace invlab {

GmmSpec GmmSpec::toy_default() {
  GmmSpec spec;
  for (int c = -2; c <= 2; ++c) {
    Vector center(2);
    center << 5.0 * c, 10.0;
    spec.centers.push_back(center);
    spec.class_ids.push_back(c + 3);
  }
  spec.component_std = 1.0;
  return spec;
}

std::size_t GmmSpec::dim() const {
  if (centers.empty()) throw ConfigError("GmmSpec: no components");
  return static_cast<std::size_t>(centers.front().size());
}

std::size_t GmmSpec::component_of(int class_id) const {
  const auto it = std::find(class_ids.begin(), class_ids.end(), class_id);
  if (it == class_ids.end()) throw ConfigError("GmmSpec: unknown class id " + std::to_string(class_id));
  return static_cast<std::size_t>(it - class_ids.begin());
}

int GmmSpec::max_class_id() const { return *std::max_element(class_ids.begin(), class_ids.end()); }

void GmmSpec::validate() const {
  if (centers.empty()) throw ConfigError("GmmSpec: no components");
  if (class_ids.size() != centers.size()) throw ConfigError("GmmSpec: class_ids must align with centers");
  if (!(component_std > 0.0) || !std::isfinite(component_std))
    throw ConfigError("GmmSpec: component_std must be positive");
  const auto d = centers.front().size();
  if (d < 1) throw ConfigError("GmmSpec: dimension must be >= 1");
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (centers[i].size() != d) throw ConfigError("GmmSpec: centers differ in dimension");
    if (!centers[i].allFinite()) throw ConfigError("GmmSpec: non-finite center");
    if (class_ids[i] < 1) throw ConfigError("GmmSpec: class ids start at 1");
    for (std::size_t j = 0; j < i; ++j) {
      if (centers[i] == centers[j]) throw ConfigError("GmmSpec: duplicate center");
      if (class_ids[i] == class_ids[j]) throw ConfigError("GmmSpec: duplicate class id");
    }
  }
}

void to_json(nlohmann::json& j, const GmmSpec& spec) {
  nlohmann::json centers = nlohmann::json::array();
  for (const auto& c : spec.centers) centers.push_back(std::vector<double>(c.data(), c.data() + c.size()));
  j = {{"centers", centers}, {"component_std", spec.component_std}, {"class_ids", spec.class_ids}};
}

void from_json(const nlohmann::json& j, GmmSpec& spec) {
  for (const auto& [key, _] : j.items()) {
    if (key != "centers" && key != "component_std" && key != "class_ids")
      throw ConfigError("dataset: unknown key '" + key + "'");
  }
  spec = GmmSpec::toy_default();
  if (j.contains("centers")) {
    spec.centers.clear();
    for (const auto& c : j.at("centers")) {
      const auto v = c.get<std::vector<double>>();
      spec.centers.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    spec.class_ids.clear();
    for (std::size_t i = 0; i < spec.centers.size(); ++i) spec.class_ids.push_back(static_cast<int>(i) + 1);
  }
  if (j.contains("class_ids")) spec.class_ids = j.at("class_ids").get<std::vector<int>>();
  if (j.contains("component_std")) spec.component_std = j.at("component_std").get<double>();
  spec.validate();
}

DataStats DataStats::of(const GmmSpec& spec) {
  spec.validate();
  const auto d = static_cast<Eigen::Index>(spec.dim());
  const double k = static_cast<double>(spec.size());
  Vector mean = Vector::Zero(d);
  Vector second = Vector::Zero(d);
  for (const auto& c : spec.centers) {
    mean += c;
    second += c.cwiseAbs2();
  }
  mean /= k;
  second /= k;
  const double var0 = spec.component_std * spec.component_std;
  DataStats stats;
  stats.mean = mean;
  stats.stddev = (second - mean.cwiseAbs2()).array() + var0;
  stats.stddev = stats.stddev.cwiseSqrt();
  return stats;
}

Vector DataStats::standardize(const Vector& x) const {
  if (x.size() != mean.size()) throw std::invalid_argument("DataStats::standardize: dimension mismatch");
  return (x - mean).cwiseQuotient(stddev);
}

Condition Condition::of_class(int class_id) {
  if (class_id < 1) throw ConfigError("Condition: class id must be >= 1");
  Condition c;
  c.class_id_ = class_id;
  return c;
}

Condition Condition::tight(Vector anchor, double scale) {
  if (!std::isfinite(scale) || scale < 0.0) throw ConfigError("Condition: tight scale must be finite and >= 0");
  if (anchor.size() < 1 || !anchor.allFinite()) throw ConfigError("Condition: tight anchor must be finite");
  Condition c;
  c.tight_ = TightBranch{std::move(anchor), scale};
  return c;
}

Condition::Kind Condition::kind() const {
  if (tight_) return class_id_ == 0 ? Kind::Tight : Kind::ClassTight;
  return class_id_ == 0 ? Kind::Null : Kind::Class;
}

Condition Condition::with_class(int class_id) const {
  if (class_id < 0) throw ConfigError("Condition: class id must be >= 0");
  Condition c = *this;
  c.class_id_ = class_id;
  return c;
}

Condition Condition::without_tight() const {
  Condition c = *this;
  c.tight_.reset();
  return c;
}

std::string Condition::describe() const {
  std::ostringstream os;
  switch (kind()) {
    case Kind::Null: os << "null"; break;
    case Kind::Class: os << "class(" << class_id_ << ")"; break;
    case Kind::Tight: os << "tight(s=" << tight_->scale << ")"; break;
    case Kind::ClassTight: os << "class(" << class_id_ << ")+tight(s=" << tight_->scale << ")"; break;
  }
  return os.str();
}

bool operator==(const Condition& a, const Condition& b) {
  if (a.class_id_ != b.class_id_ || a.tight_.has_value() != b.tight_.has_value()) return false;
  if (!a.tight_) return true;
  return a.tight_->scale == b.tight_->scale && a.tight_->anchor.size() == b.tight_->anchor.size() &&
         a.tight_->anchor == b.tight_->anchor;
}

void to_json(nlohmann::json& j, const Condition& c) {
  static const char* kNames[] = {"null", "class", "tight", "class+tight"};
  j = {{"kind", kNames[static_cast<int>(c.kind())]}};
  if (c.class_id() != 0) j["class_id"] = c.class_id();
  if (const auto& t = c.tight_branch()) {
    j["anchor"] = std::vector<double>(t->anchor.data(), t->anchor.data() + t->anchor.size());
    j["scale"] = t->scale;
  }
}

ConditionMode parse_condition_mode(const std::string& name) {
  if (name == "null") return ConditionMode::Null;
  if (name == "class") return ConditionMode::Class;
  if (name == "tight") return ConditionMode::Tight;
  throw ConfigError("unknown condition mode '" + name + "'");
}

std::string to_string(ConditionMode mode) {
  switch (mode) {
    case ConditionMode::Null: return "null";
    case ConditionMode::Class: return "class";
    case ConditionMode::Tight: return "tight";
  }
  return "?";
}

Condition make_condition(ConditionMode mode, std::optional<int> label, std::optional<Vector> anchor,
                         std::optional<double> scale) {
  switch (mode) {
    case ConditionMode::Null:
      return Condition::null();
    case ConditionMode::Class:
      if (!label) throw ConfigError("make_condition: class mode requires a label");
      return Condition::of_class(*label);
    case ConditionMode::Tight:
      if (!anchor) throw ConfigError("make_condition: tight mode requires an anchor");
      if (!scale) throw ConfigError("make_condition: tight mode requires a scale");
      return Condition::tight(std::move(*anchor), *scale);
  }
  throw ConfigError("make_condition: bad mode");
}

std::vector<LabeledPoint> sample_posterior(const GmmSpec& spec, Rng& rng, std::size_t n) {
  if (spec.centers.empty()) throw ConfigError("sample_posterior: empty spec");
  spec.validate();
  const auto d = spec.dim();
  std::vector<LabeledPoint> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(rng.uniform_index(spec.size()));
    Vector x = spec.centers[k] + spec.component_std * sample_standard_normal(rng, d);
    out.push_back({std::move(x), spec.class_ids[k]});
  }
  return out;
}

std::vector<LabeledPoint> sample_component(const GmmSpec& spec, int class_id, Rng& rng, std::size_t n) {
  spec.validate();
  const auto k = spec.component_of(class_id);
  std::vector<LabeledPoint> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({spec.centers[k] + spec.component_std * sample_standard_normal(rng, spec.dim()), class_id});
  return out;
}

int assign_cluster(const Vector& x, const GmmSpec& spec) {
  if (spec.centers.empty()) throw ConfigError("assign_cluster: empty spec");
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double d2 = (x - spec.centers[k]).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = k;
    }
  }
  return spec.class_ids[best];
}

void write_points_csv(std::ostream& os, const std::vector<LabeledPoint>& points) {
  const Eigen::Index d = points.empty() ? 2 : points.front().x.size();
  for (Eigen::Index i = 0; i < d; ++i) os << 'x' << i << ',';
  os << "class_id\n";
  os.precision(17);
  for (const auto& p : points) {
    for (Eigen::Index i = 0; i < p.x.size(); ++i) os << p.x[i] << ',';
    os << p.class_id << '\n';
  }
}

std::vector<LabeledPoint> read_points_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("points csv: missing header");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 2 || line.rfind("class_id") == std::string::npos) throw ConfigError("points csv: bad header");
  const auto d = static_cast<Eigen::Index>(columns - 1);
  std::vector<LabeledPoint> out;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    LabeledPoint p{Vector(d), 0};
    std::size_t i = 0;
    try {
      for (; i < columns && std::getline(ls, cell, ','); ++i) {
        std::size_t used = 0;
        if (i + 1 < columns)
          p.x[static_cast<Eigen::Index>(i)] = std::stod(cell, &used);
        else
          p.class_id = std::stoi(cell, &used);
        if (used != cell.size() && cell.find_first_not_of(" \r", used) != std::string::npos)
          throw std::invalid_argument(cell);
      }
    } catch (const std::exception&) {
      throw ConfigError("points csv: bad value on row " + std::to_string(row));
    }
    if (i != columns || std::getline(ls, cell, ','))
      throw ConfigError("points csv: wrong column count on row " + std::to_string(row));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace invlab
