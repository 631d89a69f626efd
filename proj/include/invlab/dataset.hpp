#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "invlab/numerics.hpp"

namespace invlab {

// Isotropic Gaussian mixture with uniform component weights.
struct GmmSpec {
  std::vector<Vector> centers;
  double component_std = 1.0;
  std::vector<int> class_ids;  // aligned with centers; ids start at 1

  // Five unit-variance Gaussians at (5c, 10), c in {-2..2}, labelled 1..5.
  static GmmSpec toy_default();

  std::size_t dim() const;
  std::size_t size() const { return centers.size(); }
  // Component index holding `class_id`; throws if absent.
  std::size_t component_of(int class_id) const;
  const Vector& center_of(int class_id) const { return centers[component_of(class_id)]; }
  int max_class_id() const;

  // Throws ConfigError on empty spec, duplicate centers or ids, std <= 0.
  void validate() const;
};

void to_json(nlohmann::json& j, const GmmSpec& spec);
void from_json(const nlohmann::json& j, GmmSpec& spec);

// Per-coordinate mixture mean and standard deviation, computed in closed form.
struct DataStats {
  Vector mean;
  Vector stddev;

  static DataStats of(const GmmSpec& spec);
  Vector standardize(const Vector& x) const;
};

struct LabeledPoint {
  Vector x;
  int class_id = 0;
};

// Point-prompt branch of a condition: the anchor point and its scale s.
struct TightBranch {
  Vector anchor;
  double scale = 0.0;
};

// Conditioning signal. The network embeds it as table[class_id] plus, when a
// tight branch is present, s * W_p * standardize(anchor). class_id 0 is the
// null row, so Null, Class(k) and Tight(a, s) are the three plain variants; a
// class row combined with a tight branch is only used while editing.
class Condition {
 public:
  enum class Kind { Null, Class, Tight, ClassTight };

  Condition() = default;

  static Condition null() { return Condition(); }
  static Condition of_class(int class_id);
  static Condition tight(Vector anchor, double scale);

  Kind kind() const;
  int class_id() const { return class_id_; }
  const std::optional<TightBranch>& tight_branch() const { return tight_; }

  // Same tight branch (if any) under a different class row.
  Condition with_class(int class_id) const;
  // Tight branch removed, class row kept.
  Condition without_tight() const;

  std::string describe() const;

  friend bool operator==(const Condition& a, const Condition& b);

 private:
  int class_id_ = 0;
  std::optional<TightBranch> tight_;
};

void to_json(nlohmann::json& j, const Condition& c);

enum class ConditionMode { Null, Class, Tight };

ConditionMode parse_condition_mode(const std::string& name);
std::string to_string(ConditionMode mode);

// Throws ConfigError when the mode's required fields are missing.
Condition make_condition(ConditionMode mode, std::optional<int> label = std::nullopt,
                         std::optional<Vector> anchor = std::nullopt,
                         std::optional<double> scale = std::nullopt);

// Draws n labelled points: uniform component choice, then isotropic noise.
std::vector<LabeledPoint> sample_posterior(const GmmSpec& spec, Rng& rng, std::size_t n);

// n points from the single component labelled `class_id`.
std::vector<LabeledPoint> sample_component(const GmmSpec& spec, int class_id, Rng& rng,
                                           std::size_t n);

// Class id of the nearest center; ties go to the lowest component index.
int assign_cluster(const Vector& x, const GmmSpec& spec);

// CSV with header x0,x1,...,class_id.
void write_points_csv(std::ostream& os, const std::vector<LabeledPoint>& points);
// Inverse of write_points_csv. Throws ConfigError on malformed rows.
std::vector<LabeledPoint> read_points_csv(std::istream& is);

}  // namespace invlab
