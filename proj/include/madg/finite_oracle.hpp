#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace madg {

// Exact expectations over finite domains with an explicitly enumerated hypothesis class.
//
// MDD orientation: exact_mdd(cls, f, a, b) = max_{f'} disp_b(f', f) - disp_a(f', f),
// i.e. how much more f' can disagree with f on `b` than on `a`.

struct LabeledPoint {
  std::size_t input;
  std::size_t label;

  friend bool operator==(const LabeledPoint&, const LabeledPoint&) = default;
  friend auto operator<=>(const LabeledPoint&, const LabeledPoint&) = default;
};

/// Finite distribution over (input id, label) pairs drawn from inputs 0..universe-1.
class DiscreteDomain {
 public:
  DiscreteDomain() = default;
  DiscreteDomain(std::size_t universe, std::vector<LabeledPoint> points, std::vector<double> probs);

  /// Empirical distribution: every sample gets mass 1/n, duplicates merged.
  static DiscreteDomain empirical(std::size_t universe, std::span<const LabeledPoint> samples);

  std::size_t universe() const { return universe_; }
  const std::vector<LabeledPoint>& points() const { return points_; }
  const std::vector<double>& probs() const { return probs_; }
  std::size_t size() const { return points_.size(); }

  friend bool operator==(const DiscreteDomain&, const DiscreteDomain&) = default;

 private:
  std::size_t universe_ = 0;
  std::vector<LabeledPoint> points_;
  std::vector<double> probs_;
};

/// Scoring function f: input id -> R^k, stored as a universe x k table.
class ScoringTable {
 public:
  ScoringTable() = default;
  ScoringTable(std::size_t universe, std::size_t num_classes, std::vector<double> scores);

  std::size_t universe() const { return universe_; }
  std::size_t num_classes() const { return k_; }
  std::span<const double> scores(std::size_t input) const;
  std::size_t predict(std::size_t input) const;
  const std::vector<double>& table() const { return scores_; }

 private:
  std::size_t universe_ = 0;
  std::size_t k_ = 0;
  std::vector<double> scores_;
};

class FiniteClass {
 public:
  explicit FiniteClass(std::vector<ScoringTable> functions);

  const std::vector<ScoringTable>& functions() const { return functions_; }
  std::size_t size() const { return functions_.size(); }
  std::size_t universe() const { return functions_.front().universe(); }
  std::size_t num_classes() const { return functions_.front().num_classes(); }

 private:
  std::vector<ScoringTable> functions_;
};

/// Nonnegative weights summing to one (within 1e-12).
class SimplexWeights {
 public:
  SimplexWeights() = default;
  explicit SimplexWeights(std::vector<double> weights);
  static SimplexWeights uniform(std::size_t n);
  static SimplexWeights vertex(std::size_t n, std::size_t i);

  const std::vector<double>& values() const { return w_; }
  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }

 private:
  std::vector<double> w_;
};

DiscreteDomain mixture(std::span<const DiscreteDomain> domains, const SimplexWeights& weights);

double exact_disparity(const DiscreteDomain& domain, const ScoringTable& fprime, const ScoringTable& f, double rho);
double exact_margin_error(const DiscreteDomain& domain, const ScoringTable& f, double rho);
double zero_one_error(const DiscreteDomain& domain, const ScoringTable& f);

double exact_mdd(const FiniteClass& cls, const ScoringTable& f, const DiscreteDomain& from,
                 const DiscreteDomain& to, double rho);

/// min over f* in the class of sum_i weights_i err_{sources_i}(f*) + err_{extra}(f*).
double ideal_loss_hat_lambda(const FiniteClass& cls, const SimplexWeights& alpha,
                             std::span<const DiscreteDomain> sources, const DiscreteDomain& target, double rho);
double ideal_loss_bar_lambda(const FiniteClass& cls, const SimplexWeights& pi,
                             std::span<const DiscreteDomain> sources, const DiscreteDomain& unseen, double rho);

/// All weight vectors with entries m/r summing to one, in lexicographic order of the
/// integer compositions (last coordinate varies fastest).
std::vector<SimplexWeights> simplex_grid(std::size_t num_sources, std::size_t resolution);

std::size_t default_grid_resolution(std::size_t num_sources);

struct HullProjection {
  SimplexWeights pi;
  double gamma = 0.0;
};

/// Grid argmin over pi of exact_mdd(mixture(sources, pi) -> unseen). Ties keep the first grid point.
HullProjection hull_projection(const FiniteClass& cls, const ScoringTable& f, const DiscreteDomain& unseen,
                               std::span<const DiscreteDomain> sources, std::size_t resolution, double rho);

/// Max of exact_mdd over all ordered source pairs, the diagonal (value 0) included.
double epsilon_max_pairwise(const FiniteClass& cls, const ScoringTable& f,
                            std::span<const DiscreteDomain> sources, double rho);

inline constexpr double kViolationTolerance = 1e-10;

struct CheckReport {
  std::string check;
  std::uint64_t seed = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool violated = false;
};

/// `check_name,instance_seed,lhs,rhs,slack,violated`
std::string format_report_line(const CheckReport& report);
std::string report_header();

/// Knob for harness self-tests: added to every right-hand side before comparison.
struct CheckOptions {
  double rhs_offset = 0.0;
};

/// MDD from an alpha-mixture of sources to the target against the alpha-weighted per-source MDDs.
CheckReport check_mixture_transfer(const FiniteClass& cls, const ScoringTable& f, const SimplexWeights& alpha,
                                   std::span<const DiscreteDomain> sources, const DiscreteDomain& target, double rho,
                                   const CheckOptions& options = {});

/// Worst case over every pair of grid mixtures.
CheckReport check_hull_mdd(const FiniteClass& cls, const ScoringTable& f, std::span<const DiscreteDomain> sources,
                           double rho, std::size_t resolution, const CheckOptions& options = {});

/// Target 0-1 error against the weighted source margin errors, MDDs and ideal joint loss.
CheckReport check_mixture_bound(const FiniteClass& cls, const ScoringTable& f, const SimplexWeights& alpha,
                                std::span<const DiscreteDomain> sources, const DiscreteDomain& target, double rho,
                                const CheckOptions& options = {});

/// Unseen-domain 0-1 error against the bound built from the pi-mixture of the sources.
CheckReport check_unseen_bound_per_pi(const FiniteClass& cls, const ScoringTable& f, const SimplexWeights& pi,
                                      std::span<const DiscreteDomain> sources, const DiscreteDomain& unseen,
                                      double rho, const CheckOptions& options = {});

/// check_unseen_bound_per_pi over every grid pi; returns the smallest slack.
CheckReport check_unseen_bound_grid(const FiniteClass& cls, const ScoringTable& f,
                                    std::span<const DiscreteDomain> sources, const DiscreteDomain& unseen,
                                    double rho, std::size_t resolution, const CheckOptions& options = {});

/// Randomized finite instance for the theory suites.
struct OracleInstance {
  std::uint64_t seed = 0;
  std::size_t num_classes = 2;
  std::size_t universe = 0;
  std::vector<DiscreteDomain> sources;
  DiscreteDomain unseen;
  FiniteClass cls{{ScoringTable(1, 2, {0.0, 0.0})}};
  ScoringTable f;
  double rho = 1.0;
};

struct InstanceLimits {
  std::size_t max_points = 6;
  std::size_t max_functions = 30;
  std::size_t min_sources = 2;
  std::size_t max_sources = 3;
};

/// k in {2,3}, universe <= max_points, class size <= max_functions, N_s in [min, max].
OracleInstance random_instance(std::uint64_t seed, const InstanceLimits& limits = {});

struct SuiteOptions {
  std::size_t instances = 200;
  std::uint64_t seed = 0;
  std::size_t resolution = 4;
  CheckOptions check;
};

/// Runs all four checks over `instances` random instances.
/// The mixture checks mix all sources with a random alpha and treat the unseen domain
/// as the unlabeled source.
std::vector<CheckReport> run_theory_suite(const SuiteOptions& options);

}  // namespace madg
