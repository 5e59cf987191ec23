#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "madg/datasets.hpp"
#include "madg/finite_oracle.hpp"
#include "madg/models.hpp"

namespace madg {

enum class Provenance { exact, estimated, estimated_lower_bound, unavailable };

/// "exact", "estimated", "estimated (lower bound of sup)", "unavailable".
std::string_view to_string(Provenance p);

struct Estimate {
  double value = 0.0;
  Provenance provenance = Provenance::exact;
};

// Discrepancy between domains. Orientation follows exact_mdd: d(a -> b).

/// Empirical MDD from two labeled samples, computed through the score-matrix measures
/// (margin_disparity) rather than through DiscreteDomain expectations.
double empirical_mdd(const FiniteClass& cls, const ScoringTable& f, std::span<const LabeledPoint> from,
                     std::span<const LabeledPoint> to, double rho);

/// Sum over i < k of d(S_i -> S_k).
double epsilon_hat_sum(const FiniteClass& cls, const ScoringTable& f, std::span<const DiscreteDomain> domains,
                       double rho);
/// Max over ordered pairs, the diagonal included (so never below 0).
double epsilon_hat_max(const FiniteClass& cls, const ScoringTable& f, std::span<const DiscreteDomain> domains,
                       double rho);

/// Per ordered pair (i, k): the largest ramp-disparity gap disp_k - disp_i reached by
/// any trained auxiliary head or by f itself. A lower bound of the class supremum.
struct NetworkDiscrepancy {
  std::vector<std::vector<double>> ordered;  // [i][k], diagonal 0
  Estimate sum;                              // sum over i < k of ordered[i][k]
  Estimate max;
};

NetworkDiscrepancy network_epsilon(const MadgModel& model, std::span<const DomainDataset> domains, double rho);

/// Exact Jensen-Shannon divergence (nats) between two finite distributions.
double js_divergence(const DiscreteDomain& a, const DiscreteDomain& b);
/// Same, for explicit probability vectors over a shared support.
double js_divergence(std::span<const double> p, std::span<const double> q);

/// Histogram estimate: pooled samples projected on their top two principal directions
/// (one when the data is one-dimensional), `bins` per axis over the pooled range, each
/// bin smoothed with 1e-9 mass before normalizing.
double js_divergence_histogram(const DomainDataset& a, const DomainDataset& b, std::size_t bins = 32);

/// Sum of the held-out domain's divergences to every other domain.
double gamma_from_row(std::span<const double> js_row);
double gamma_estimate(const DomainDataset& held_out, std::span<const DomainDataset> sources, std::size_t bins = 32);

enum class FamilyKind { pi_H_F, pi_1_F, raw_class };
std::string_view to_string(FamilyKind kind);

/// A function family listed member by member: values[m][i] is member m on sample point i.
struct EnumeratedFamily {
  FamilyKind kind = FamilyKind::raw_class;
  std::vector<std::vector<double>> values;
  std::size_t sample_size() const { return values.empty() ? 0 : values.front().size(); }
};

/// Lists a finite class on a labeled sample:
///   raw_class: f(x_i, y_i)
///   pi_H_F:    f(x_i, h_g(x_i)) for every f, g in the class
///   pi_1_F:    f(x_i, c) for every f and every class c
EnumeratedFamily enumerate_family(FamilyKind kind, const FiniteClass& cls, std::span<const LabeledPoint> sample);

struct RademacherEstimate {
  double value = 0.0;
  double std_error = 0.0;
  bool exact = false;
  std::size_t draws = 0;
};

/// Exact average over all 2^n sign vectors when n <= exact_limit, otherwise Monte Carlo
/// over `draws` sign vectors from the "sigma" stream of `seed`.
RademacherEstimate rademacher_enumerated(const EnumeratedFamily& family, std::uint64_t seed = 0,
                                         std::size_t draws = 2000, std::size_t exact_limit = 20);

/// Linear readout family x -> (phi(x) W + b)[column_i] with every parameter in [-bound, bound].
/// phi is a fixed (n, m) feature matrix, e.g. a trained extractor's output.
struct ReadoutFamily {
  Tensor features;
  std::vector<std::size_t> columns;
  std::size_t num_outputs = 1;
  double bound = 1.0;
};

struct AscentOptions {
  std::size_t draws = 16;
  std::size_t steps = 50;
  double step_size = 0.1;
  std::uint64_t seed = 0;
};

struct AscentResult {
  double value = 0.0;
  double std_error = 0.0;
  /// Mean correlation over draws after 0..steps ascent steps.
  std::vector<double> trajectory;
};

/// Per sign draw, projected gradient ascent on (1/n) sum_i sigma_i u(x_i) starting from
/// (weight, bias); averages the final correlations. Tagged as a lower bound of the sup.
AscentResult rademacher_ascent(const ReadoutFamily& family, const Tensor& weight, const Tensor& bias,
                               const AscentOptions& options);

/// Readout correlation sup over a grid with `points_per_axis` values per parameter
/// (including the box vertices). Exact for the linear readout family.
RademacherEstimate rademacher_readout_grid(const ReadoutFamily& family, std::size_t points_per_axis,
                                           std::uint64_t seed = 0, std::size_t exact_limit = 20,
                                           std::size_t draws = 2000);

struct NamedTerm {
  std::string name;
  std::optional<double> value;
  Provenance provenance = Provenance::exact;
};

struct BoundInputs {
  std::vector<double> source_margin_errors;
  SimplexWeights pi;
  Estimate epsilon_hat_max;
  Estimate epsilon_hat_sum;
  std::optional<Estimate> gamma;
  /// Pairwise divergences echoed in the report.
  std::vector<NamedTerm> js_terms;
  std::optional<double> lambda_bar;
  /// Arg-max pair of the pairwise discrepancy and the complexity of that pair's samples.
  std::size_t pair_i = 0;
  std::size_t pair_k = 1;
  std::optional<Estimate> rademacher_pair_i;
  std::optional<Estimate> rademacher_pair_k;
  /// Per-source complexity of the constant-label family.
  std::vector<std::optional<Estimate>> rademacher_const;
  std::vector<std::size_t> sample_sizes;
  std::size_t num_classes = 2;
  double rho = 1.0;
};

struct BoundReport {
  BoundInputs inputs;
  double delta = 0.05;
  /// Included terms of the right-hand side in order; they sum to rhs_partial.
  std::vector<NamedTerm> included;
  std::vector<std::string> omitted;
  double rhs_partial = 0.0;
};

/// sqrt(ln(2 / delta) / (2 n)).
double deviation_term(double delta, std::size_t n);

BoundReport assemble_bound_report(const BoundInputs& inputs, double delta);

/// Bound report for an enumerated fixture: every domain is replaced by the empirical
/// distribution of `samples_per_domain` draws, and every term is computed exactly on
/// those empirical distributions (lambda_bar included).
struct OracleBound {
  BoundReport report;
  /// 0-1 error of f on the empirical unseen domain.
  double unseen_error = 0.0;
};

OracleBound oracle_bound(const OracleInstance& instance, double delta, std::size_t samples_per_domain = 10,
                         std::size_t resolution = 0);

/// Flat `term = value (provenance)` lines followed by an `omitted:` line.
std::string format_bound_report(const BoundReport& report);

}  // namespace madg
