#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "madg/autodiff.hpp"
#include "madg/tensor.hpp"

namespace madg {

// Labels are 0-based throughout: a k-class score vector has labels 0..k-1.

/// Half the gap between the score of `label` and the best competing score.
double margin(std::span<const double> scores, std::size_t label);

/// Ramp loss: 1 for t <= 0, 1 - t/rho on [0, rho], 0 for t >= rho.
double phi_rho(double t, double rho);

/// Index of the largest score; ties resolve to the lowest index.
std::size_t predict_label(std::span<const double> scores);
std::vector<std::size_t> predict_labels(const Tensor& scores);

/// Mean ramp loss of the margins of `scores` (n, k) at `labels`.
double margin_error(const Tensor& scores, std::span<const std::size_t> labels, double rho);

/// Fraction of rows whose argmax differs from the label.
double zero_one_error(const Tensor& scores, std::span<const std::size_t> labels);

/// Mean ramp loss of the margins of f' measured at the labels predicted by f.
double margin_disparity(const Tensor& scores_fprime, const Tensor& scores_f, double rho);

/// Margin rho together with its exponentiated training counterpart rho_hat = exp(rho).
struct MarginParams {
  double rho;
  double rho_hat;

  static MarginParams from_rho(double rho);
  static MarginParams from_rho_hat(double rho_hat);
};

enum class PairScheme { full, reduced };

PairScheme parse_pair_scheme(std::string_view name);
std::string_view to_string(PairScheme scheme);

/// Maps auxiliary head l (0-based) to the ordered domain pair (i, k) it contrasts.
///
/// full:    all i < k in lexicographic order, j = N(N-1)/2.
/// reduced: (0, i) for i = 1..N-1, j = N-1.
struct PairIndex {
  std::size_t num_domains = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  std::size_t size() const { return pairs.size(); }
  const std::pair<std::size_t, std::size_t>& at(std::size_t l) const;

  static PairIndex make(std::size_t num_sources, PairScheme scheme);
  /// Multi-source adaptation pairs (i, T) for labeled sources 0..n-1 and target T = n.
  static PairIndex to_target(std::size_t num_labeled);
  /// No auxiliary heads (plain ERM).
  static PairIndex none(std::size_t num_domains);
};

/// Cross-entropy of the softmax of `logits` at `label`, probability clamped to
/// [1e-12, 1 - 1e-12].
double classification_surrogate(std::span<const double> logits, std::size_t label);

/// log(1 - softmax(logits_fprime)[argmax scores_f]), probability clamped as above.
double disagreement_surrogate(std::span<const double> logits_fprime, std::span<const double> scores_f);

inline constexpr double kProbFloor = 1e-12;

/// Tape version of classification_surrogate averaged over rows: scalar.
Var mean_cross_entropy(Tape& tape, Var logits, std::span<const std::size_t> labels);

/// Tape version of disagreement_surrogate averaged over rows: scalar.
Var mean_disagreement(Tape& tape, Var logits, std::span<const std::size_t> target_labels);

/// Surrogate MDD for one auxiliary head:
///   mean_k[log(1 - sigma_{h_f}(f'))] - rho_hat * mean_i[-log sigma_{h_f}(f')]
/// where aux_i/aux_k are the head's logits on the two batches and h_i/h_k are f's
/// predicted labels there (held constant).
Var mdd_surrogate_pair(Tape& tape, Var aux_i, std::span<const std::size_t> h_i, Var aux_k,
                       std::span<const std::size_t> h_k, double rho_hat);

enum class WeightScheme { one, average, dynamic };

WeightScheme parse_weight_scheme(std::string_view name);
std::string_view to_string(WeightScheme scheme);

/// Per-pair weights. `pair_values` are the current surrogate values (only read by
/// the dynamic scheme, which normalizes their magnitudes to sum to one).
std::vector<double> pair_weights(WeightScheme scheme, std::span<const double> pair_values,
                                 std::size_t num_sources);

/// Sum_l w_l * pair_losses[l]. With all weights 1 the nodes are added without scaling.
Var transfer_loss(Tape& tape, std::span<const Var> pair_losses, std::span<const double> weights);

}  // namespace madg
