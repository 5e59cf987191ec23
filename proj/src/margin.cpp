#include "madg/margin.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "madg/errors.hpp"

namespace madg {

double margin(std::span<const double> scores, std::size_t label) {
  if (scores.size() < 2) throw ContractError("margin needs at least two classes");
  if (label >= scores.size()) throw IndexError("margin: label out of range");
  double best_other = -INFINITY;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (c != label) best_other = std::max(best_other, scores[c]);
  }
  return 0.5 * (scores[label] - best_other);
}

double phi_rho(double t, double rho) {
  if (!(rho > 0.0)) throw ContractError("phi_rho requires rho > 0");
  if (t >= rho) return 0.0;
  if (t <= 0.0) return 1.0;
  return 1.0 - t / rho;
}

std::size_t predict_label(std::span<const double> scores) {
  if (scores.empty()) throw ContractError("predict_label on an empty score vector");
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

std::vector<std::size_t> predict_labels(const Tensor& scores) {
  std::vector<std::size_t> out(scores.rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = predict_label(scores.row(r));
  return out;
}

double margin_error(const Tensor& scores, std::span<const std::size_t> labels, double rho) {
  if (labels.empty()) throw ContractError("margin_error on an empty sample set");
  if (scores.rows() != labels.size()) throw DimensionError("margin_error: scores/labels length mismatch");
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) total += phi_rho(margin(scores.row(r), labels[r]), rho);
  return total / static_cast<double>(labels.size());
}

double zero_one_error(const Tensor& scores, std::span<const std::size_t> labels) {
  if (labels.empty()) throw ContractError("zero_one_error on an empty sample set");
  if (scores.rows() != labels.size()) throw DimensionError("zero_one_error: scores/labels length mismatch");
  std::size_t wrong = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) wrong += predict_label(scores.row(r)) != labels[r];
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

double margin_disparity(const Tensor& scores_fprime, const Tensor& scores_f, double rho) {
  if (scores_fprime.shape() != scores_f.shape()) {
    throw DimensionError("margin_disparity: score shapes differ");
  }
  if (scores_f.rows() == 0) throw ContractError("margin_disparity on an empty sample set");
  double total = 0.0;
  for (std::size_t r = 0; r < scores_f.rows(); ++r) {
    total += phi_rho(margin(scores_fprime.row(r), predict_label(scores_f.row(r))), rho);
  }
  return total / static_cast<double>(scores_f.rows());
}

MarginParams MarginParams::from_rho(double rho) {
  if (!(rho > 0.0)) throw ContractError("margin rho must be positive");
  return {rho, std::exp(rho)};
}

MarginParams MarginParams::from_rho_hat(double rho_hat) {
  if (!(rho_hat > 1.0)) throw ContractError("rho_hat must exceed 1 so that rho = ln(rho_hat) > 0");
  return {std::log(rho_hat), rho_hat};
}

PairScheme parse_pair_scheme(std::string_view name) {
  if (name == "full") return PairScheme::full;
  if (name == "reduced") return PairScheme::reduced;
  throw ContractError("unknown pair scheme '" + std::string(name) + "' (expected full|reduced)");
}

std::string_view to_string(PairScheme scheme) { return scheme == PairScheme::full ? "full" : "reduced"; }

const std::pair<std::size_t, std::size_t>& PairIndex::at(std::size_t l) const {
  if (l >= pairs.size()) {
    throw IndexError("pair index " + std::to_string(l) + " out of range for j = " + std::to_string(pairs.size()));
  }
  return pairs[l];
}

PairIndex PairIndex::make(std::size_t num_sources, PairScheme scheme) {
  if (num_sources < 2) throw ContractError("pair index needs at least two source domains");
  PairIndex index{num_sources, {}};
  if (scheme == PairScheme::full) {
    for (std::size_t i = 0; i + 1 < num_sources; ++i) {
      for (std::size_t k = i + 1; k < num_sources; ++k) index.pairs.emplace_back(i, k);
    }
  } else {
    for (std::size_t k = 1; k < num_sources; ++k) index.pairs.emplace_back(0, k);
  }
  return index;
}

PairIndex PairIndex::to_target(std::size_t num_labeled) {
  if (num_labeled < 1) throw ContractError("adaptation needs at least one labeled source");
  PairIndex index{num_labeled + 1, {}};
  for (std::size_t i = 0; i < num_labeled; ++i) index.pairs.emplace_back(i, num_labeled);
  return index;
}

PairIndex PairIndex::none(std::size_t num_domains) { return PairIndex{num_domains, {}}; }

double classification_surrogate(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw IndexError("classification_surrogate: label out of range");
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  const double log_p = logits[label] - m - std::log(s);
  return -std::clamp(log_p, std::log(kProbFloor), std::log1p(-kProbFloor));
}

double disagreement_surrogate(std::span<const double> logits_fprime, std::span<const double> scores_f) {
  if (logits_fprime.size() != scores_f.size() || scores_f.size() < 2) {
    throw DimensionError("disagreement_surrogate needs equal-length vectors with k >= 2");
  }
  const std::size_t h = predict_label(scores_f);
  const double m = *std::max_element(logits_fprime.begin(), logits_fprime.end());
  double total = 0.0, others = 0.0;
  for (std::size_t c = 0; c < logits_fprime.size(); ++c) {
    const double e = std::exp(logits_fprime[c] - m);
    total += e;
    if (c != h) others += e;
  }
  const double p = std::exp(logits_fprime[h] - m) / total;
  if (p > 1.0 - kProbFloor) return std::log(kProbFloor);
  if (p < kProbFloor) return std::log1p(-kProbFloor);
  return std::log(others / total);
}

Var mean_cross_entropy(Tape& tape, Var logits, std::span<const std::size_t> labels) {
  const Var log_p = tape.gather_label(tape.log_softmax(logits), labels);
  const Var clamped = tape.clamp(log_p, std::log(kProbFloor), std::log1p(-kProbFloor), ClampGrad::zero);
  return tape.negate(tape.mean(clamped));
}

Var mean_disagreement(Tape& tape, Var logits, std::span<const std::size_t> target_labels) {
  return tape.mean(tape.log1m_softmax_at(logits, target_labels, kProbFloor, ClampGrad::zero));
}

Var mdd_surrogate_pair(Tape& tape, Var aux_i, std::span<const std::size_t> h_i, Var aux_k,
                       std::span<const std::size_t> h_k, double rho_hat) {
  if (h_i.empty() || h_k.empty()) throw ContractError("mdd_surrogate_pair needs nonempty batches");
  const Var disagree_k = mean_disagreement(tape, aux_k, h_k);
  const Var agree_i = mean_cross_entropy(tape, aux_i, h_i);
  return tape.add(disagree_k, tape.scale(agree_i, -rho_hat));
}

WeightScheme parse_weight_scheme(std::string_view name) {
  if (name == "one") return WeightScheme::one;
  if (name == "average") return WeightScheme::average;
  if (name == "dynamic") return WeightScheme::dynamic;
  throw ContractError("unknown weight scheme '" + std::string(name) + "' (expected one|average|dynamic)");
}

std::string_view to_string(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::one: return "one";
    case WeightScheme::average: return "average";
    case WeightScheme::dynamic: return "dynamic";
  }
  return "one";
}

std::vector<double> pair_weights(WeightScheme scheme, std::span<const double> pair_values,
                                 std::size_t num_sources) {
  const std::size_t j = pair_values.size();
  switch (scheme) {
    case WeightScheme::one:
      return std::vector<double>(j, 1.0);
    case WeightScheme::average:
      if (num_sources == 0) throw ContractError("average weighting needs num_sources > 0");
      return std::vector<double>(j, 1.0 / static_cast<double>(num_sources));
    case WeightScheme::dynamic: {
      double total = 0.0;
      for (double v : pair_values) total += std::abs(v);
      std::vector<double> w(j);
      for (std::size_t l = 0; l < j; ++l) {
        w[l] = total > 0.0 ? std::abs(pair_values[l]) / total : 1.0 / static_cast<double>(j);
      }
      return w;
    }
  }
  return {};
}

Var transfer_loss(Tape& tape, std::span<const Var> pair_losses, std::span<const double> weights) {
  if (pair_losses.size() != weights.size()) {
    throw ContractError("transfer_loss: " + std::to_string(weights.size()) + " weights for " +
                        std::to_string(pair_losses.size()) + " pairs");
  }
  if (pair_losses.empty()) throw ContractError("transfer_loss needs at least one pair");
  auto weighted = [&](std::size_t l) {
    return weights[l] == 1.0 ? pair_losses[l] : tape.scale(pair_losses[l], weights[l]);
  };
  Var total = weighted(0);
  for (std::size_t l = 1; l < pair_losses.size(); ++l) total = tape.add(total, weighted(l));
  return total;
}

}  // namespace madg
