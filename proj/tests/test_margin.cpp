#include <doctest.h>

#include <cmath>
#include <vector>

#include "madg/errors.hpp"
#include "madg/margin.hpp"
#include "madg/rng.hpp"

using namespace madg;

namespace {

// Softmax probability computed the long way, for oracle values below.
double softmax_at(const std::vector<double>& z, std::size_t c) {
  double s = 0.0;
  for (double v : z) s += std::exp(v);
  return std::exp(z[c]) / s;
}

}  // namespace

TEST_CASE("margin is half the gap to the best competitor") {
  const std::vector<double> s{3.0, 1.0, 2.0};
  CHECK(margin(s, 0) == 0.5);
  CHECK(margin(s, 1) == -1.0);
  CHECK(margin(s, 2) == -0.5);
  CHECK_THROWS_AS(margin(s, 3), IndexError);
  CHECK_THROWS_AS(margin(std::vector<double>{1.0}, 0), ContractError);
}

TEST_CASE("ramp loss") {
  CHECK(phi_rho(-1.0, 0.5) == 1.0);
  CHECK(phi_rho(0.0, 0.5) == 1.0);
  CHECK(phi_rho(0.25, 0.5) == 0.5);
  CHECK(phi_rho(0.5, 0.5) == 0.0);
  CHECK(phi_rho(3.0, 0.5) == 0.0);
  CHECK_THROWS_AS(phi_rho(0.1, 0.0), ContractError);
  CHECK_THROWS_AS(phi_rho(0.1, -1.0), ContractError);
}

TEST_CASE("predicted labels break ties to the lowest index") {
  CHECK(predict_label(std::vector<double>{1.0, 2.0, 2.0}) == 1);
  CHECK(predict_labels(Tensor::matrix(2, 2, {0.0, 0.0, -1.0, 1.0})) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("margin error, zero-one error and disparity on a hand example") {
  // Row margins at the labels: 0.5, -0.5, 0.1.
  const Tensor s = Tensor::matrix(3, 2, {1.0, 0.0, 1.0, 0.0, 0.0, 0.2});
  const std::vector<std::size_t> y{0, 1, 1};
  CHECK(margin_error(s, y, 0.2) == doctest::Approx((0.0 + 1.0 + 0.5) / 3.0));
  CHECK(zero_one_error(s, y) == doctest::Approx(1.0 / 3.0));
  // f predicts 1, 1, 0; f' = s then has margins -0.5, -0.5, -0.1 at those labels.
  const Tensor f = Tensor::matrix(3, 2, {0.0, 1.0, 0.0, 1.0, 1.0, 0.0});
  CHECK(margin_disparity(s, f, 0.2) == doctest::Approx(1.0));
  CHECK(margin_disparity(f, f, 0.2) == 0.0);
  CHECK_THROWS_AS(margin_error(s, std::vector<std::size_t>{0}, 0.2), DimensionError);
  CHECK_THROWS_AS(margin_disparity(s, Tensor::matrix(1, 2, {0.0, 1.0}), 0.2), DimensionError);
}

TEST_CASE("margin parameters") {
  const MarginParams p = MarginParams::from_rho_hat(1.5);
  CHECK(p.rho == doctest::Approx(std::log(1.5)));
  CHECK(MarginParams::from_rho(p.rho).rho_hat == doctest::Approx(1.5));
  CHECK_THROWS_AS(MarginParams::from_rho_hat(1.0), ContractError);
  CHECK_THROWS_AS(MarginParams::from_rho(0.0), ContractError);
}

TEST_CASE("pair index layouts") {
  const PairIndex full = PairIndex::make(4, PairScheme::full);
  CHECK(full.size() == 6);
  CHECK(full.at(0) == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK(full.at(5) == std::pair<std::size_t, std::size_t>{2, 3});
  const PairIndex reduced = PairIndex::make(4, PairScheme::reduced);
  CHECK(reduced.size() == 3);
  CHECK(reduced.at(2) == std::pair<std::size_t, std::size_t>{0, 3});
  const PairIndex da = PairIndex::to_target(2);
  CHECK(da.num_domains == 3);
  CHECK(da.at(1) == std::pair<std::size_t, std::size_t>{1, 2});
  CHECK(PairIndex::none(3).size() == 0);
  CHECK_THROWS_AS(full.at(6), IndexError);
  CHECK_THROWS_AS(PairIndex::make(1, PairScheme::full), ContractError);
  CHECK(parse_pair_scheme(to_string(PairScheme::reduced)) == PairScheme::reduced);
  CHECK_THROWS_AS(parse_pair_scheme("half"), ContractError);
}

TEST_CASE("scalar surrogates against direct softmax") {
  const std::vector<double> z{0.3, -1.2, 0.8};
  CHECK(classification_surrogate(z, 1) == doctest::Approx(-std::log(softmax_at(z, 1))).epsilon(1e-13));
  // f predicts class 2, so the disagreement term uses f' probability of class 2.
  const std::vector<double> f{0.0, 0.1, 0.9};
  CHECK(disagreement_surrogate(z, f) == doctest::Approx(std::log(1.0 - softmax_at(z, 2))).epsilon(1e-13));
  // Confident logits hit the probability floor.
  const std::vector<double> sure{60.0, 0.0, 0.0};
  CHECK(classification_surrogate(sure, 1) == doctest::Approx(-std::log(1e-12)));
  CHECK(disagreement_surrogate(sure, std::vector<double>{1.0, 0.0, 0.0}) == doctest::Approx(std::log(1e-12)));
}

TEST_CASE("tape surrogates match the scalar versions row by row") {
  CounterRng rng(3);
  const std::size_t n = 5, k = 3;
  std::vector<double> raw(n * k);
  for (double& v : raw) v = 2.0 * rng.normal();
  const Tensor logits = Tensor::matrix(n, k, raw);
  std::vector<std::size_t> labels(n);
  for (auto& l : labels) l = rng.below(k);

  double ce = 0.0, dis = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    ce += classification_surrogate(logits.row(r), labels[r]);
    std::vector<double> onehot(k, 0.0);
    onehot[labels[r]] = 1.0;
    dis += disagreement_surrogate(logits.row(r), onehot);
  }
  Tape tape;
  const Var x = tape.constant(logits);
  CHECK(tape.value(mean_cross_entropy(tape, x, labels)).item() == doctest::Approx(ce / n).epsilon(1e-12));
  CHECK(tape.value(mean_disagreement(tape, x, labels)).item() == doctest::Approx(dis / n).epsilon(1e-12));
  const double rho_hat = 1.5;
  const Var pair = mdd_surrogate_pair(tape, x, labels, x, labels, rho_hat);
  CHECK(tape.value(pair).item() == doctest::Approx(dis / n - rho_hat * ce / n).epsilon(1e-12));
}

TEST_CASE("pair weights") {
  const std::vector<double> vals{-1.0, 3.0};
  CHECK(pair_weights(WeightScheme::one, vals, 3) == std::vector<double>{1.0, 1.0});
  CHECK(pair_weights(WeightScheme::average, vals, 4) == std::vector<double>{0.25, 0.25});
  const auto dyn = pair_weights(WeightScheme::dynamic, vals, 3);
  CHECK(dyn[0] == doctest::Approx(0.25));
  CHECK(dyn[1] == doctest::Approx(0.75));
  const auto flat = pair_weights(WeightScheme::dynamic, std::vector<double>{0.0, 0.0}, 3);
  CHECK(flat[0] == 0.5);
  CHECK(parse_weight_scheme("dynamic") == WeightScheme::dynamic);
  CHECK_THROWS_AS(parse_weight_scheme("heavy"), ContractError);
}

TEST_CASE("transfer loss is the weighted sum of pair losses") {
  Tape tape;
  const std::vector<Var> parts{tape.constant(Tensor::scalar(2.0)), tape.constant(Tensor::scalar(-0.5)),
                               tape.constant(Tensor::scalar(1.0))};
  const std::vector<double> w{1.0, 0.5, 2.0};
  CHECK(tape.value(transfer_loss(tape, parts, w)).item() == doctest::Approx(2.0 - 0.25 + 2.0));
  CHECK_THROWS_AS(transfer_loss(tape, parts, std::vector<double>{1.0}), ContractError);
  CHECK_THROWS_AS(transfer_loss(tape, std::vector<Var>{}, std::vector<double>{}), ContractError);
}
