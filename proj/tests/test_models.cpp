#include <doctest.h>

#include <cmath>
#include <sstream>

#include "madg/errors.hpp"
#include "madg/models.hpp"
#include "madg/rng.hpp"

using namespace madg;

namespace {

MlpConfig small_config(std::uint64_t seed = 1) {
  MlpConfig c;
  c.input_dim = 3;
  c.hidden_dims = {5, 4};
  c.feature_dim = 6;
  c.num_classes = 3;
  c.init_seed = seed;
  return c;
}

Tensor random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> v(n * d);
  for (double& x : v) x = rng.normal();
  return Tensor::matrix(n, d, v);
}

// Plain loops for x W + b and relu, as an oracle for the tape-free forward.
Tensor oracle_forward(const MadgModel& m, const Tensor& x) {
  std::vector<double> cur(x.data().begin(), x.data().end());
  std::size_t width = x.cols();
  const std::size_t n = x.rows();
  auto layer = [&](const Linear& l, bool relu) {
    const std::size_t out = l.weight.cols();
    std::vector<double> next(n * out);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t o = 0; o < out; ++o) {
        double s = l.bias[o];
        for (std::size_t i = 0; i < width; ++i) s += cur[r * width + i] * l.weight.at(i, o);
        next[r * out + o] = relu ? std::max(0.0, s) : s;
      }
    cur = std::move(next);
    width = out;
  };
  for (const Linear& l : m.extractor) layer(l, true);
  layer(m.head, false);
  return Tensor::matrix(n, width, cur);
}

}  // namespace

TEST_CASE("config validation") {
  MlpConfig c = small_config();
  c.num_classes = 1;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = small_config();
  c.hidden_dims = {4, 0};
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = small_config();
  c.feature_dim = 0;
  CHECK_THROWS_AS(init_model(c, 3, PairScheme::full), ContractError);
}

TEST_CASE("initialization layout and ranges") {
  const MadgModel m = init_model(small_config(), 4, PairScheme::full);
  CHECK(m.extractor.size() == 3);
  CHECK(m.extractor[0].weight.shape() == std::vector<std::size_t>{3, 5});
  CHECK(m.extractor[2].weight.shape() == std::vector<std::size_t>{4, 6});
  CHECK(m.head.weight.shape() == std::vector<std::size_t>{6, 3});
  CHECK(m.aux_heads.size() == 6);
  CHECK(init_model(small_config(), 4, PairScheme::reduced).aux_heads.size() == 3);
  for (const Linear& a : m.aux_heads) {
    CHECK(a.weight == m.head.weight);
    CHECK(a.bias == m.head.bias);
  }
  const double bound = 1.0 / std::sqrt(3.0);
  for (double w : m.extractor[0].weight.data()) CHECK(std::abs(w) <= bound);
  for (double b : m.extractor[0].bias.data()) CHECK(b == 0.0);
  CHECK(m.parameters().size() == 2 * (3 + 1 + 6));
  CHECK(m.parameter_names().front() == "extractor.0.weight");
  CHECK(m.parameter_names().back() == "aux.5.bias");
}

TEST_CASE("initialization is a function of the seed") {
  const MadgModel a = init_model(small_config(5), 2, PairScheme::full);
  const MadgModel b = init_model(small_config(5), 2, PairScheme::full);
  const MadgModel c = init_model(small_config(6), 2, PairScheme::full);
  CHECK(a.extractor[1].weight == b.extractor[1].weight);
  CHECK_FALSE(a.extractor[1].weight == c.extractor[1].weight);
}

TEST_CASE("tape and tape-free forwards agree with a loop oracle") {
  MadgModel m = init_model(small_config(), 3, PairScheme::full);
  const Tensor x = random_batch(7, 3, 2);
  const Tensor want = oracle_forward(m, x);
  const Tensor got = predict_scores(m, x);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-13));

  Tape tape;
  const ModelVars vars = bind(tape, m);
  const MainOutputs out = forward_main(tape, vars, tape.constant(x));
  CHECK(tape.value(out.scores) == got);
  CHECK(tape.value(out.features) == extract_features(m, x));
  // Aux heads start as copies of f, and the reversal junction is identity forward.
  CHECK(tape.value(forward_aux(tape, vars, out.features, 2, 0.7)) == got);
  CHECK(tape.value(forward_aux_head(tape, vars, out.features, 0)) == got);
  CHECK_THROWS_AS(forward_aux(tape, vars, out.features, 3, 1.0), IndexError);
  CHECK_THROWS_AS(forward_features(tape, vars, tape.constant(random_batch(2, 4, 1))), DimensionError);
}

TEST_CASE("partial binding only exposes the requested groups") {
  MadgModel m = init_model(small_config(), 2, PairScheme::full);
  Tape tape;
  const ModelVars vars = bind(tape, m, ModelPart::extractor | ModelPart::aux);
  CHECK_FALSE(vars.head.has_value());
  CHECK(vars.aux.size() == 1);
  const Var feats = forward_features(tape, vars, tape.constant(random_batch(2, 3, 4)));
  CHECK_THROWS_AS(forward_main(tape, vars, tape.constant(random_batch(2, 3, 4))), ContractError);
  CHECK(tape.value(feats).cols() == 6);
}

TEST_CASE("checkpoints round-trip bitwise") {
  MadgModel m = init_model(small_config(9), 3, PairScheme::reduced);
  m.head.weight[0] = 0.1;
  m.aux_heads[1].bias[2] = -1.0 / 3.0;
  std::stringstream ss;
  save_checkpoint(m, ss);
  const MadgModel r = load_checkpoint(ss);
  CHECK(r.pairs.pairs == m.pairs.pairs);
  CHECK(r.pairs.num_domains == 3);
  CHECK(r.config.hidden_dims == m.config.hidden_dims);
  const auto a = m.parameters();
  const auto b = r.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t p = 0; p < a.size(); ++p) CHECK(*a[p] == *b[p]);
}

TEST_CASE("corrupt checkpoints are rejected") {
  MadgModel m = init_model(small_config(), 2, PairScheme::full);
  std::stringstream ss;
  save_checkpoint(m, ss);
  const std::string text = ss.str();

  std::stringstream truncated(text.substr(0, text.size() / 2));
  CHECK_THROWS(load_checkpoint(truncated));

  std::string garbled = text;
  const auto pos = garbled.find("param head.weight");
  garbled.replace(pos, 17, "param head.wxight");
  std::stringstream g(garbled);
  CHECK_THROWS_AS(load_checkpoint(g), SchemaError);

  std::stringstream empty;
  CHECK_THROWS(load_checkpoint(empty));
  CHECK_THROWS_AS(load_checkpoint(std::filesystem::path("/nonexistent/dir/x.ckpt")), std::runtime_error);
}
