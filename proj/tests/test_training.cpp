#include <doctest.h>

#include <cmath>
#include <sstream>

#include "madg/datasets.hpp"
#include "madg/errors.hpp"
#include "madg/training.hpp"

using namespace madg;

namespace {

std::vector<DomainDataset> moons(std::size_t domains, std::size_t n = 60, std::uint64_t seed = 3) {
  SyntheticSpec s;
  for (std::size_t d = 0; d < domains; ++d) s.domain_params.push_back(20.0 * static_cast<double>(d));
  s.n = n;
  s.seed = seed;
  return gen_two_moons(s);
}

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_per_domain = 16;
  c.model.hidden_dims = {8};
  c.model.feature_dim = 4;
  c.seed = 7;
  return c;
}

std::vector<DomainBatch> first_batches(const std::vector<DomainDataset>& ds, std::size_t b) {
  std::vector<DomainBatch> out;
  std::vector<std::size_t> idx(b);
  for (std::size_t i = 0; i < b; ++i) idx[i] = i * 3 % ds.front().size();
  for (const auto& d : ds) out.push_back({d.gather(idx), d.gather_labels(idx), true});
  return out;
}

MadgModel small_model(std::size_t sources, const TrainConfig& c) {
  MlpConfig m = c.model;
  m.input_dim = 2;
  m.init_seed = c.seed;
  return init_model(m, sources, c.pair_scheme);
}

void check_same(const std::vector<Tensor*>& a, const std::vector<Tensor*>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
}

}  // namespace

TEST_CASE("schedules") {
  TrainConfig c;
  c.learning_rate = 0.02;
  CHECK(lr_at(c, 0.7) == 0.02);
  c.lr_schedule = LrSchedule::inverse_decay;
  CHECK(lr_at(c, 0.0) == doctest::Approx(0.02));
  CHECK(lr_factor(c, 1.0) == doctest::Approx(std::pow(11.0, -0.75)));
  CHECK(lr_factor(c, 1.0) == doctest::Approx(0.1656).epsilon(1e-3));
  c.grl_eta = 0.5;
  CHECK(grl_at(c, 0.3) == 0.5);
  c.grl_schedule = GrlSchedule::ramp;
  CHECK(grl_at(c, 0.0) == 0.0);
  CHECK(grl_at(c, 1.0) == doctest::Approx(0.5 * (2.0 / (1.0 + std::exp(-10.0)) - 1.0)));
  CHECK(parse_update_order(to_string(UpdateOrder::joint)) == UpdateOrder::joint);
  CHECK(parse_lr_schedule(to_string(LrSchedule::inverse_decay)) == LrSchedule::inverse_decay);
  CHECK(parse_grl_schedule(to_string(GrlSchedule::ramp)) == GrlSchedule::ramp);
  CHECK_THROWS_AS(parse_update_order("sideways"), ContractError);
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.rho_hat = 0.0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = TrainConfig{};
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = TrainConfig{};
  c.pi = {0.5, 0.6};
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = TrainConfig{};
  c.batch_per_domain = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = TrainConfig{};
  c.aux_learning_rate = 0.0;
  CHECK(c.aux_lr() == 0.0);
}

TEST_CASE("the transfer step never touches the main head") {
  const auto ds = moons(3);
  TrainConfig on = small_config();
  TrainConfig off = on;
  off.grl_eta = 0.0;
  off.aux_learning_rate = 0.0;
  MadgModel a = small_model(3, on), b = small_model(3, off);
  TrainerState sa = init_trainer_state(a, on), sb = init_trainer_state(b, off);
  const auto batches = first_batches(ds, 16);
  madg_step(a, batches, on, sa, {});
  madg_step(b, batches, off, sb, {.grl_eta = 0.0});
  // Step A is identical, so f agrees; G and the aux heads moved only in the active run.
  check_same(a.head_parameters(), b.head_parameters());
  CHECK_FALSE(a.extractor[0].weight == b.extractor[0].weight);
  CHECK_FALSE(a.aux_heads[0].weight == b.aux_heads[0].weight);
  check_same(b.aux_parameters(), small_model(3, off).aux_parameters());
}

TEST_CASE("zero reversal and frozen aux heads reproduce plain ERM bitwise") {
  const auto ds = moons(3);
  TrainConfig c = small_config();
  c.grl_eta = 0.0;
  c.aux_learning_rate = 0.0;
  TrainResult madg = madg_train(ds, c);
  TrainResult erm = erm_train(ds, c);
  check_same(madg.model.extractor_parameters(), erm.model.extractor_parameters());
  check_same(madg.model.head_parameters(), erm.model.head_parameters());
  CHECK(erm.model.aux_heads.empty());
  REQUIRE(madg.metrics.size() == erm.metrics.size());
  for (std::size_t i = 0; i < erm.metrics.size(); ++i)
    CHECK(madg.metrics[i].classification_loss == erm.metrics[i].classification_loss);
}

TEST_CASE("joint and two-step updates differ") {
  const auto ds = moons(2);
  TrainConfig c = small_config();
  MadgModel a = small_model(2, c), b = small_model(2, c);
  TrainerState sa = init_trainer_state(a, c), sb = init_trainer_state(b, c);
  const auto batches = first_batches(ds, 16);
  const MetricsRecord ra = madg_step(a, batches, c, sa, {});
  const MetricsRecord rb = madg_step_joint(b, batches, c, sb, {});
  // Both report the loss of the same pre-update model on the classification side.
  CHECK(ra.classification_loss == doctest::Approx(rb.classification_loss).epsilon(1e-12));
  CHECK_FALSE(a.extractor[0].weight == b.extractor[0].weight);
}

TEST_CASE("recorded transfer loss is the weighted sum of the pair values") {
  const auto ds = moons(4);
  for (WeightScheme w : {WeightScheme::one, WeightScheme::average, WeightScheme::dynamic}) {
    TrainConfig c = small_config();
    c.weight_scheme = w;
    MadgModel m = small_model(4, c);
    TrainerState s = init_trainer_state(m, c);
    const MetricsRecord r = madg_step(m, first_batches(ds, 16), c, s, {});
    REQUIRE(r.pair_values.size() == 6);
    double sum = 0.0;
    for (std::size_t l = 0; l < 6; ++l) sum += r.pair_weights[l] * r.pair_values[l];
    CHECK(std::abs(sum - r.transfer_loss) < 1e-9);
  }
}

TEST_CASE("pair values match the scalar surrogate computed outside the tape") {
  const auto ds = moons(2);
  TrainConfig c = small_config();
  MadgModel m = small_model(2, c);
  const auto batches = first_batches(ds, 16);
  // Oracle from the pre-step model: Step A changes G and f first, so replay it here.
  MadgModel replay = m;
  TrainerState s = init_trainer_state(m, c);
  TrainConfig no_b = c;
  no_b.grl_eta = 0.0;
  no_b.aux_learning_rate = 0.0;
  TrainerState sr = init_trainer_state(replay, no_b);
  madg_step(replay, batches, no_b, sr, {.grl_eta = 0.0});
  const MetricsRecord r = madg_step(m, batches, c, s, {});

  const Tensor fi = extract_features(replay, batches[0].inputs);
  const Tensor fk = extract_features(replay, batches[1].inputs);
  const Tensor hi = apply_linear(replay.head, fi), hk = apply_linear(replay.head, fk);
  const Tensor ai = apply_linear(replay.aux_heads[0], fi), ak = apply_linear(replay.aux_heads[0], fk);
  double dis = 0.0, ce = 0.0;
  for (std::size_t r2 = 0; r2 < 16; ++r2) {
    dis += disagreement_surrogate(ak.row(r2), hk.row(r2));
    ce += classification_surrogate(ai.row(r2), predict_label(hi.row(r2)));
  }
  CHECK(r.pair_values[0] == doctest::Approx(dis / 16 - c.rho_hat * ce / 16).epsilon(1e-10));
}

TEST_CASE("a missing domain batch is a contract violation") {
  const auto ds = moons(3);
  TrainConfig c = small_config();
  MadgModel m = small_model(3, c);
  TrainerState s = init_trainer_state(m, c);
  auto batches = first_batches(ds, 8);
  batches.pop_back();
  CHECK_THROWS_AS(madg_step(m, batches, c, s, {}), ContractError);
}

TEST_CASE("training is deterministic and records per-epoch accuracy") {
  const auto ds = moons(2);
  const auto held = moons(3).back();
  TrainConfig c = small_config();
  TrainOptions o;
  o.eval_domains = {&held};
  std::size_t calls = 0;
  o.on_epoch = [&](std::size_t, std::span<const MetricsRecord> recs) { calls += !recs.empty(); };
  const TrainResult a = madg_train(ds, c, o);
  const TrainResult b = madg_train(ds, c, o);
  CHECK(calls == 4);
  REQUIRE(a.metrics.size() == 2 * 4);  // ceil(60 / 16) steps per epoch
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].transfer_loss == b.metrics[i].transfer_loss);
    CHECK(a.metrics[i].domain_accuracy.size() == (a.metrics[i].step == 3 ? 1u : 0u));
  }
  CHECK(a.metrics.back().domain_accuracy[0] == evaluate(a.model, held));
  c.seed = 8;
  CHECK_FALSE(madg_train(ds, c).model.head.weight == a.model.head.weight);
}

TEST_CASE("evaluate counts correct predictions") {
  TrainConfig c = small_config();
  MadgModel m = small_model(2, c);
  const auto ds = moons(1, 40);
  const std::vector<std::size_t> pred = predict_labels(predict_scores(m, ds[0].as_matrix()));
  std::size_t right = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) right += pred[i] == ds[0].labels[i];
  CHECK(evaluate(m, ds[0]) == doctest::Approx(static_cast<double>(right) / 40.0));
}

TEST_CASE("multi-source training needs two sources") {
  CHECK_THROWS_AS(madg_train(moons(1), small_config()), ContractError);
}

TEST_CASE("adaptation never reads target labels") {
  const auto src = moons(2);
  DomainDataset target = moons(3).back();
  TrainConfig c = small_config();
  const TrainResult a = da_train(src, target, {0.5, 0.5}, c);
  for (auto& y : target.labels) y = 1 - y;
  const TrainResult b = da_train(src, target, {0.5, 0.5}, c);
  CHECK(a.model.head.weight == b.model.head.weight);
  CHECK(a.model.aux_heads.size() == 2);
  CHECK(a.model.pairs.at(1) == std::pair<std::size_t, std::size_t>{1, 2});
  REQUIRE(a.warnings.size() == 1);
  CHECK(a.warnings[0].find("ignored") != std::string::npos);
}

TEST_CASE("metrics csv layout") {
  CHECK(metrics_header(2, 1, false) == "epoch,step,loss_cls,loss_transfer,pair_1,pair_2,acc_dom_1,seed");
  CHECK(metrics_header(1, 0, true) == "epoch,step,loss_cls,loss_transfer,pair_1,weight_1,seed");
  MetricsRecord r;
  r.epoch = 1;
  r.step = 2;
  r.classification_loss = 0.5;
  r.transfer_loss = -0.25;
  r.pair_values = {0.1};
  r.seed = 9;
  std::ostringstream out;
  write_metrics_row(out, r, 1, 1, false);
  CHECK(out.str() == "1,2,0.5,-0.25,0.10000000000000001,,9\n");
}
