#include "madg/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "madg/errors.hpp"
#include "madg/finite_oracle.hpp"
#include "madg/rng.hpp"

namespace madg {

namespace {

std::vector<Tensor*> main_parameters(MadgModel& model) {
  std::vector<Tensor*> out = model.extractor_parameters();
  for (Tensor* t : model.head_parameters()) out.push_back(t);
  return out;
}

std::vector<OptimizerState> make_states(const std::vector<Tensor*>& params, double lr, double mu, double wd) {
  std::vector<OptimizerState> states;
  states.reserve(params.size());
  for (const Tensor* t : params) states.emplace_back(t->size(), lr, mu, wd);
  return states;
}

void apply_updates(const std::vector<Tensor*>& params, std::vector<OptimizerState>& states, double lr) {
  if (params.size() != states.size()) throw ContractError("optimizer state does not match the parameter list");
  for (std::size_t p = 0; p < params.size(); ++p) {
    states[p].learning_rate = lr;
    sgd_momentum_step(states[p], params[p]->data(), params[p]->grad());
  }
}

void clip_gradients(const std::vector<Tensor*>& a, const std::vector<Tensor*>& b, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto* group : {&a, &b}) {
    for (const Tensor* t : *group) {
      for (double g : t->grad()) sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return;
  const double f = max_norm / norm;
  for (const auto* group : {&a, &b}) {
    for (Tensor* t : *group) {
      for (double& g : t->mutable_grad()) g *= f;
    }
  }
}

void zero_grads(const std::vector<Tensor*>& params) {
  for (Tensor* t : params) t->zero_grad();
}

std::vector<double> resolve_weights(const std::vector<double>& requested, std::size_t labeled) {
  if (requested.empty()) return SimplexWeights::uniform(labeled).values();
  if (requested.size() != labeled) {
    throw ContractError("expected " + std::to_string(labeled) + " domain weights, got " +
                        std::to_string(requested.size()));
  }
  return SimplexWeights(requested).values();
}

void check_batches(const MadgModel& model, std::span<const DomainBatch> batches) {
  if (batches.size() != model.pairs.num_domains) {
    throw ContractError("expected one batch for each of the " + std::to_string(model.pairs.num_domains) +
                        " domains, got " + std::to_string(batches.size()));
  }
  for (std::size_t d = 0; d < batches.size(); ++d) {
    const DomainBatch& b = batches[d];
    if (b.inputs.rank() != 2 || b.inputs.rows() == 0) throw ContractError("domain " + std::to_string(d) + " batch is empty");
    if (b.labeled && b.labels.size() != b.inputs.rows()) {
      throw ContractError("domain " + std::to_string(d) + " batch has " + std::to_string(b.labels.size()) +
                          " labels for " + std::to_string(b.inputs.rows()) + " rows");
    }
  }
}

std::size_t count_labeled(std::span<const DomainBatch> batches) {
  return static_cast<std::size_t>(std::count_if(batches.begin(), batches.end(), [](const DomainBatch& b) { return b.labeled; }));
}

Var sum_vars(Tape& tape, const std::vector<Var>& terms) {
  Var total = terms.front();
  for (std::size_t t = 1; t < terms.size(); ++t) total = tape.add(total, terms[t]);
  return total;
}

/// Sum_i w_i CE_i over the labeled batches.
Var classification_loss(Tape& tape, std::span<const DomainBatch> batches, std::span<const Var> scores,
                        const std::vector<double>& weights) {
  std::vector<Var> terms;
  std::size_t slot = 0;
  for (std::size_t d = 0; d < batches.size(); ++d) {
    if (!batches[d].labeled) continue;
    const double w = weights[slot++];
    if (w == 0.0) continue;
    const Var ce = mean_cross_entropy(tape, scores[d], batches[d].labels);
    terms.push_back(w == 1.0 ? ce : tape.scale(ce, w));
  }
  if (terms.empty()) throw ContractError("no labeled domain has positive weight");
  return sum_vars(tape, terms);
}

struct TransferTerms {
  Var total;
  std::vector<double> values;
  std::vector<double> weights;
};

TransferTerms build_transfer(Tape& tape, const MadgModel& model, const ModelVars& vars,
                             std::span<const Var> features, std::span<const std::vector<std::size_t>> targets,
                             const TrainConfig& config, std::size_t num_sources, double eta) {
  std::vector<Var> pair_losses;
  TransferTerms out;
  for (std::size_t l = 0; l < model.pairs.size(); ++l) {
    const auto [i, k] = model.pairs.at(l);
    const Var aux_i = forward_aux(tape, vars, features[i], l, eta);
    const Var aux_k = forward_aux(tape, vars, features[k], l, eta);
    pair_losses.push_back(mdd_surrogate_pair(tape, aux_i, targets[i], aux_k, targets[k], config.rho_hat));
    out.values.push_back(tape.value(pair_losses.back()).item());
  }
  out.weights = pair_weights(config.weight_scheme, out.values, num_sources);
  out.total = transfer_loss(tape, pair_losses, out.weights);
  return out;
}

std::vector<bool> domains_in_pairs(const PairIndex& pairs) {
  std::vector<bool> used(pairs.num_domains, false);
  for (const auto& [i, k] : pairs.pairs) used[i] = used[k] = true;
  return used;
}

}  // namespace

LrSchedule parse_lr_schedule(std::string_view name) {
  if (name == "constant") return LrSchedule::constant;
  if (name == "inverse_decay" || name == "inverse-decay") return LrSchedule::inverse_decay;
  throw ContractError("unknown lr schedule '" + std::string(name) + "' (expected constant|inverse_decay)");
}

GrlSchedule parse_grl_schedule(std::string_view name) {
  if (name == "constant") return GrlSchedule::constant;
  if (name == "ramp") return GrlSchedule::ramp;
  throw ContractError("unknown grl schedule '" + std::string(name) + "' (expected constant|ramp)");
}

UpdateOrder parse_update_order(std::string_view name) {
  if (name == "two_step" || name == "two-step") return UpdateOrder::two_step;
  if (name == "joint") return UpdateOrder::joint;
  throw ContractError("unknown update order '" + std::string(name) + "' (expected two_step|joint)");
}

std::string_view to_string(LrSchedule s) { return s == LrSchedule::constant ? "constant" : "inverse_decay"; }
std::string_view to_string(GrlSchedule s) { return s == GrlSchedule::constant ? "constant" : "ramp"; }
std::string_view to_string(UpdateOrder s) { return s == UpdateOrder::two_step ? "two_step" : "joint"; }

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ContractError("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ContractError("weight_decay must be >= 0");
  if (aux_learning_rate && !(*aux_learning_rate >= 0.0)) throw ContractError("aux learning rate must be >= 0");
  if (!(rho_hat > 0.0) || !std::isfinite(rho_hat)) throw ContractError("rho_hat must be positive");
  if (batch_per_domain < 1) throw ContractError("batch_per_domain must be at least 1");
  if (!(grl_eta >= 0.0)) throw ContractError("grl_eta must be >= 0");
  if (!(transfer_grad_clip >= 0.0)) throw ContractError("transfer_grad_clip must be >= 0");
  if (!pi.empty()) SimplexWeights{pi};
}

double lr_factor(const TrainConfig& config, double progress) {
  if (config.lr_schedule == LrSchedule::constant) return 1.0;
  return std::pow(1.0 + 10.0 * progress, -0.75);
}

double lr_at(const TrainConfig& config, double progress) { return config.learning_rate * lr_factor(config, progress); }

double grl_at(const TrainConfig& config, double progress) {
  if (config.grl_schedule == GrlSchedule::constant) return config.grl_eta;
  return config.grl_eta * (2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0);
}

TrainerState init_trainer_state(MadgModel& model, const TrainConfig& config) {
  TrainerState s;
  s.main = make_states(main_parameters(model), config.learning_rate, config.momentum, config.weight_decay);
  s.extractor_b = make_states(model.extractor_parameters(), config.learning_rate, config.momentum, 0.0);
  s.aux = make_states(model.aux_parameters(), config.aux_lr(), config.momentum, config.weight_decay);
  return s;
}

MetricsRecord madg_step(MadgModel& model, std::span<const DomainBatch> batches, const TrainConfig& config,
                        TrainerState& state, const StepContext& ctx) {
  check_batches(model, batches);
  const std::size_t labeled = count_labeled(batches);
  const std::vector<double> weights = resolve_weights(config.pi, labeled);
  MetricsRecord rec;
  rec.epoch = ctx.epoch;
  rec.step = ctx.step;
  rec.seed = config.seed;

  // Step A: weighted cross-entropy on G and f.
  {
    const std::vector<Tensor*> params = main_parameters(model);
    zero_grads(params);
    Tape tape;
    const ModelVars vars = bind(tape, model, ModelPart::extractor | ModelPart::head);
    std::vector<Var> scores(batches.size());
    for (std::size_t d = 0; d < batches.size(); ++d) {
      if (batches[d].labeled) scores[d] = forward_main(tape, vars, tape.constant(batches[d].inputs)).scores;
    }
    const Var loss = classification_loss(tape, batches, scores, weights);
    rec.classification_loss = tape.value(loss).item();
    tape.backward(loss);
    apply_updates(params, state.main, config.learning_rate * ctx.lr_factor);
  }

  if (model.pairs.size() == 0) return rec;

  // Step B: fresh forward; f's labels are constants. Aux heads ascend the transfer
  // loss, G descends it through the reversal. f is not bound on this tape.
  {
    std::vector<Tensor*> g_params = model.extractor_parameters();
    std::vector<Tensor*> aux_params = model.aux_parameters();
    zero_grads(g_params);
    zero_grads(aux_params);
    Tape tape;
    const ModelVars vars = bind(tape, model, ModelPart::extractor | ModelPart::aux);
    const std::vector<bool> used = domains_in_pairs(model.pairs);
    std::vector<Var> features(batches.size());
    std::vector<std::vector<std::size_t>> targets(batches.size());
    for (std::size_t d = 0; d < batches.size(); ++d) {
      if (!used[d]) continue;
      features[d] = forward_features(tape, vars, tape.constant(batches[d].inputs));
      targets[d] = predict_labels(apply_linear(model.head, tape.value(features[d])));
    }
    const TransferTerms t = build_transfer(tape, model, vars, features, targets, config, labeled, ctx.grl_eta);
    rec.transfer_loss = tape.value(t.total).item();
    rec.pair_values = t.values;
    rec.pair_weights = t.weights;
    tape.backward(tape.negate(t.total));
    clip_gradients(g_params, aux_params, config.transfer_grad_clip);
    apply_updates(g_params, state.extractor_b, config.learning_rate * ctx.lr_factor);
    apply_updates(aux_params, state.aux, config.aux_lr() * ctx.lr_factor);
  }
  return rec;
}

MetricsRecord madg_step_joint(MadgModel& model, std::span<const DomainBatch> batches, const TrainConfig& config,
                              TrainerState& state, const StepContext& ctx) {
  check_batches(model, batches);
  const std::size_t labeled = count_labeled(batches);
  const std::vector<double> weights = resolve_weights(config.pi, labeled);
  MetricsRecord rec;
  rec.epoch = ctx.epoch;
  rec.step = ctx.step;
  rec.seed = config.seed;

  const std::vector<Tensor*> main = main_parameters(model);
  const std::vector<Tensor*> aux = model.aux_parameters();
  zero_grads(main);
  zero_grads(aux);
  Tape tape;
  const ModelVars vars = bind(tape, model, ModelPart::all);
  std::vector<Var> features(batches.size()), scores(batches.size());
  std::vector<std::vector<std::size_t>> targets(batches.size());
  for (std::size_t d = 0; d < batches.size(); ++d) {
    const MainOutputs out = forward_main(tape, vars, tape.constant(batches[d].inputs));
    features[d] = out.features;
    scores[d] = out.scores;
    targets[d] = predict_labels(tape.value(out.scores));
  }
  Var loss = classification_loss(tape, batches, scores, weights);
  rec.classification_loss = tape.value(loss).item();
  if (model.pairs.size() > 0) {
    const TransferTerms t = build_transfer(tape, model, vars, features, targets, config, labeled, ctx.grl_eta);
    rec.transfer_loss = tape.value(t.total).item();
    rec.pair_values = t.values;
    rec.pair_weights = t.weights;
    loss = tape.add(loss, tape.negate(t.total));
  }
  tape.backward(loss);
  apply_updates(main, state.main, config.learning_rate * ctx.lr_factor);
  apply_updates(aux, state.aux, config.aux_lr() * ctx.lr_factor);
  return rec;
}

double evaluate(const MadgModel& model, const DomainDataset& dataset) {
  dataset.validate();
  return 1.0 - zero_one_error(predict_scores(model, dataset.as_matrix()), dataset.labels);
}

namespace {

struct LoopDomain {
  const DomainDataset* data;
  bool labeled;
};

std::vector<DomainBatchIndices> epoch_plan(std::span<const std::size_t> sizes, const TrainConfig& config,
                                           std::size_t epoch) {
  std::vector<DomainBatchIndices> plan = batch_sampler(sizes, config.batch_per_domain, config.seed, epoch);
  if (config.steps_per_epoch == 0) return plan;
  std::uint64_t chunk = 1;
  while (plan.size() < config.steps_per_epoch) {
    auto more = batch_sampler(sizes, config.batch_per_domain, config.seed, derive_seed(epoch, chunk++));
    plan.insert(plan.end(), more.begin(), more.end());
  }
  plan.resize(config.steps_per_epoch);
  return plan;
}

void run_loop(MadgModel& model, const std::vector<LoopDomain>& domains, const TrainConfig& config,
              const TrainOptions& options, std::vector<MetricsRecord>& metrics) {
  TrainerState state = init_trainer_state(model, config);
  std::vector<std::size_t> sizes;
  for (const LoopDomain& d : domains) sizes.push_back(d.data->size());
  const std::size_t steps = config.steps_per_epoch ? config.steps_per_epoch
                                                   : steps_per_epoch(sizes, config.batch_per_domain);
  const double total = static_cast<double>(config.epochs * steps);
  std::size_t global = 0;
  std::vector<DomainBatch> batches(domains.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::size_t first = metrics.size();
    const std::vector<DomainBatchIndices> plan = epoch_plan(sizes, config, epoch);
    for (std::size_t s = 0; s < plan.size(); ++s, ++global) {
      for (std::size_t d = 0; d < domains.size(); ++d) {
        batches[d].inputs = domains[d].data->gather(plan[s][d]);
        batches[d].labeled = domains[d].labeled;
        batches[d].labels = domains[d].labeled ? domains[d].data->gather_labels(plan[s][d]) : std::vector<std::size_t>{};
      }
      const double p = total > 0 ? static_cast<double>(global) / total : 0.0;
      const StepContext ctx{epoch, s, lr_factor(config, p), grl_at(config, p)};
      MetricsRecord rec = config.update_order == UpdateOrder::two_step
                              ? madg_step(model, batches, config, state, ctx)
                              : madg_step_joint(model, batches, config, state, ctx);
      if (!std::isfinite(rec.classification_loss) || !std::isfinite(rec.transfer_loss)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(s));
      }
      metrics.push_back(std::move(rec));
    }
    if (!options.eval_domains.empty() && metrics.size() > first) {
      for (const DomainDataset* d : options.eval_domains) metrics.back().domain_accuracy.push_back(evaluate(model, *d));
    }
    if (options.on_epoch) {
      options.on_epoch(epoch, std::span<const MetricsRecord>(metrics).subspan(first));
    }
  }
}

std::size_t check_sources(std::span<const DomainDataset> sources, std::size_t minimum, const char* what) {
  if (sources.size() < minimum) {
    throw ContractError(std::string(what) + " needs at least " + std::to_string(minimum) + " source domain" +
                        (minimum == 1 ? "" : "s") + ", got " + std::to_string(sources.size()));
  }
  std::size_t classes = 0;
  for (const DomainDataset& d : sources) {
    d.validate();
    if (d.dim != sources.front().dim) throw DimensionError("source domains have different feature widths");
    classes = std::max(classes, d.num_classes());
  }
  return classes;
}

MlpConfig model_config(const TrainConfig& config, std::size_t dim, std::size_t classes) {
  MlpConfig mc = config.model;
  mc.input_dim = dim;
  mc.num_classes = std::max({mc.num_classes, classes, std::size_t{2}});
  mc.init_seed = config.seed;
  return mc;
}

}  // namespace

TrainResult madg_train(std::span<const DomainDataset> sources, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  const std::size_t classes = check_sources(sources, 2, "madg_train");
  resolve_weights(config.pi, sources.size());
  TrainResult result{init_model(model_config(config, sources.front().dim, classes),
                                PairIndex::make(sources.size(), config.pair_scheme)),
                     {}, {}};
  std::vector<LoopDomain> domains;
  for (const DomainDataset& d : sources) domains.push_back({&d, true});
  run_loop(result.model, domains, config, options, result.metrics);
  return result;
}

TrainResult erm_train(std::span<const DomainDataset> sources, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  const std::size_t classes = check_sources(sources, 1, "erm_train");
  resolve_weights(config.pi, sources.size());
  TrainResult result{init_model(model_config(config, sources.front().dim, classes), PairIndex::none(sources.size())),
                     {}, {}};
  std::vector<LoopDomain> domains;
  for (const DomainDataset& d : sources) domains.push_back({&d, true});
  run_loop(result.model, domains, config, options, result.metrics);
  return result;
}

TrainResult da_train(std::span<const DomainDataset> labeled, const DomainDataset& target,
                     const std::vector<double>& alpha, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  const std::size_t classes = check_sources(labeled, 1, "da_train");
  if (target.size() == 0 || target.features.size() != target.size() * target.dim) {
    throw ContractError("da_train: target domain is empty or malformed");
  }
  if (target.dim != labeled.front().dim) throw DimensionError("target feature width differs from the sources");
  TrainConfig cfg = config;
  cfg.pi = resolve_weights(alpha, labeled.size());
  TrainResult result{init_model(model_config(cfg, labeled.front().dim, classes), PairIndex::to_target(labeled.size())),
                     {}, {}};
  result.warnings.push_back("target domain " + std::to_string(target.domain_id) +
                            " carries labels; they are ignored during adaptation");
  std::vector<LoopDomain> domains;
  for (const DomainDataset& d : labeled) domains.push_back({&d, true});
  domains.push_back({&target, false});
  run_loop(result.model, domains, cfg, options, result.metrics);
  return result;
}

std::string metrics_header(std::size_t num_pairs, std::size_t num_eval_domains, bool with_weights) {
  std::string h = "epoch,step,loss_cls,loss_transfer";
  for (std::size_t l = 1; l <= num_pairs; ++l) h += ",pair_" + std::to_string(l);
  if (with_weights) {
    for (std::size_t l = 1; l <= num_pairs; ++l) h += ",weight_" + std::to_string(l);
  }
  for (std::size_t d = 1; d <= num_eval_domains; ++d) h += ",acc_dom_" + std::to_string(d);
  return h + ",seed";
}

void write_metrics_row(std::ostream& out, const MetricsRecord& r, std::size_t num_pairs, std::size_t num_eval_domains,
                       bool with_weights) {
  char buf[40];
  auto real = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  auto column = [&](const std::vector<double>& v, std::size_t i) {
    if (i < v.size()) {
      real(v[i]);
    } else {
      out << ',';
    }
  };
  out << r.epoch << ',' << r.step;
  real(r.classification_loss);
  real(r.transfer_loss);
  for (std::size_t l = 0; l < num_pairs; ++l) column(r.pair_values, l);
  if (with_weights) {
    for (std::size_t l = 0; l < num_pairs; ++l) column(r.pair_weights, l);
  }
  for (std::size_t d = 0; d < num_eval_domains; ++d) column(r.domain_accuracy, d);
  out << ',' << r.seed << '\n';
}

}  // namespace madg
