#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "madg/datasets.hpp"
#include "madg/margin.hpp"
#include "madg/models.hpp"
#include "madg/optim.hpp"

namespace madg {

enum class LrSchedule { constant, inverse_decay };
enum class GrlSchedule { constant, ramp };
enum class UpdateOrder { two_step, joint };

LrSchedule parse_lr_schedule(std::string_view name);
GrlSchedule parse_grl_schedule(std::string_view name);
UpdateOrder parse_update_order(std::string_view name);
std::string_view to_string(LrSchedule s);
std::string_view to_string(GrlSchedule s);
std::string_view to_string(UpdateOrder s);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  /// Learning rate of the auxiliary heads; defaults to learning_rate.
  std::optional<double> aux_learning_rate;
  double rho_hat = 1.5;
  std::size_t epochs = 20;
  /// 0 covers the longest source once per epoch.
  std::size_t steps_per_epoch = 0;
  std::size_t batch_per_domain = 32;
  /// Step-A weights over the labeled domains; empty means uniform.
  std::vector<double> pi;
  WeightScheme weight_scheme = WeightScheme::one;
  PairScheme pair_scheme = PairScheme::full;
  double grl_eta = 1.0;
  GrlSchedule grl_schedule = GrlSchedule::constant;
  LrSchedule lr_schedule = LrSchedule::constant;
  UpdateOrder update_order = UpdateOrder::two_step;
  /// Global L2 norm cap on the transfer-step gradients (G and auxiliary heads); 0 disables.
  double transfer_grad_clip = 0.0;
  std::uint64_t seed = 0;
  /// input_dim and num_classes are taken from the data at train time.
  MlpConfig model;

  void validate() const;
  double aux_lr() const { return aux_learning_rate.value_or(learning_rate); }
};

/// lr0 for constant, lr0 * (1 + 10 p)^-0.75 for inverse_decay.
double lr_at(const TrainConfig& config, double progress);
/// lr_at / lr0: the factor applied to both the main and the auxiliary learning rate.
double lr_factor(const TrainConfig& config, double progress);
/// eta for constant, eta * (2 / (1 + exp(-10 p)) - 1) for ramp.
double grl_at(const TrainConfig& config, double progress);

struct MetricsRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double classification_loss = 0.0;
  double transfer_loss = 0.0;
  std::vector<double> pair_values;
  std::vector<double> pair_weights;
  /// Filled on the last step of each epoch when evaluation domains are given.
  std::vector<double> domain_accuracy;
  std::uint64_t seed = 0;
};

/// One domain's mini-batch. Unlabeled batches (the adaptation target) carry no labels.
struct DomainBatch {
  Tensor inputs;
  std::vector<std::size_t> labels;
  bool labeled = true;
};

/// Momentum buffers. Step A owns G and f; Step B keeps its own buffers for G and the
/// auxiliary heads.
struct TrainerState {
  std::vector<OptimizerState> main;
  std::vector<OptimizerState> extractor_b;
  std::vector<OptimizerState> aux;
};

TrainerState init_trainer_state(MadgModel& model, const TrainConfig& config);

struct StepContext {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr_factor = 1.0;
  double grl_eta = 1.0;
};

/// Two-step minimax update: classification step on G and f, then transfer step on G
/// (through the reversal) and on the auxiliary heads. One batch per model domain.
MetricsRecord madg_step(MadgModel& model, std::span<const DomainBatch> batches, const TrainConfig& config,
                        TrainerState& state, const StepContext& ctx);

/// Both losses in one backward pass; f's targets come from the pre-update forward.
MetricsRecord madg_step_joint(MadgModel& model, std::span<const DomainBatch> batches,
                              const TrainConfig& config, TrainerState& state, const StepContext& ctx);

/// Fraction of samples whose predicted label equals the true label.
double evaluate(const MadgModel& model, const DomainDataset& dataset);

using EpochCallback = std::function<void(std::size_t epoch, std::span<const MetricsRecord> epoch_records)>;

struct TrainResult {
  MadgModel model;
  std::vector<MetricsRecord> metrics;
  std::vector<std::string> warnings;
};

struct TrainOptions {
  /// Domains evaluated at the end of every epoch (acc_dom columns).
  std::vector<const DomainDataset*> eval_domains;
  EpochCallback on_epoch;
};

TrainResult madg_train(std::span<const DomainDataset> sources, const TrainConfig& config,
                       const TrainOptions& options = {});
TrainResult erm_train(std::span<const DomainDataset> sources, const TrainConfig& config,
                      const TrainOptions& options = {});

/// Multi-source adaptation: Step A on the labeled sources weighted by alpha, Step B over
/// the pairs (source i, target). The target's labels are never read; supplying a
/// labeled dataset records a warning.
TrainResult da_train(std::span<const DomainDataset> labeled, const DomainDataset& target,
                     const std::vector<double>& alpha, const TrainConfig& config,
                     const TrainOptions& options = {});

/// Metrics CSV: `epoch,step,loss_cls,loss_transfer,pair_1..pair_j[,weight_1..weight_j],
/// acc_dom_1..acc_dom_m,seed`. Weight columns only appear for the dynamic scheme.
std::string metrics_header(std::size_t num_pairs, std::size_t num_eval_domains, bool with_weights);
void write_metrics_row(std::ostream& out, const MetricsRecord& record, std::size_t num_pairs,
                       std::size_t num_eval_domains, bool with_weights);

}  // namespace madg
