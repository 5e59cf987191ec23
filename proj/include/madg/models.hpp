#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "madg/autodiff.hpp"
#include "madg/margin.hpp"
#include "madg/tensor.hpp"

namespace madg {

struct MlpConfig {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t feature_dim = 32;
  std::size_t num_classes = 2;
  std::uint64_t init_seed = 0;

  void validate() const;
};

/// y = x W + b with W of shape (in, out).
struct Linear {
  Tensor weight;
  Tensor bias;
};

/// Shared extractor G (relu MLP ending in a relu feature layer), main head f, and one
/// auxiliary head f'_l per entry of `pairs`.
class MadgModel {
 public:
  MlpConfig config;
  PairIndex pairs;
  std::vector<Linear> extractor;
  Linear head;
  std::vector<Linear> aux_heads;

  /// Declaration order: extractor layers, head, auxiliary heads; weight before bias.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;

  std::vector<Tensor*> extractor_parameters();
  std::vector<Tensor*> head_parameters();
  std::vector<Tensor*> aux_parameters();

  void zero_grad();
};

/// Weights uniform in +-1/sqrt(fan_in), biases zero, auxiliary heads copied from f.
MadgModel init_model(const MlpConfig& config, const PairIndex& pairs);
MadgModel init_model(const MlpConfig& config, std::size_t num_sources, PairScheme scheme);

struct LinearVars {
  Var weight;
  Var bias;
};

struct ModelVars {
  std::vector<LinearVars> extractor;
  std::optional<LinearVars> head;
  std::vector<LinearVars> aux;
};

enum class ModelPart : unsigned { extractor = 1, head = 2, aux = 4, all = 7 };

constexpr ModelPart operator|(ModelPart a, ModelPart b) {
  return static_cast<ModelPart>(static_cast<unsigned>(a) | static_cast<unsigned>(b));
}
constexpr bool has_part(ModelPart set, ModelPart p) {
  return (static_cast<unsigned>(set) & static_cast<unsigned>(p)) != 0;
}

/// Registers the selected parameter groups as leaves on `tape`.
ModelVars bind(Tape& tape, MadgModel& model, ModelPart parts = ModelPart::all);

struct MainOutputs {
  Var features;
  Var scores;
};

Var forward_features(Tape& tape, const ModelVars& vars, Var batch);
Var forward_head(Tape& tape, const LinearVars& head, Var features);
MainOutputs forward_main(Tape& tape, const ModelVars& vars, Var batch);

/// Features pass through the gradient-reversal junction (coefficient eta) before f'_l.
Var forward_aux(Tape& tape, const ModelVars& vars, Var features, std::size_t l, double eta);
/// f'_l applied directly, without the junction.
Var forward_aux_head(Tape& tape, const ModelVars& vars, Var features, std::size_t l);

/// Tape-free evaluation.
Tensor extract_features(const MadgModel& model, const Tensor& batch);
Tensor apply_linear(const Linear& layer, const Tensor& input);
Tensor predict_scores(const MadgModel& model, const Tensor& batch);

void save_checkpoint(const MadgModel& model, std::ostream& out);
MadgModel load_checkpoint(std::istream& in);
void save_checkpoint(const MadgModel& model, const std::filesystem::path& path);
MadgModel load_checkpoint(const std::filesystem::path& path);

}  // namespace madg
