#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "madg/tensor.hpp"

namespace madg {

/// Labeled samples from one domain. Features are row-major (n, dim); labels are 0-based.
struct DomainDataset {
  int domain_id = 0;
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> sample(std::size_t i) const { return std::span<const double>(features).subspan(i * dim, dim); }
  /// All samples as an (n, dim) matrix.
  Tensor as_matrix() const;
  Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> gather_labels(std::span<const std::size_t> indices) const;
  std::size_t num_classes() const;
  void validate() const;

  friend bool operator==(const DomainDataset&, const DomainDataset&) = default;
};

enum class SyntheticKind { two_moons, colored, gaussian_shift };

SyntheticKind parse_synthetic_kind(std::string_view name);
std::string_view to_string(SyntheticKind kind);

/// Parameters for the synthetic multi-domain generators.
///
/// domain_params holds one entry per domain: a rotation angle in degrees (two_moons) or
/// a color/label correlation in [0, 1] (colored). gaussian_shift uses `shifts`, one
/// 2-d translation per domain.
struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::two_moons;
  std::vector<double> domain_params;
  std::vector<std::vector<double>> shifts;
  std::size_t n = 200;
  double label_noise = 0.0;
  /// Standard deviation of additive feature noise.
  double feature_noise = 0.1;
  std::size_t num_classes = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Interleaved half circles rotated by each domain's angle; n/2 per class before flips.
std::vector<DomainDataset> gen_two_moons(const SyntheticSpec& spec);

/// Binary label from a latent shape bit, flipped with probability label_noise; a color
/// block that agrees with the (flipped) label with the domain's correlation.
/// Features: [shape_0, shape_1, color_0, color_1].
std::vector<DomainDataset> gen_colored(const SyntheticSpec& spec);

/// k Gaussian clusters on a circle, translated by each domain's shift vector.
std::vector<DomainDataset> gen_gaussian_shift(const SyntheticSpec& spec);

std::vector<DomainDataset> generate(const SyntheticSpec& spec);

inline constexpr std::size_t kColoredShapeDims = 2;
inline constexpr std::size_t kColoredColorDims = 2;

/// Header `domain_id,label,f0,...,f{d-1}`; reals written with 17 significant digits.
void save_csv(std::span<const DomainDataset> datasets, std::ostream& out);
void save_csv(std::span<const DomainDataset> datasets, const std::filesystem::path& path);
/// Rows are grouped into datasets by domain_id in order of first appearance.
std::vector<DomainDataset> load_csv(std::istream& in);
std::vector<DomainDataset> load_csv(const std::filesystem::path& path);

/// One training step: per-domain sample indices, each of length batch_per_domain.
using DomainBatchIndices = std::vector<std::vector<std::size_t>>;

/// Number of steps that covers the longest domain once.
std::size_t steps_per_epoch(std::span<const std::size_t> domain_sizes, std::size_t batch_per_domain);

/// Per-domain aligned batches for one epoch. Each domain is drawn without replacement
/// from reshuffled permutations; shorter domains (and the tail of the longest one) cycle
/// into fresh permutations. The longest domain's first n draws are a full permutation.
std::vector<DomainBatchIndices> batch_sampler(std::span<const std::size_t> domain_sizes,
                                              std::size_t batch_per_domain, std::uint64_t seed,
                                              std::uint64_t epoch);

std::vector<std::size_t> dataset_sizes(std::span<const DomainDataset> datasets);

}  // namespace madg
