#include "madg/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

#include "madg/errors.hpp"
#include "madg/rng.hpp"

namespace madg {

namespace {

DomainDataset empty_domain(int id, std::size_t dim, std::size_t n) {
  DomainDataset d;
  d.domain_id = id;
  d.dim = dim;
  d.features.reserve(n * dim);
  d.labels.reserve(n);
  return d;
}

std::size_t maybe_flip(std::size_t y, std::size_t k, double noise, CounterRng& rng) {
  if (noise <= 0.0 || !rng.bernoulli(noise)) return y;
  if (k == 2) return 1 - y;
  return (y + 1 + rng.below(k - 1)) % k;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

Tensor DomainDataset::as_matrix() const { return Tensor({size(), dim}, features); }

Tensor DomainDataset::gather(std::span<const std::size_t> indices) const {
  std::vector<double> out;
  out.reserve(indices.size() * dim);
  for (std::size_t i : indices) {
    if (i >= size()) throw IndexError("sample index out of range");
    const auto s = sample(i);
    out.insert(out.end(), s.begin(), s.end());
  }
  return Tensor({indices.size(), dim}, std::move(out));
}

std::vector<std::size_t> DomainDataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

std::size_t DomainDataset::num_classes() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

void DomainDataset::validate() const {
  if (labels.empty()) throw ContractError("dataset must contain at least one sample");
  if (dim == 0) throw ContractError("dataset feature width must be positive");
  if (features.size() != labels.size() * dim) throw DimensionError("dataset features do not match n * dim");
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
  if (name == "two_moons" || name == "two-moons") return SyntheticKind::two_moons;
  if (name == "colored") return SyntheticKind::colored;
  if (name == "gaussian_shift" || name == "gaussian-shift") return SyntheticKind::gaussian_shift;
  throw ContractError("unknown dataset kind '" + std::string(name) + "' (expected two_moons|colored|gaussian_shift)");
}

std::string_view to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::two_moons: return "two_moons";
    case SyntheticKind::colored: return "colored";
    case SyntheticKind::gaussian_shift: return "gaussian_shift";
  }
  return "two_moons";
}

void SyntheticSpec::validate() const {
  if (n < 1) throw ContractError("n must be at least 1");
  if (!(label_noise >= 0.0 && label_noise < 0.5)) throw ContractError("label_noise must lie in [0, 0.5)");
  if (!(feature_noise >= 0.0)) throw ContractError("feature_noise must be nonnegative");
  if (kind == SyntheticKind::gaussian_shift) {
    if (shifts.empty()) throw ContractError("gaussian_shift needs at least one shift vector");
    for (const auto& s : shifts) {
      if (s.size() != 2) throw ContractError("shift vectors must be two-dimensional");
    }
    if (num_classes < 2) throw ContractError("gaussian_shift needs at least two classes");
  } else {
    if (domain_params.empty()) throw ContractError("at least one domain parameter is required");
  }
  if (kind == SyntheticKind::colored) {
    for (double c : domain_params) {
      if (!(c >= 0.0 && c <= 1.0)) throw ContractError("color correlation must lie in [0, 1]");
    }
  }
}

std::vector<DomainDataset> gen_two_moons(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<DomainDataset> out;
  for (std::size_t d = 0; d < spec.domain_params.size(); ++d) {
    CounterRng rng(derive_seed(derive_seed(spec.seed, "data"), static_cast<std::uint64_t>(d)));
    const double angle = spec.domain_params[d] * std::numbers::pi / 180.0;
    const double ca = std::cos(angle), sa = std::sin(angle);
    DomainDataset ds = empty_domain(static_cast<int>(d), 2, spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
      const std::size_t y = i < spec.n / 2 ? 0 : 1;
      const double t = rng.uniform(0.0, std::numbers::pi);
      double x0 = y == 0 ? std::cos(t) : 1.0 - std::cos(t);
      double x1 = y == 0 ? std::sin(t) : 0.5 - std::sin(t);
      x0 -= 0.5;
      x1 -= 0.25;
      const double r0 = ca * x0 - sa * x1 + spec.feature_noise * rng.normal();
      const double r1 = sa * x0 + ca * x1 + spec.feature_noise * rng.normal();
      ds.features.push_back(r0);
      ds.features.push_back(r1);
      ds.labels.push_back(maybe_flip(y, 2, spec.label_noise, rng));
    }
    out.push_back(std::move(ds));
  }
  return out;
}

std::vector<DomainDataset> gen_colored(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<DomainDataset> out;
  for (std::size_t d = 0; d < spec.domain_params.size(); ++d) {
    CounterRng rng(derive_seed(derive_seed(spec.seed, "data"), static_cast<std::uint64_t>(d)));
    const double correlation = spec.domain_params[d];
    DomainDataset ds = empty_domain(static_cast<int>(d), kColoredShapeDims + kColoredColorDims, spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
      const std::size_t shape = i % 2;
      const double sign = shape == 1 ? 1.0 : -1.0;
      const std::size_t y = maybe_flip(shape, 2, spec.label_noise, rng);
      const std::size_t color = rng.bernoulli(correlation) ? y : 1 - y;
      ds.features.push_back(sign + spec.feature_noise * rng.normal());
      ds.features.push_back(0.5 * sign + spec.feature_noise * rng.normal());
      ds.features.push_back(static_cast<double>(color));
      ds.features.push_back(static_cast<double>(1 - color));
      ds.labels.push_back(y);
    }
    out.push_back(std::move(ds));
  }
  return out;
}

std::vector<DomainDataset> gen_gaussian_shift(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<DomainDataset> out;
  const std::size_t k = spec.num_classes;
  for (std::size_t d = 0; d < spec.shifts.size(); ++d) {
    CounterRng rng(derive_seed(derive_seed(spec.seed, "data"), static_cast<std::uint64_t>(d)));
    DomainDataset ds = empty_domain(static_cast<int>(d), 2, spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
      const std::size_t y = i % k;
      const double a = 2.0 * std::numbers::pi * static_cast<double>(y) / static_cast<double>(k);
      ds.features.push_back(2.0 * std::cos(a) + spec.shifts[d][0] + spec.feature_noise * rng.normal());
      ds.features.push_back(2.0 * std::sin(a) + spec.shifts[d][1] + spec.feature_noise * rng.normal());
      ds.labels.push_back(maybe_flip(y, k, spec.label_noise, rng));
    }
    out.push_back(std::move(ds));
  }
  return out;
}

std::vector<DomainDataset> generate(const SyntheticSpec& spec) {
  switch (spec.kind) {
    case SyntheticKind::two_moons: return gen_two_moons(spec);
    case SyntheticKind::colored: return gen_colored(spec);
    case SyntheticKind::gaussian_shift: return gen_gaussian_shift(spec);
  }
  return {};
}

void save_csv(std::span<const DomainDataset> datasets, std::ostream& out) {
  if (datasets.empty()) throw ContractError("save_csv: nothing to write");
  const std::size_t dim = datasets.front().dim;
  out << "domain_id,label";
  for (std::size_t f = 0; f < dim; ++f) out << ",f" << f;
  out << '\n';
  char buf[40];
  for (const DomainDataset& ds : datasets) {
    ds.validate();
    if (ds.dim != dim) throw SchemaError("save_csv: datasets have different feature widths");
    for (std::size_t i = 0; i < ds.size(); ++i) {
      out << ds.domain_id << ',' << ds.labels[i];
      for (double v : ds.sample(i)) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << ',' << buf;
      }
      out << '\n';
    }
  }
}

void save_csv(std::span<const DomainDataset> datasets, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save_csv(datasets, out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<DomainDataset> load_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw SchemaError("dataset CSV is empty");
  const auto header = split_csv(trim(line));
  if (header.size() < 3 || trim(header[0]) != "domain_id" || trim(header[1]) != "label") {
    throw SchemaError("dataset CSV header must start with domain_id,label,f0");
  }
  const std::size_t dim = header.size() - 2;
  for (std::size_t f = 0; f < dim; ++f) {
    if (trim(header[f + 2]) != "f" + std::to_string(f)) {
      throw SchemaError("dataset CSV header column " + std::to_string(f + 3) + " should be f" + std::to_string(f));
    }
  }

  std::vector<DomainDataset> out;
  std::map<long, std::size_t> slot;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != dim + 2) {
      throw SchemaError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim + 2) +
                        " fields, found " + std::to_string(cells.size()));
    }
    auto parse_int = [&](const std::string& raw, const char* what) {
      const std::string s = trim(raw);
      char* end = nullptr;
      const long v = std::strtol(s.c_str(), &end, 10);
      if (s.empty() || *end != '\0') throw ParseError(std::string("missing or malformed ") + what, line_no);
      return v;
    };
    const long domain = parse_int(cells[0], "domain_id");
    const long label = parse_int(cells[1], "label");
    if (label < 0) throw ParseError("negative label", line_no);
    auto [it, inserted] = slot.try_emplace(domain, out.size());
    if (inserted) {
      DomainDataset ds;
      ds.domain_id = static_cast<int>(domain);
      ds.dim = dim;
      out.push_back(std::move(ds));
    }
    DomainDataset& ds = out[it->second];
    for (std::size_t f = 0; f < dim; ++f) {
      const std::string s = trim(cells[f + 2]);
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || *end != '\0') throw ParseError("malformed feature f" + std::to_string(f), line_no);
      ds.features.push_back(v);
    }
    ds.labels.push_back(static_cast<std::size_t>(label));
  }
  if (out.empty()) throw SchemaError("dataset CSV has a header but no rows");
  return out;
}

std::vector<DomainDataset> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return load_csv(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

std::size_t steps_per_epoch(std::span<const std::size_t> domain_sizes, std::size_t batch_per_domain) {
  if (batch_per_domain < 1) throw ContractError("batch_per_domain must be at least 1");
  if (domain_sizes.empty()) throw ContractError("batch sampler needs at least one domain");
  const std::size_t longest = *std::max_element(domain_sizes.begin(), domain_sizes.end());
  return (longest + batch_per_domain - 1) / batch_per_domain;
}

std::vector<DomainBatchIndices> batch_sampler(std::span<const std::size_t> domain_sizes,
                                              std::size_t batch_per_domain, std::uint64_t seed,
                                              std::uint64_t epoch) {
  const std::size_t steps = steps_per_epoch(domain_sizes, batch_per_domain);
  std::vector<DomainBatchIndices> plan(steps, DomainBatchIndices(domain_sizes.size()));
  const std::uint64_t epoch_seed = derive_seed(derive_seed(seed, "sampler"), epoch);
  for (std::size_t d = 0; d < domain_sizes.size(); ++d) {
    const std::size_t n = domain_sizes[d];
    if (n == 0) throw ContractError("batch sampler: domain " + std::to_string(d) + " is empty");
    CounterRng rng(derive_seed(epoch_seed, static_cast<std::uint64_t>(d)));
    std::vector<std::size_t> perm;
    std::size_t cursor = n;
    for (std::size_t s = 0; s < steps; ++s) {
      auto& batch = plan[s][d];
      batch.reserve(batch_per_domain);
      for (std::size_t b = 0; b < batch_per_domain; ++b) {
        if (cursor == n) {
          perm.resize(n);
          for (std::size_t i = 0; i < n; ++i) perm[i] = i;
          for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
          cursor = 0;
        }
        batch.push_back(perm[cursor++]);
      }
    }
  }
  return plan;
}

std::vector<std::size_t> dataset_sizes(std::span<const DomainDataset> datasets) {
  std::vector<std::size_t> sizes;
  for (const DomainDataset& d : datasets) sizes.push_back(d.size());
  return sizes;
}

}  // namespace madg
