#include "madg/finite_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "madg/errors.hpp"
#include "madg/margin.hpp"
#include "madg/rng.hpp"

namespace madg {

namespace {

constexpr double kSimplexTolerance = 1e-12;

void canonicalize(std::vector<LabeledPoint>& points, std::vector<double>& probs) {
  std::map<LabeledPoint, double> merged;
  for (std::size_t i = 0; i < points.size(); ++i) merged[points[i]] += probs[i];
  points.clear();
  probs.clear();
  for (const auto& [p, w] : merged) {
    points.push_back(p);
    probs.push_back(w);
  }
}

double weighted_margin_error(const SimplexWeights& w, std::span<const DiscreteDomain> domains,
                             const ScoringTable& f, double rho) {
  double total = 0.0;
  for (std::size_t i = 0; i < domains.size(); ++i) total += w[i] * exact_margin_error(domains[i], f, rho);
  return total;
}

double ideal_loss(const FiniteClass& cls, const SimplexWeights& w, std::span<const DiscreteDomain> sources,
                  const DiscreteDomain& extra, double rho) {
  if (w.size() != sources.size()) throw ContractError("ideal loss: weight count differs from source count");
  double best = INFINITY;
  for (const ScoringTable& g : cls.functions()) {
    best = std::min(best, weighted_margin_error(w, sources, g, rho) + exact_margin_error(extra, g, rho));
  }
  return best;
}

CheckReport make_report(std::string name, double lhs, double rhs, const CheckOptions& options) {
  CheckReport r;
  r.check = std::move(name);
  r.lhs = lhs;
  r.rhs = rhs + options.rhs_offset;
  r.slack = r.rhs - r.lhs;
  r.violated = r.slack < -kViolationTolerance;
  return r;
}

void compositions(std::size_t parts, std::size_t remaining, std::vector<std::size_t>& prefix,
                  std::vector<std::vector<std::size_t>>& out) {
  if (prefix.size() + 1 == parts) {
    prefix.push_back(remaining);
    out.push_back(prefix);
    prefix.pop_back();
    return;
  }
  for (std::size_t m = 0; m <= remaining; ++m) {
    prefix.push_back(m);
    compositions(parts, remaining - m, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

DiscreteDomain::DiscreteDomain(std::size_t universe, std::vector<LabeledPoint> points, std::vector<double> probs)
    : universe_(universe) {
  if (points.size() != probs.size()) throw ContractError("domain: points and probs differ in length");
  if (points.empty()) throw ContractError("domain must have at least one point");
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].input >= universe) throw IndexError("domain: input id outside the universe");
    if (!(probs[i] >= 0.0)) throw ContractError("domain: negative probability");
    total += probs[i];
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) {
    throw ContractError("domain probabilities sum to " + std::to_string(total) + ", expected 1");
  }
  canonicalize(points, probs);
  points_ = std::move(points);
  probs_ = std::move(probs);
}

DiscreteDomain DiscreteDomain::empirical(std::size_t universe, std::span<const LabeledPoint> samples) {
  if (samples.empty()) throw ContractError("empirical domain needs at least one sample");
  std::map<LabeledPoint, std::size_t> counts;
  for (const LabeledPoint& p : samples) ++counts[p];
  std::vector<LabeledPoint> points;
  std::vector<double> probs;
  const double n = static_cast<double>(samples.size());
  for (const auto& [p, c] : counts) {
    points.push_back(p);
    probs.push_back(static_cast<double>(c) / n);
  }
  return DiscreteDomain(universe, std::move(points), std::move(probs));
}

ScoringTable::ScoringTable(std::size_t universe, std::size_t num_classes, std::vector<double> scores)
    : universe_(universe), k_(num_classes), scores_(std::move(scores)) {
  if (k_ < 2) throw ContractError("scoring table needs k >= 2");
  if (scores_.size() != universe_ * k_) throw DimensionError("scoring table size differs from universe * k");
}

std::span<const double> ScoringTable::scores(std::size_t input) const {
  if (input >= universe_) throw IndexError("scoring table: input id outside the universe");
  return std::span<const double>(scores_).subspan(input * k_, k_);
}

std::size_t ScoringTable::predict(std::size_t input) const { return predict_label(scores(input)); }

FiniteClass::FiniteClass(std::vector<ScoringTable> functions) : functions_(std::move(functions)) {
  if (functions_.empty()) throw ContractError("hypothesis class must be nonempty");
  for (const ScoringTable& g : functions_) {
    if (g.universe() != functions_.front().universe() || g.num_classes() != functions_.front().num_classes()) {
      throw ContractError("hypothesis class members disagree on universe or class count");
    }
  }
}

SimplexWeights::SimplexWeights(std::vector<double> weights) : w_(std::move(weights)) {
  if (w_.empty()) throw ContractError("simplex weights must be nonempty");
  double total = 0.0;
  for (double v : w_) {
    if (!(v >= 0.0)) throw ContractError("simplex weights must be nonnegative");
    total += v;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) throw ContractError("simplex weights must sum to 1");
}

SimplexWeights SimplexWeights::uniform(std::size_t n) {
  return SimplexWeights(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

SimplexWeights SimplexWeights::vertex(std::size_t n, std::size_t i) {
  std::vector<double> w(n, 0.0);
  w.at(i) = 1.0;
  return SimplexWeights(std::move(w));
}

DiscreteDomain mixture(std::span<const DiscreteDomain> domains, const SimplexWeights& weights) {
  if (domains.empty() || domains.size() != weights.size()) {
    throw ContractError("mixture: need one weight per domain");
  }
  const std::size_t universe = domains.front().universe();
  std::vector<LabeledPoint> points;
  std::vector<double> probs;
  for (std::size_t d = 0; d < domains.size(); ++d) {
    if (domains[d].universe() != universe) throw ContractError("mixture: domains have different universes");
    if (weights[d] == 0.0) continue;
    for (std::size_t i = 0; i < domains[d].size(); ++i) {
      points.push_back(domains[d].points()[i]);
      probs.push_back(weights[d] * domains[d].probs()[i]);
    }
  }
  return DiscreteDomain(universe, std::move(points), std::move(probs));
}

double exact_disparity(const DiscreteDomain& domain, const ScoringTable& fprime, const ScoringTable& f, double rho) {
  double total = 0.0;
  for (std::size_t i = 0; i < domain.size(); ++i) {
    const std::size_t x = domain.points()[i].input;
    total += domain.probs()[i] * phi_rho(margin(fprime.scores(x), f.predict(x)), rho);
  }
  return total;
}

double exact_margin_error(const DiscreteDomain& domain, const ScoringTable& f, double rho) {
  double total = 0.0;
  for (std::size_t i = 0; i < domain.size(); ++i) {
    const LabeledPoint& p = domain.points()[i];
    total += domain.probs()[i] * phi_rho(margin(f.scores(p.input), p.label), rho);
  }
  return total;
}

double zero_one_error(const DiscreteDomain& domain, const ScoringTable& f) {
  double total = 0.0;
  for (std::size_t i = 0; i < domain.size(); ++i) {
    const LabeledPoint& p = domain.points()[i];
    if (f.predict(p.input) != p.label) total += domain.probs()[i];
  }
  return total;
}

double exact_mdd(const FiniteClass& cls, const ScoringTable& f, const DiscreteDomain& from,
                 const DiscreteDomain& to, double rho) {
  double best = -INFINITY;
  for (const ScoringTable& g : cls.functions()) {
    best = std::max(best, exact_disparity(to, g, f, rho) - exact_disparity(from, g, f, rho));
  }
  return best;
}

double ideal_loss_hat_lambda(const FiniteClass& cls, const SimplexWeights& alpha,
                             std::span<const DiscreteDomain> sources, const DiscreteDomain& target, double rho) {
  return ideal_loss(cls, alpha, sources, target, rho);
}

double ideal_loss_bar_lambda(const FiniteClass& cls, const SimplexWeights& pi,
                             std::span<const DiscreteDomain> sources, const DiscreteDomain& unseen, double rho) {
  return ideal_loss(cls, pi, sources, unseen, rho);
}

std::vector<SimplexWeights> simplex_grid(std::size_t num_sources, std::size_t resolution) {
  if (num_sources < 1) throw ContractError("simplex_grid needs at least one source");
  if (resolution < 1) throw ContractError("simplex_grid resolution must be >= 1");
  std::vector<std::vector<std::size_t>> comps;
  std::vector<std::size_t> prefix;
  compositions(num_sources, resolution, prefix, comps);
  std::vector<SimplexWeights> grid;
  grid.reserve(comps.size());
  const double r = static_cast<double>(resolution);
  for (const auto& c : comps) {
    std::vector<double> w(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) w[i] = static_cast<double>(c[i]) / r;
    grid.emplace_back(std::move(w));
  }
  return grid;
}

std::size_t default_grid_resolution(std::size_t num_sources) { return num_sources <= 3 ? 4 : 2; }

HullProjection hull_projection(const FiniteClass& cls, const ScoringTable& f, const DiscreteDomain& unseen,
                               std::span<const DiscreteDomain> sources, std::size_t resolution, double rho) {
  HullProjection best;
  best.gamma = INFINITY;
  for (const SimplexWeights& pi : simplex_grid(sources.size(), resolution)) {
    const double d = exact_mdd(cls, f, mixture(sources, pi), unseen, rho);
    if (d < best.gamma) {
      best.gamma = d;
      best.pi = pi;
    }
  }
  return best;
}

double epsilon_max_pairwise(const FiniteClass& cls, const ScoringTable& f,
                            std::span<const DiscreteDomain> sources, double rho) {
  if (sources.size() < 2) throw ContractError("epsilon_max_pairwise needs at least two sources");
  double eps = 0.0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    for (std::size_t k = 0; k < sources.size(); ++k) {
      if (i != k) eps = std::max(eps, exact_mdd(cls, f, sources[i], sources[k], rho));
    }
  }
  return eps;
}

std::string report_header() { return "check_name,instance_seed,lhs,rhs,slack,violated"; }

std::string format_report_line(const CheckReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%llu,%.17g,%.17g,%.17g,%d", r.check.c_str(),
                static_cast<unsigned long long>(r.seed), r.lhs, r.rhs, r.slack, r.violated ? 1 : 0);
  return buf;
}

CheckReport check_mixture_transfer(const FiniteClass& cls, const ScoringTable& f, const SimplexWeights& alpha,
                                   std::span<const DiscreteDomain> sources, const DiscreteDomain& target, double rho,
                                   const CheckOptions& options) {
  const double lhs = exact_mdd(cls, f, mixture(sources, alpha), target, rho);
  double rhs = 0.0;
  for (std::size_t i = 0; i < sources.size(); ++i) rhs += alpha[i] * exact_mdd(cls, f, sources[i], target, rho);
  return make_report("mixture_transfer", lhs, rhs, options);
}

CheckReport check_hull_mdd(const FiniteClass& cls, const ScoringTable& f, std::span<const DiscreteDomain> sources,
                           double rho, std::size_t resolution, const CheckOptions& options) {
  const double eps = epsilon_max_pairwise(cls, f, sources, rho);
  std::vector<DiscreteDomain> hull;
  for (const SimplexWeights& pi : simplex_grid(sources.size(), resolution)) hull.push_back(mixture(sources, pi));
  CheckReport worst;
  bool first = true;
  for (const DiscreteDomain& a : hull) {
    for (const DiscreteDomain& b : hull) {
      CheckReport r = make_report("hull_mdd", exact_mdd(cls, f, a, b, rho), eps, options);
      if (first || r.slack < worst.slack) worst = r;
      first = false;
    }
  }
  return worst;
}

CheckReport check_mixture_bound(const FiniteClass& cls, const ScoringTable& f, const SimplexWeights& alpha,
                                std::span<const DiscreteDomain> sources, const DiscreteDomain& target, double rho,
                                const CheckOptions& options) {
  const double lhs = zero_one_error(target, f);
  double rhs = ideal_loss_hat_lambda(cls, alpha, sources, target, rho);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    rhs += alpha[i] * (exact_margin_error(sources[i], f, rho) + exact_mdd(cls, f, sources[i], target, rho));
  }
  return make_report("mixture_bound", lhs, rhs, options);
}

CheckReport check_unseen_bound_per_pi(const FiniteClass& cls, const ScoringTable& f, const SimplexWeights& pi,
                                      std::span<const DiscreteDomain> sources, const DiscreteDomain& unseen,
                                      double rho, const CheckOptions& options) {
  const double lhs = zero_one_error(unseen, f);
  const double rhs = weighted_margin_error(pi, sources, f, rho) + epsilon_max_pairwise(cls, f, sources, rho) +
                     exact_mdd(cls, f, mixture(sources, pi), unseen, rho) +
                     ideal_loss_bar_lambda(cls, pi, sources, unseen, rho);
  return make_report("unseen_bound", lhs, rhs, options);
}

CheckReport check_unseen_bound_grid(const FiniteClass& cls, const ScoringTable& f,
                                    std::span<const DiscreteDomain> sources, const DiscreteDomain& unseen,
                                    double rho, std::size_t resolution, const CheckOptions& options) {
  CheckReport worst;
  bool first = true;
  for (const SimplexWeights& pi : simplex_grid(sources.size(), resolution)) {
    CheckReport r = check_unseen_bound_per_pi(cls, f, pi, sources, unseen, rho, options);
    if (first || r.slack < worst.slack) worst = r;
    first = false;
  }
  return worst;
}

OracleInstance random_instance(std::uint64_t seed, const InstanceLimits& limits) {
  CounterRng rng(derive_seed(seed, "oracle-instance"));
  OracleInstance inst;
  inst.seed = seed;
  inst.num_classes = 2 + rng.below(2);
  inst.universe = 2 + rng.below(std::max<std::size_t>(limits.max_points, 2) - 1);
  const std::size_t k = inst.num_classes;
  const std::size_t n_src = limits.min_sources + rng.below(limits.max_sources - limits.min_sources + 1);

  std::vector<std::size_t> truth(inst.universe);
  for (auto& y : truth) y = rng.below(k);

  auto random_domain = [&]() {
    std::vector<LabeledPoint> pts;
    std::vector<double> w;
    const double keep = rng.uniform(0.3, 1.0);
    for (std::size_t x = 0; x < inst.universe; ++x) {
      if (!rng.bernoulli(keep)) continue;
      const std::size_t y = rng.bernoulli(0.75) ? truth[x] : rng.below(k);
      pts.push_back({x, y});
      w.push_back(-std::log(1.0 - rng.uniform()));
    }
    if (pts.empty()) {
      const std::size_t x = rng.below(inst.universe);
      pts.push_back({x, truth[x]});
      w.push_back(1.0);
    }
    double total = 0.0;
    for (double v : w) total += v;
    for (double& v : w) v /= total;
    return DiscreteDomain(inst.universe, std::move(pts), std::move(w));
  };

  // Coarse score levels produce ties and saturated margins; continuous ones cover the rest.
  const bool coarse = rng.bernoulli(0.5);
  auto random_table = [&]() {
    std::vector<double> s(inst.universe * k);
    for (double& v : s) v = coarse ? 0.5 * static_cast<double>(rng.below(5)) - 1.0 : rng.uniform(-1.5, 1.5);
    return ScoringTable(inst.universe, k, std::move(s));
  };

  for (std::size_t i = 0; i < n_src; ++i) inst.sources.push_back(random_domain());
  inst.unseen = rng.bernoulli(0.2) ? inst.sources[rng.below(n_src)] : random_domain();

  const std::size_t m = 1 + rng.below(limits.max_functions);
  std::vector<ScoringTable> fns;
  for (std::size_t i = 0; i < m; ++i) fns.push_back(random_table());
  inst.cls = FiniteClass(std::move(fns));
  inst.f = rng.bernoulli(0.5) ? inst.cls.functions()[rng.below(m)] : random_table();
  inst.rho = coarse ? 0.25 * static_cast<double>(1 + rng.below(4)) : rng.uniform(0.05, 1.5);
  return inst;
}

std::vector<CheckReport> run_theory_suite(const SuiteOptions& options) {
  std::vector<CheckReport> reports;
  reports.reserve(options.instances * 4);
  for (std::size_t n = 0; n < options.instances; ++n) {
    const std::uint64_t seed = derive_seed(options.seed, static_cast<std::uint64_t>(n));
    const OracleInstance inst = random_instance(seed);
    CounterRng rng(derive_seed(seed, "alpha"));
    std::vector<double> a(inst.sources.size());
    double total = 0.0;
    for (double& v : a) total += (v = -std::log(1.0 - rng.uniform()));
    for (double& v : a) v /= total;
    const SimplexWeights alpha(std::move(a));

    const std::span<const DiscreteDomain> sources(inst.sources);
    for (CheckReport r : {check_mixture_transfer(inst.cls, inst.f, alpha, sources, inst.unseen, inst.rho, options.check),
                          check_hull_mdd(inst.cls, inst.f, sources, inst.rho, options.resolution, options.check),
                          check_mixture_bound(inst.cls, inst.f, alpha, sources, inst.unseen, inst.rho, options.check),
                          check_unseen_bound_grid(inst.cls, inst.f, sources, inst.unseen, inst.rho, options.resolution,
                                              options.check)}) {
      r.seed = seed;
      reports.push_back(std::move(r));
    }
  }
  return reports;
}

}  // namespace madg
