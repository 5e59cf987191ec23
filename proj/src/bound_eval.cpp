#include "madg/bound_eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "madg/autodiff.hpp"
#include "madg/errors.hpp"
#include "madg/margin.hpp"
#include "madg/rng.hpp"

namespace madg {

namespace {

Tensor scores_on(const ScoringTable& g, std::span<const LabeledPoint> sample) {
  const std::size_t k = g.num_classes();
  std::vector<double> out;
  out.reserve(sample.size() * k);
  for (const LabeledPoint& p : sample) {
    const auto s = g.scores(p.input);
    out.insert(out.end(), s.begin(), s.end());
  }
  return Tensor({sample.size(), k}, std::move(out));
}

std::vector<double> sigma_draw(std::uint64_t seed, std::size_t draw, std::size_t n) {
  CounterRng rng(derive_seed(derive_seed(seed, "sigma"), static_cast<std::uint64_t>(draw)));
  std::vector<double> s(n);
  for (double& v : s) v = rng.bernoulli(0.5) ? 1.0 : -1.0;
  return s;
}

std::vector<double> sigma_from_mask(std::uint64_t mask, std::size_t n) {
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = (mask >> i) & 1U ? 1.0 : -1.0;
  return s;
}

/// Averages sup(sigma) over all 2^n sign vectors, pairing each vector with its negation
/// so that contributions of linear forms cancel exactly.
template <typename Sup>
RademacherEstimate exact_average(std::size_t n, Sup&& sup) {
  const std::uint64_t half = std::uint64_t{1} << (n - 1);
  const std::uint64_t all = (std::uint64_t{1} << n) - 1;
  double total = 0.0;
  for (std::uint64_t m = 0; m < half; ++m) total += sup(sigma_from_mask(m, n)) + sup(sigma_from_mask(all ^ m, n));
  RademacherEstimate r;
  r.value = total / static_cast<double>(std::uint64_t{1} << n);
  r.exact = true;
  r.draws = static_cast<std::size_t>(std::uint64_t{1} << n);
  return r;
}

template <typename Sup>
RademacherEstimate monte_carlo(std::size_t n, std::uint64_t seed, std::size_t draws, Sup&& sup) {
  if (draws == 0) throw ContractError("Monte Carlo estimate needs at least one sign draw");
  std::vector<double> v(draws);
  for (std::size_t d = 0; d < draws; ++d) v[d] = sup(sigma_draw(seed, d, n));
  RademacherEstimate r;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(draws);
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  r.value = mean;
  r.std_error = draws > 1 ? std::sqrt(var / static_cast<double>(draws - 1) / static_cast<double>(draws)) : 0.0;
  r.draws = draws;
  return r;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_error_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  return std::sqrt(var / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

/// Rows of phi scaled by sigma, with a trailing sigma column for the bias.
Tensor signed_design(const Tensor& phi, std::span<const double> sigma) {
  const std::size_t n = phi.rows(), m = phi.cols();
  std::vector<double> out;
  out.reserve(n * (m + 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out.push_back(sigma[i] * phi.at(i, j));
    out.push_back(sigma[i]);
  }
  return Tensor({n, m + 1}, std::move(out));
}

double readout_correlation(const Tensor& design, const std::vector<double>& params, std::size_t k,
                           std::span<const std::size_t> columns) {
  const std::size_t n = design.rows(), m1 = design.cols();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double u = 0.0;
    for (std::size_t j = 0; j < m1; ++j) u += design.at(i, j) * params[j * k + columns[i]];
    s += u;
  }
  return s / static_cast<double>(n);
}

void validate_family(const ReadoutFamily& family) {
  if (family.features.rank() != 2 || family.features.rows() == 0) throw ContractError("readout family needs a nonempty sample");
  if (family.columns.size() != family.features.rows()) throw DimensionError("one output column per sample point is required");
  for (std::size_t c : family.columns) {
    if (c >= family.num_outputs) throw IndexError("readout column out of range");
  }
  if (!(family.bound > 0.0)) throw ContractError("readout parameter bound must be positive");
}

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Provenance weakest(std::initializer_list<Provenance> ps) {
  Provenance w = Provenance::exact;
  for (Provenance p : ps) w = std::max(w, p);
  return w;
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::exact: return "exact";
    case Provenance::estimated: return "estimated";
    case Provenance::estimated_lower_bound: return "estimated (lower bound of sup)";
    case Provenance::unavailable: return "unavailable";
  }
  return "unavailable";
}

double empirical_mdd(const FiniteClass& cls, const ScoringTable& f, std::span<const LabeledPoint> from,
                     std::span<const LabeledPoint> to, double rho) {
  if (from.empty() || to.empty()) throw ContractError("empirical_mdd needs two nonempty samples");
  const Tensor f_from = scores_on(f, from), f_to = scores_on(f, to);
  double best = -std::numeric_limits<double>::infinity();
  for (const ScoringTable& g : cls.functions()) {
    const double gap = margin_disparity(scores_on(g, to), f_to, rho) - margin_disparity(scores_on(g, from), f_from, rho);
    best = std::max(best, gap);
  }
  return best;
}

double epsilon_hat_sum(const FiniteClass& cls, const ScoringTable& f, std::span<const DiscreteDomain> domains,
                       double rho) {
  if (domains.size() < 2) throw ContractError("epsilon_hat needs at least two domains");
  double total = 0.0;
  for (std::size_t i = 0; i < domains.size(); ++i) {
    for (std::size_t k = i + 1; k < domains.size(); ++k) total += exact_mdd(cls, f, domains[i], domains[k], rho);
  }
  return total;
}

double epsilon_hat_max(const FiniteClass& cls, const ScoringTable& f, std::span<const DiscreteDomain> domains,
                       double rho) {
  if (domains.size() < 2) throw ContractError("epsilon_hat needs at least two domains");
  return epsilon_max_pairwise(cls, f, domains, rho);
}

NetworkDiscrepancy network_epsilon(const MadgModel& model, std::span<const DomainDataset> domains, double rho) {
  if (domains.size() < 2) throw ContractError("epsilon_hat needs at least two domains");
  const std::size_t n = domains.size();
  // disp[d][g]: ramp disparity of candidate g against f on domain d; g = head, then aux heads.
  std::vector<std::vector<double>> disp(n);
  for (std::size_t d = 0; d < n; ++d) {
    const Tensor features = extract_features(model, domains[d].as_matrix());
    const Tensor f_scores = apply_linear(model.head, features);
    disp[d].push_back(margin_disparity(f_scores, f_scores, rho));
    for (const Linear& aux : model.aux_heads) disp[d].push_back(margin_disparity(apply_linear(aux, features), f_scores, rho));
  }
  NetworkDiscrepancy out;
  out.ordered.assign(n, std::vector<double>(n, 0.0));
  double sum = 0.0, mx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      if (i == k) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t g = 0; g < disp[i].size(); ++g) best = std::max(best, disp[k][g] - disp[i][g]);
      out.ordered[i][k] = best;
      mx = std::max(mx, best);
      if (i < k) sum += best;
    }
  }
  out.sum = {sum, Provenance::estimated_lower_bound};
  out.max = {mx, Provenance::estimated_lower_bound};
  return out;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw DimensionError("js_divergence needs two equally sized nonempty vectors");
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::clamp(js, 0.0, std::numbers::ln2);
}

double js_divergence(const DiscreteDomain& a, const DiscreteDomain& b) {
  if (a.size() == 0 || b.size() == 0) throw ContractError("js_divergence needs nonempty distributions");
  std::vector<double> p, q;
  std::size_t i = 0, k = 0;
  const auto& pa = a.points();
  const auto& pb = b.points();
  while (i < pa.size() || k < pb.size()) {
    if (k == pb.size() || (i < pa.size() && pa[i] < pb[k])) {
      p.push_back(a.probs()[i++]);
      q.push_back(0.0);
    } else if (i == pa.size() || pb[k] < pa[i]) {
      p.push_back(0.0);
      q.push_back(b.probs()[k++]);
    } else {
      p.push_back(a.probs()[i++]);
      q.push_back(b.probs()[k++]);
    }
  }
  return js_divergence(p, q);
}

double js_divergence_histogram(const DomainDataset& a, const DomainDataset& b, std::size_t bins) {
  a.validate();
  b.validate();
  if (a.dim != b.dim) throw DimensionError("js_divergence: domains have different feature widths");
  if (bins < 1) throw ContractError("js_divergence: bins must be positive");
  const std::size_t na = a.size(), nb = b.size(), d = a.dim;
  Eigen::MatrixXd x(na + nb, d);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(i, j) = a.features[i * d + j];
  }
  for (std::size_t i = 0; i < nb; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(na + i, j) = b.features[i * d + j];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const std::size_t axes = std::min<std::size_t>(2, d);
  Eigen::MatrixXd proj;
  if (d == 1) {
    proj = x;
  } else {
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(na + nb);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    // Eigenvalues are ascending; take the trailing columns.
    proj = x * eig.eigenvectors().rightCols(axes).rowwise().reverse();
  }
  std::vector<double> lo(axes), width(axes);
  for (std::size_t c = 0; c < axes; ++c) {
    lo[c] = proj.col(c).minCoeff();
    width[c] = proj.col(c).maxCoeff() - lo[c];
  }
  const std::size_t cells = axes == 1 ? bins : bins * bins;
  std::vector<double> p(cells, 1e-9), q(cells, 1e-9);
  for (std::size_t r = 0; r < na + nb; ++r) {
    std::size_t cell = 0;
    for (std::size_t c = 0; c < axes; ++c) {
      std::size_t bin = 0;
      if (width[c] > 0.0) {
        bin = static_cast<std::size_t>((proj(r, c) - lo[c]) / width[c] * static_cast<double>(bins));
        bin = std::min(bin, bins - 1);
      }
      cell = cell * bins + bin;
    }
    (r < na ? p : q)[cell] += 1.0;
  }
  double sp = 0.0, sq = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    sp += p[c];
    sq += q[c];
  }
  for (std::size_t c = 0; c < cells; ++c) {
    p[c] /= sp;
    q[c] /= sq;
  }
  return js_divergence(p, q);
}

double gamma_from_row(std::span<const double> js_row) {
  double s = 0.0;
  for (double v : js_row) s += v;
  return s;
}

double gamma_estimate(const DomainDataset& held_out, std::span<const DomainDataset> sources, std::size_t bins) {
  std::vector<double> row;
  for (const DomainDataset& s : sources) row.push_back(js_divergence_histogram(held_out, s, bins));
  return gamma_from_row(row);
}

std::string_view to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::pi_H_F: return "pi_H_F";
    case FamilyKind::pi_1_F: return "pi_1_F";
    case FamilyKind::raw_class: return "raw_class";
  }
  return "raw_class";
}

EnumeratedFamily enumerate_family(FamilyKind kind, const FiniteClass& cls, std::span<const LabeledPoint> sample) {
  if (sample.empty()) throw ContractError("enumerate_family needs a nonempty sample");
  EnumeratedFamily fam;
  fam.kind = kind;
  const auto& fs = cls.functions();
  for (const ScoringTable& f : fs) {
    switch (kind) {
      case FamilyKind::raw_class: {
        std::vector<double> v;
        for (const LabeledPoint& p : sample) v.push_back(f.scores(p.input)[p.label]);
        fam.values.push_back(std::move(v));
        break;
      }
      case FamilyKind::pi_H_F:
        for (const ScoringTable& g : fs) {
          std::vector<double> v;
          for (const LabeledPoint& p : sample) v.push_back(f.scores(p.input)[g.predict(p.input)]);
          fam.values.push_back(std::move(v));
        }
        break;
      case FamilyKind::pi_1_F:
        for (std::size_t c = 0; c < cls.num_classes(); ++c) {
          std::vector<double> v;
          for (const LabeledPoint& p : sample) v.push_back(f.scores(p.input)[c]);
          fam.values.push_back(std::move(v));
        }
        break;
    }
  }
  return fam;
}

RademacherEstimate rademacher_enumerated(const EnumeratedFamily& family, std::uint64_t seed, std::size_t draws,
                                         std::size_t exact_limit) {
  if (family.values.empty()) throw ContractError("Rademacher complexity of an empty family");
  const std::size_t n = family.sample_size();
  if (n == 0) throw ContractError("Rademacher complexity needs a nonempty sample");
  for (const auto& m : family.values) {
    if (m.size() != n) throw DimensionError("family members disagree on the sample size");
  }
  auto sup = [&](const std::vector<double>& sigma) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& m : family.values) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += sigma[i] * m[i];
      best = std::max(best, s / static_cast<double>(n));
    }
    return best;
  };
  if (n <= exact_limit && n < 63) return exact_average(n, sup);
  return monte_carlo(n, seed, draws, sup);
}

AscentResult rademacher_ascent(const ReadoutFamily& family, const Tensor& weight, const Tensor& bias,
                               const AscentOptions& options) {
  validate_family(family);
  const std::size_t n = family.features.rows(), m = family.features.cols(), k = family.num_outputs;
  if (weight.shape() != Shape{m, k} || bias.shape() != Shape{k}) throw DimensionError("readout parameters do not match the family");
  if (options.draws == 0) throw ContractError("rademacher_ascent needs at least one sign draw");
  std::vector<double> init(weight.data().begin(), weight.data().end());
  init.insert(init.end(), bias.data().begin(), bias.data().end());
  for (double& v : init) v = std::clamp(v, -family.bound, family.bound);

  AscentResult out;
  std::vector<std::vector<double>> per_step(options.steps + 1, std::vector<double>(options.draws));
  for (std::size_t d = 0; d < options.draws; ++d) {
    const Tensor design = signed_design(family.features, sigma_draw(options.seed, d, n));
    Tensor params({m + 1, k}, init, true);
    for (std::size_t t = 0;; ++t) {
      params.zero_grad();
      Tape tape;
      const Var w = tape.leaf(params);
      const Var corr = tape.mean(tape.gather_label(tape.matmul(tape.constant(design), w), family.columns));
      // mean over n rows already divides by n.
      per_step[t][d] = tape.value(corr).item();
      if (t == options.steps) break;
      tape.backward(corr);
      const auto g = params.grad();
      auto p = params.data();
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::clamp(p[i] + options.step_size * g[i], -family.bound, family.bound);
    }
  }
  for (const auto& s : per_step) out.trajectory.push_back(mean_of(s));
  out.value = out.trajectory.back();
  out.std_error = std_error_of(per_step.back());
  return out;
}

RademacherEstimate rademacher_readout_grid(const ReadoutFamily& family, std::size_t points_per_axis, std::uint64_t seed,
                                           std::size_t exact_limit, std::size_t draws) {
  validate_family(family);
  if (points_per_axis < 2) throw ContractError("grid needs at least two points per axis (the box vertices)");
  const std::size_t n = family.features.rows(), k = family.num_outputs;
  const std::size_t dims = (family.features.cols() + 1) * k;
  std::size_t total = 1;
  for (std::size_t i = 0; i < dims; ++i) {
    if (total > 1'000'000 / points_per_axis) throw ContractError("readout grid too large to enumerate");
    total *= points_per_axis;
  }
  std::vector<std::vector<double>> grid;
  grid.reserve(total);
  for (std::size_t g = 0; g < total; ++g) {
    std::vector<double> p(dims);
    std::size_t rest = g;
    for (std::size_t i = 0; i < dims; ++i) {
      const std::size_t idx = rest % points_per_axis;
      rest /= points_per_axis;
      p[i] = -family.bound + 2.0 * family.bound * static_cast<double>(idx) / static_cast<double>(points_per_axis - 1);
    }
    grid.push_back(std::move(p));
  }
  auto sup = [&](const std::vector<double>& sigma) {
    const Tensor design = signed_design(family.features, sigma);
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& p : grid) best = std::max(best, readout_correlation(design, p, k, family.columns));
    return best;
  };
  if (n <= exact_limit && n < 63) return exact_average(n, sup);
  return monte_carlo(n, seed, draws, sup);
}

double deviation_term(double delta, std::size_t n) {
  if (!(delta > 0.0 && delta < 1.0)) throw ContractError("delta must lie in (0, 1)");
  if (n == 0) throw ContractError("sample size must be positive");
  return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(n)));
}

BoundReport assemble_bound_report(const BoundInputs& in, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ContractError("delta must lie in (0, 1), got " + real(delta));
  const std::size_t ns = in.source_margin_errors.size();
  if (ns == 0) throw ContractError("bound report needs at least one source");
  if (in.pi.size() != ns || in.sample_sizes.size() != ns) {
    throw DimensionError("bound report: pi, sample sizes and source errors must have one entry per source");
  }
  if (!in.rademacher_const.empty() && in.rademacher_const.size() != ns) {
    throw DimensionError("bound report: one constant-family complexity per source");
  }
  if (in.pair_i >= ns || in.pair_k >= ns) throw IndexError("bound report: arg-max pair out of range");
  if (!(in.rho > 0.0)) throw ContractError("rho must be positive");

  BoundReport r;
  r.inputs = in;
  r.delta = delta;
  const double k = static_cast<double>(in.num_classes);
  auto include = [&](std::string name, double value, Provenance p) { r.included.push_back({std::move(name), value, p}); };

  double err = 0.0;
  for (std::size_t i = 0; i < ns; ++i) err += in.pi[i] * in.source_margin_errors[i];
  include("weighted_source_margin_error", err, Provenance::exact);
  include("epsilon_hat_max", in.epsilon_hat_max.value, in.epsilon_hat_max.provenance);
  if (in.gamma && in.gamma->provenance != Provenance::unavailable) {
    include("gamma", in.gamma->value, in.gamma->provenance);
  } else {
    r.omitted.push_back("gamma");
  }
  if (in.lambda_bar) {
    include("lambda_bar", *in.lambda_bar, Provenance::exact);
  } else {
    r.omitted.push_back("lambda_bar");
  }
  if (in.rademacher_pair_i && in.rademacher_pair_k) {
    include("complexity_pair", k / in.rho * (in.rademacher_pair_i->value + in.rademacher_pair_k->value),
            weakest({in.rademacher_pair_i->provenance, in.rademacher_pair_k->provenance}));
  } else {
    r.omitted.push_back("complexity_pair");
  }
  include("deviation_pair_i", deviation_term(delta, in.sample_sizes[in.pair_i]), Provenance::exact);
  include("deviation_pair_k", deviation_term(delta, in.sample_sizes[in.pair_k]), Provenance::exact);
  const bool have_const = !in.rademacher_const.empty() &&
                          std::all_of(in.rademacher_const.begin(), in.rademacher_const.end(),
                                      [](const auto& e) { return e.has_value(); });
  if (have_const) {
    double c = 0.0;
    Provenance p = Provenance::exact;
    for (std::size_t i = 0; i < ns; ++i) {
      c += in.pi[i] * (2.0 * k * k / in.rho) * in.rademacher_const[i]->value;
      p = std::max(p, in.rademacher_const[i]->provenance);
    }
    include("source_complexity", c, p);
  } else {
    r.omitted.push_back("source_complexity");
  }
  double dev = 0.0;
  for (std::size_t i = 0; i < ns; ++i) dev += in.pi[i] * deviation_term(delta, in.sample_sizes[i]);
  include("source_deviation", dev, Provenance::exact);

  for (const NamedTerm& t : r.included) r.rhs_partial += *t.value;
  return r;
}

namespace {

std::vector<LabeledPoint> draw_sample(const DiscreteDomain& d, std::size_t n, CounterRng& rng) {
  std::vector<LabeledPoint> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = d.size() - 1;
    for (std::size_t i = 0; i < d.size(); ++i) {
      acc += d.probs()[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    out.push_back(d.points()[pick]);
  }
  return out;
}

}  // namespace

OracleBound oracle_bound(const OracleInstance& inst, double delta, std::size_t samples_per_domain,
                         std::size_t resolution) {
  if (samples_per_domain == 0) throw ContractError("oracle_bound needs at least one sample per domain");
  const std::size_t ns = inst.sources.size();
  if (ns < 2) throw ContractError("oracle_bound needs at least two sources");
  CounterRng rng(derive_seed(inst.seed, "bound-sample"));
  std::vector<std::vector<LabeledPoint>> samples;
  std::vector<DiscreteDomain> sources;
  for (const DiscreteDomain& d : inst.sources) {
    samples.push_back(draw_sample(d, samples_per_domain, rng));
    sources.push_back(DiscreteDomain::empirical(inst.universe, samples.back()));
  }
  const auto unseen_sample = draw_sample(inst.unseen, samples_per_domain, rng);
  const DiscreteDomain unseen = DiscreteDomain::empirical(inst.universe, unseen_sample);
  const std::size_t res = resolution ? resolution : default_grid_resolution(ns);
  const HullProjection hull = hull_projection(inst.cls, inst.f, unseen, sources, res, inst.rho);

  BoundInputs in;
  in.pi = hull.pi;
  in.num_classes = inst.num_classes;
  in.rho = inst.rho;
  for (const DiscreteDomain& d : sources) in.source_margin_errors.push_back(exact_margin_error(d, inst.f, inst.rho));
  in.epsilon_hat_max = {epsilon_hat_max(inst.cls, inst.f, sources, inst.rho), Provenance::exact};
  in.epsilon_hat_sum = {epsilon_hat_sum(inst.cls, inst.f, sources, inst.rho), Provenance::exact};
  in.gamma = Estimate{hull.gamma, Provenance::exact};
  in.lambda_bar = ideal_loss_bar_lambda(inst.cls, hull.pi, sources, unseen, inst.rho);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ns; ++i) {
    for (std::size_t k = 0; k < ns; ++k) {
      if (i == k) continue;
      const double v = exact_mdd(inst.cls, inst.f, sources[i], sources[k], inst.rho);
      if (v > best) {
        best = v;
        in.pair_i = i;
        in.pair_k = k;
      }
    }
  }
  auto rad = [&](FamilyKind kind, std::size_t i) {
    const RademacherEstimate r = rademacher_enumerated(enumerate_family(kind, inst.cls, samples[i]), inst.seed);
    return Estimate{r.value, r.exact ? Provenance::exact : Provenance::estimated};
  };
  in.rademacher_pair_i = rad(FamilyKind::pi_H_F, in.pair_i);
  in.rademacher_pair_k = rad(FamilyKind::pi_H_F, in.pair_k);
  for (std::size_t i = 0; i < ns; ++i) {
    in.rademacher_const.push_back(rad(FamilyKind::pi_1_F, i));
    in.sample_sizes.push_back(samples_per_domain);
  }
  OracleBound out;
  out.report = assemble_bound_report(in, delta);
  out.unseen_error = zero_one_error(unseen, inst.f);
  return out;
}

std::string format_bound_report(const BoundReport& r) {
  const BoundInputs& in = r.inputs;
  std::string out;
  auto line = [&](const std::string& name, std::optional<double> v, Provenance p) {
    out += name + " = " + (v ? real(*v) : std::string("n/a")) + " (" + std::string(to_string(p)) + ")\n";
  };
  line("num_classes", static_cast<double>(in.num_classes), Provenance::exact);
  line("rho", in.rho, Provenance::exact);
  line("delta", r.delta, Provenance::exact);
  for (std::size_t i = 0; i < in.source_margin_errors.size(); ++i) {
    const std::string s = std::to_string(i + 1);
    line("pi_" + s, in.pi[i], Provenance::exact);
    line("n_" + s, static_cast<double>(in.sample_sizes[i]), Provenance::exact);
    line("source_margin_error_" + s, in.source_margin_errors[i], Provenance::exact);
  }
  line("epsilon_hat_max", in.epsilon_hat_max.value, in.epsilon_hat_max.provenance);
  line("epsilon_hat_sum", in.epsilon_hat_sum.value, in.epsilon_hat_sum.provenance);
  for (const NamedTerm& t : in.js_terms) line(t.name, t.value, t.provenance);
  if (in.gamma) {
    line("gamma", in.gamma->value, in.gamma->provenance);
  } else {
    line("gamma", std::nullopt, Provenance::unavailable);
  }
  if (in.lambda_bar) {
    line("lambda_bar", *in.lambda_bar, Provenance::exact);
  } else {
    line("lambda_bar", std::nullopt, Provenance::unavailable);
  }
  auto rad = [&](const std::string& name, const std::optional<Estimate>& e) {
    if (e) {
      line(name, e->value, e->provenance);
    } else {
      line(name, std::nullopt, Provenance::unavailable);
    }
  };
  rad("rademacher_pair_i", in.rademacher_pair_i);
  rad("rademacher_pair_k", in.rademacher_pair_k);
  for (std::size_t i = 0; i < in.rademacher_const.size(); ++i) rad("rademacher_const_" + std::to_string(i + 1), in.rademacher_const[i]);
  Provenance overall = Provenance::exact;
  for (const NamedTerm& t : r.included) {
    line("term." + t.name, t.value, t.provenance);
    overall = std::max(overall, t.provenance);
  }
  line("rhs_partial", r.rhs_partial, overall);
  out += "omitted:";
  for (std::size_t i = 0; i < r.omitted.size(); ++i) out += (i ? ", " : " ") + r.omitted[i];
  out += "\n";
  return out;
}

}  // namespace madg
