#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "madg/errors.hpp"
#include "madg/finite_oracle.hpp"
#include "madg/margin.hpp"

using namespace madg;

namespace {

// Brute-force disparity straight from the definitions, independent of the library loop.
double oracle_disparity(const DiscreteDomain& d, const ScoringTable& fp, const ScoringTable& f, double rho) {
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t x = d.points()[i].input;
    auto s = fp.scores(x);
    auto t = f.scores(x);
    const std::size_t h = static_cast<std::size_t>(std::max_element(t.begin(), t.end()) - t.begin());
    double other = -1e300;
    for (std::size_t c = 0; c < s.size(); ++c)
      if (c != h) other = std::max(other, s[c]);
    const double m = 0.5 * (s[h] - other);
    const double ramp = m <= 0 ? 1.0 : (m >= rho ? 0.0 : 1.0 - m / rho);
    total += d.probs()[i] * ramp;
  }
  return total;
}

double oracle_mdd(const FiniteClass& cls, const ScoringTable& f, const DiscreteDomain& a, const DiscreteDomain& b,
                  double rho) {
  double best = -1e300;
  for (const auto& g : cls.functions()) best = std::max(best, oracle_disparity(b, g, f, rho) - oracle_disparity(a, g, f, rho));
  return best;
}

DiscreteDomain point_mass(std::size_t universe, std::size_t x, std::size_t y) {
  return DiscreteDomain(universe, {{x, y}}, {1.0});
}

}  // namespace

TEST_CASE("domains validate and canonicalize") {
  CHECK_THROWS_AS(DiscreteDomain(2, {{0, 0}}, {0.5}), ContractError);
  CHECK_THROWS_AS(DiscreteDomain(2, {{2, 0}}, {1.0}), IndexError);
  CHECK_THROWS_AS(DiscreteDomain(2, {{0, 0}, {1, 0}}, {1.5, -0.5}), ContractError);
  CHECK_THROWS_AS(DiscreteDomain(2, {}, {}), ContractError);
  const std::vector<LabeledPoint> s{{1, 0}, {0, 1}, {1, 0}, {1, 1}};
  const DiscreteDomain e = DiscreteDomain::empirical(2, s);
  CHECK(e.size() == 3);
  double mass_10 = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i)
    if (e.points()[i] == LabeledPoint{1, 0}) mass_10 = e.probs()[i];
  CHECK(mass_10 == doctest::Approx(0.5));
}

TEST_CASE("mixture weights the point masses") {
  const std::vector<DiscreteDomain> ds{point_mass(3, 0, 0), point_mass(3, 2, 1)};
  const DiscreteDomain m = mixture(ds, SimplexWeights({0.25, 0.75}));
  CHECK(m.size() == 2);
  CHECK(m == DiscreteDomain(3, {{2, 1}, {0, 0}}, {0.75, 0.25}));
  CHECK_THROWS_AS(mixture(ds, SimplexWeights::uniform(3)), ContractError);
  CHECK_THROWS_AS(SimplexWeights({0.5, 0.6}), ContractError);
  CHECK_THROWS_AS(SimplexWeights({1.5, -0.5}), ContractError);
}

TEST_CASE("hand-computed discrepancy on two points") {
  // f predicts class 0 everywhere. g1 agrees strongly on x0 and disagrees on x1.
  const ScoringTable f(2, 2, {1.0, 0.0, 1.0, 0.0});
  const ScoringTable g1(2, 2, {2.0, 0.0, 0.0, 2.0});
  const FiniteClass cls({f, g1});
  const DiscreteDomain a = point_mass(2, 0, 0);
  const DiscreteDomain b = point_mass(2, 1, 0);
  const double rho = 0.5;
  // disp_a(g1) = 0, disp_b(g1) = 1; disp(f) = 0 everywhere (margin 0.5 = rho).
  CHECK(exact_disparity(b, g1, f, rho) == 1.0);
  CHECK(exact_disparity(a, g1, f, rho) == 0.0);
  CHECK(exact_mdd(cls, f, a, b, rho) == 1.0);
  CHECK(exact_mdd(cls, f, b, a, rho) == 0.0);
  CHECK(exact_mdd(cls, f, a, a, rho) == 0.0);
  CHECK(exact_margin_error(a, f, rho) == 0.0);
  CHECK(zero_one_error(DiscreteDomain(2, {{0, 1}, {1, 0}}, {0.3, 0.7}), f) == doctest::Approx(0.3));
}

TEST_CASE("exact quantities agree with a brute-force oracle on random instances") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    CAPTURE(seed);
    const OracleInstance inst = random_instance(seed);
    for (const auto& a : inst.sources) {
      CHECK(exact_mdd(inst.cls, inst.f, a, inst.unseen, inst.rho) ==
            doctest::Approx(oracle_mdd(inst.cls, inst.f, a, inst.unseen, inst.rho)).epsilon(1e-12));
      CHECK(exact_mdd(inst.cls, inst.f, a, a, inst.rho) == doctest::Approx(0.0));
    }
  }
}

TEST_CASE("simplex grid enumerates every composition") {
  const auto g = simplex_grid(3, 4);
  CHECK(g.size() == 15);  // C(6, 2)
  CHECK(g.front().values() == std::vector<double>{0.0, 0.0, 1.0});
  CHECK(g.back().values() == std::vector<double>{1.0, 0.0, 0.0});
  std::set<std::vector<double>> unique;
  for (const auto& w : g) unique.insert(w.values());
  CHECK(unique.size() == g.size());
  CHECK(simplex_grid(2, 1).size() == 2);
  CHECK_THROWS_AS(simplex_grid(0, 3), ContractError);
  CHECK(default_grid_resolution(3) == 4);
  CHECK(default_grid_resolution(4) == 2);
}

TEST_CASE("hull projection picks the source that matches the unseen domain") {
  const ScoringTable f(2, 2, {1.0, 0.0, 1.0, 0.0});
  const ScoringTable g1(2, 2, {2.0, 0.0, 0.0, 2.0});
  const FiniteClass cls({f, g1});
  const std::vector<DiscreteDomain> sources{point_mass(2, 0, 0), point_mass(2, 1, 0)};
  const HullProjection p = hull_projection(cls, f, point_mass(2, 1, 0), sources, 4, 0.5);
  CHECK(p.pi.values() == std::vector<double>{0.0, 1.0});
  CHECK(p.gamma == 0.0);
  CHECK(epsilon_max_pairwise(cls, f, sources, 0.5) == 1.0);
}

TEST_CASE("ideal loss is a minimum over the class") {
  const ScoringTable right(2, 2, {1.0, 0.0, 0.0, 1.0});
  const ScoringTable wrong(2, 2, {0.0, 1.0, 1.0, 0.0});
  const FiniteClass cls({wrong, right});
  const std::vector<DiscreteDomain> sources{point_mass(2, 0, 0), point_mass(2, 1, 1)};
  CHECK(ideal_loss_bar_lambda(cls, SimplexWeights::uniform(2), sources, point_mass(2, 0, 0), 0.5) == 0.0);
  CHECK(ideal_loss_bar_lambda(cls, SimplexWeights::uniform(2), sources, point_mass(2, 0, 1), 0.5) ==
        doctest::Approx(1.0));
}

TEST_CASE("every inequality holds across the default random suite") {
  const auto reports = run_theory_suite(SuiteOptions{});
  CHECK(reports.size() == 800);
  std::set<std::string> names;
  for (const auto& r : reports) {
    names.insert(r.check);
    CHECK_MESSAGE(!r.violated, format_report_line(r));
  }
  CHECK(names == std::set<std::string>{"mixture_transfer", "hull_mdd", "mixture_bound", "unseen_bound"});
}

TEST_CASE("a negative offset on the right-hand side is detected") {
  SuiteOptions o;
  o.instances = 5;
  o.check.rhs_offset = -1.0;
  const auto reports = run_theory_suite(o);
  CHECK(std::any_of(reports.begin(), reports.end(), [](const CheckReport& r) { return r.violated; }));
}

TEST_CASE("random instances are reproducible and within limits") {
  const OracleInstance a = random_instance(7), b = random_instance(7);
  CHECK(a.sources == b.sources);
  CHECK(a.f.table() == b.f.table());
  for (std::uint64_t s = 0; s < 50; ++s) {
    const OracleInstance i = random_instance(s);
    CHECK(i.universe <= 6);
    CHECK(i.cls.size() <= 30);
    CHECK(i.sources.size() >= 2);
    CHECK(i.sources.size() <= 3);
    CHECK((i.num_classes == 2 || i.num_classes == 3));
  }
}

TEST_CASE("report lines round-trip reals") {
  CheckReport r{"mixture_transfer", 9, 0.1, 1.0 / 3.0, 1.0 / 3.0 - 0.1, false};
  CHECK(report_header() == "check_name,instance_seed,lhs,rhs,slack,violated");
  const std::string line = format_report_line(r);
  CHECK(line.rfind("mixture_transfer,9,0.10000000000000001,", 0) == 0);
  CHECK(line.back() == '0');
}
