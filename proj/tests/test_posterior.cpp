#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "nplcm/error.hpp"
#include "nplcm/posterior.hpp"
#include "nplcm/random.hpp"

using namespace nplcm;
using namespace fixtures;

namespace {

Eigen::VectorXd white(Rng& rng, int n, double shift = 0.0) {
  Eigen::VectorXd v(n);
  for (int t = 0; t < n; ++t) v(t) = shift + rng.normal();
  return v;
}

Eigen::VectorXd ar1(Rng& rng, int n, double phi) {
  Eigen::VectorXd v(n);
  double x = rng.normal() / std::sqrt(1 - phi * phi);
  for (int t = 0; t < n; ++t) {
    x = phi * x + rng.normal();
    v(t) = x;
  }
  return v;
}

// Split R-hat written out with plain loops.
double rhat_oracle(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<std::vector<double>> parts;
  for (const auto& c : chains) {
    const int h = static_cast<int>(c.size()) / 2;
    parts.emplace_back(c.data(), c.data() + h);
    parts.emplace_back(c.data() + c.size() - h, c.data() + c.size());
  }
  const double n = parts[0].size(), m = parts.size();
  double grand = 0, W = 0;
  std::vector<double> means;
  for (const auto& p : parts) {
    double s = 0;
    for (double v : p) s += v;
    means.push_back(s / n);
    grand += s / n / m;
  }
  double B = 0;
  for (std::size_t c = 0; c < parts.size(); ++c) {
    double ss = 0;
    for (double v : parts[c]) ss += (v - means[c]) * (v - means[c]);
    W += ss / (n - 1) / m;
    B += (means[c] - grand) * (means[c] - grand) * n / (m - 1);
  }
  return std::sqrt(((n - 1) / n * W + B / n) / W);
}

ChainOutput chain(std::vector<std::string> names, Eigen::MatrixXd draws) {
  ChainOutput c;
  c.names = std::move(names);
  c.draws = std::move(draws);
  return c;
}

PosteriorRun two_cause_run() {
  PosteriorRun run;
  run.spec.cause_list = CauseList({"A", "B"});
  run.data.y = {1, 1, 0};
  run.data.mbs.push_back(brs("MBS1", {"A", "B"}, {{1, 0}, {0, 1}, {0, 0}}));
  Eigen::MatrixXd d1(3, 2), d2(2, 2);
  d1 << 0.1, 0.9, 0.2, 0.8, 0.3, 0.7;
  d2 << 0.4, 0.6, 0.5, 0.5;
  run.chains.push_back(chain({"pEti[1]", "pEti[2]"}, d1));
  run.chains.push_back(chain({"pEti[1]", "pEti[2]"}, d2));
  return run;
}

}  // namespace

TEST_CASE("summaries use type 7 quantiles") {
  std::vector<double> v(101);
  std::iota(v.begin(), v.end(), 1.0);
  std::reverse(v.begin(), v.end());
  const auto r = summarize_draws("x", v);
  CHECK(r.mean == doctest::Approx(51.0));
  CHECK(r.q025 == doctest::Approx(3.5));
  CHECK(r.q975 == doctest::Approx(98.5));
  CHECK(r.sd == doctest::Approx(std::sqrt(101.0 * 102.0 / 12.0)));
  CHECK_THROWS_AS(summarize_draws("x", {}), ValidationError);
}

TEST_CASE("pooled CSCF summaries ignore chain order") {
  auto run = two_cause_run();
  const auto a = summarize_cscf(run);
  CHECK_FALSE(a.regression);
  CHECK(a.overall.rows[0].label == "A");
  CHECK(a.overall.rows[0].mean == doctest::Approx(0.3));
  std::swap(run.chains[0], run.chains[1]);
  const auto b = summarize_cscf(run);
  for (int l = 0; l < 2; ++l) {
    CHECK(a.overall.rows[l].mean == b.overall.rows[l].mean);
    CHECK(a.overall.rows[l].sd == b.overall.rows[l].sd);
    CHECK(a.overall.rows[l].q025 == b.overall.rows[l].q025);
  }
  CHECK_THROWS_AS(summarize_cscf(run, std::vector<double>{0.5, 0.5}), ValidationError);
}

TEST_CASE("stratified CSCF summaries and marginal weights") {
  PosteriorRun run;
  run.spec.cause_list = CauseList({"A", "B"});
  run.spec.eti_formula = "~ -1 + as.factor(SITE)";
  run.data.y = {1, 1, 1, 1, 0};
  run.data.x.add_column("SITE", std::vector<double>{10, 2, 2, 2, 10});
  // design columns: SITE=2, SITE=10
  Eigen::MatrixXd d(1, 4);
  const double l1 = std::log(3.0);
  d << 0.0, l1, 0.0, 0.0;  // etiCoef[1][1], [1][2], [2][1], [2][2]
  run.chains.push_back(chain({"etiCoef[1][1]", "etiCoef[1][2]", "etiCoef[2][1]", "etiCoef[2][2]"}, d));

  const auto s = summarize_cscf(run);
  CHECK(s.regression);
  REQUIRE(s.strata.size() == 2);
  CHECK(s.strata[0].stratum == "SITE=2");
  CHECK(s.strata[1].stratum == "SITE=10");
  CHECK(s.strata[0].weight == doctest::Approx(0.75));
  CHECK(s.strata[0].rows[0].mean == doctest::Approx(0.5));
  CHECK(s.strata[1].rows[0].mean == doctest::Approx(0.75));
  CHECK(s.overall.stratum == "marginal");
  CHECK(s.overall.rows[0].mean == doctest::Approx(0.75 * 0.5 + 0.25 * 0.75));

  const auto e = summarize_cscf(run, std::vector<double>{0.5, 0.5});
  CHECK(e.overall.rows[0].mean == doctest::Approx(0.625));
  CHECK_THROWS_AS(summarize_cscf(run, std::vector<double>{0.6, 0.6}), ValidationError);
  CHECK_THROWS_AS(summarize_cscf(run, std::vector<double>{1.0}), ValidationError);
  CHECK_THROWS_AS(summarize_cscf(run, std::vector<double>{1.5, -0.5}), ValidationError);
}

TEST_CASE("individual predictions are class frequencies per case") {
  auto run = two_cause_run();
  CHECK_THROWS_AS(individual_predictions(run), ValidationError);
  run.chains[0].class_draws = {{1, 2}, {1, 1}, {2, 2}};
  run.chains[1].class_draws = {{1, 2}};
  const auto p = individual_predictions(run);
  CHECK(p.subjects == std::vector<std::size_t>{0, 1});
  CHECK(p.probs(0, 0) == doctest::Approx(0.75));
  CHECK(p.probs(1, 1) == doctest::Approx(0.75));
  for (Eigen::Index i = 0; i < 2; ++i) CHECK(p.probs.row(i).sum() == doctest::Approx(1.0));
}

TEST_CASE("split R-hat matches a direct computation") {
  Rng rng(1);
  std::vector<Eigen::VectorXd> c{white(rng, 400), white(rng, 400), white(rng, 400, 0.3)};
  CHECK(split_rhat(c) == doctest::Approx(rhat_oracle(c)).epsilon(1e-12));
  std::vector<Eigen::VectorXd> good{white(rng, 1000), white(rng, 1000), white(rng, 1000)};
  CHECK(split_rhat(good) < 1.01);
  std::vector<Eigen::VectorXd> bad{white(rng, 1000), white(rng, 1000, 3.0)};
  CHECK(split_rhat(bad) > 1.5);
  Eigen::VectorXd trend(400);
  for (int t = 0; t < 400; ++t) trend(t) = t / 100.0 + 0.1 * rng.normal();
  CHECK(split_rhat({trend}) > 1.5);  // a single trending chain is caught by splitting
  CHECK_THROWS_AS(split_rhat({Eigen::VectorXd::Zero(3)}), ValidationError);
}

TEST_CASE("ESS is near the draw count for white noise and shrinks under autocorrelation") {
  Rng rng(2);
  const int n = 4000;
  std::vector<Eigen::VectorXd> w{white(rng, n), white(rng, n), white(rng, n), white(rng, n)};
  CHECK(effective_sample_size(w) == doctest::Approx(4.0 * n).epsilon(0.15));
  // a single AR(1) estimate is noisy near phi = 0.9; average over replicates
  for (double phi : {0.5, 0.9}) {
    const int reps = 20;
    double ratio = 0.0;
    for (int r = 0; r < reps; ++r) {
      std::vector<Eigen::VectorXd> a{ar1(rng, n, phi), ar1(rng, n, phi), ar1(rng, n, phi), ar1(rng, n, phi)};
      ratio += effective_sample_size(a) / (4.0 * n * (1 - phi) / (1 + phi)) / reps;
    }
    CAPTURE(phi);
    CHECK(ratio == doctest::Approx(1.0).epsilon(0.06));
  }
}

TEST_CASE("convergence flags stuck parameters") {
  Rng rng(3);
  PosteriorRun run;
  Eigen::MatrixXd a(200, 2), b(200, 2);
  a.col(0) = white(rng, 200);
  b.col(0) = white(rng, 200);
  a.col(1) = white(rng, 200);
  b.col(1) = white(rng, 200, 5.0);
  run.chains.push_back(chain({"x", "y"}, a));
  run.chains.push_back(chain({"x", "y"}, b));
  const auto rows = convergence(run);
  REQUIRE(rows.size() == 2);
  CHECK_FALSE(rows[0].flagged);
  CHECK(rows[1].flagged);
  run.chains[0].draws = a.topRows(3);
  CHECK_THROWS_AS(convergence(run), ValidationError);
}

TEST_CASE("SLORD standardizes the observed log odds ratio") {
  PosteriorRun run;
  run.data.y = {1, 1, 1, 1, 0, 0, 0, 0};
  // cases: A/B table n11=2, n10=1, n01=0, n00=1 -> has an empty cell; C is constant among cases
  run.data.mbs.push_back(brs("MBS1", {"A", "B", "C"},
                             {{1, 1, 1}, {1, 1, 1}, {1, 0, 1}, {0, 0, 1}, {1, 0, 0}, {0, 1, 1}, {1, 1, 0}, {0, 0, 1}}));
  ChainOutput ch;
  SlicePpd sp;
  sp.slice = "MBS1";
  sp.pairs = {{0, 1}, {0, 2}, {1, 2}};
  for (auto& m : sp.lor) {
    m.resize(3, 3);
    m << 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 2.0, std::nan("");
  }
  ch.ppd.push_back(sp);
  run.chains.push_back(ch);

  const auto t = ppc_slord(run, "MBS1");
  const double case_obs = std::log((2.5 * 1.5) / (1.5 * 0.5));
  const double ctrl_obs = std::log((1.0 * 1.0) / (1.0 * 1.0));
  REQUIRE(t.rows.size() >= 2);
  const auto& ctrl_ab = t.rows[0];
  CHECK(ctrl_ab.group == "control");
  CHECK(ctrl_ab.observed == doctest::Approx(ctrl_obs));
  CHECK(ctrl_ab.slord == doctest::Approx((ctrl_obs - 1.0) / 1.0));
  bool seen_case = false;
  for (const auto& r : t.rows)
    if (r.group == "case" && r.item_a == "A" && r.item_b == "B") {
      seen_case = true;
      CHECK(r.observed == doctest::Approx(case_obs));
      CHECK(r.slord == doctest::Approx(case_obs - 1.0));
    } else if (r.item_b == "C" && r.group == "control") {
      CHECK(r.rep_draws == (r.item_a == "A" ? 3u : 2u));
    }
  CHECK(seen_case);
  CHECK(std::find(t.omitted.begin(), t.omitted.end(), "case:A:C") != t.omitted.end());
  CHECK(std::find(t.omitted.begin(), t.omitted.end(), "case:B:C") != t.omitted.end());
  CHECK_THROWS_AS(ppc_slord(two_cause_run(), "MBS1"), ValidationError);
}

TEST_CASE("top patterns compare observed and replicated frequencies") {
  PosteriorRun run;
  run.data.y = {1, 1, 1, 1, 1, 0, 0};
  run.data.mbs.push_back(brs("MBS1", {"A", "B"}, {{1, 0}, {1, 0}, {1, 0}, {0, 1}, {-1, 1}, {0, 0}, {0, 0}}));
  ChainOutput ch;
  SlicePpd sp;
  sp.slice = "MBS1";
  for (int d = 0; d < 40; ++d) {
    sp.patterns[1].push_back({{"10", 2 + d % 3}, {"01", 1}, {"11", 1}});
    sp.patterns[0].push_back({{"00", 2}});
  }
  ch.ppd.push_back(sp);
  run.chains.push_back(ch);

  const auto t = ppc_top_patterns(run, "MBS1", 1);
  CHECK(t.incomplete[1] == 1);
  CHECK(t.incomplete[0] == 0);
  std::vector<PatternRow> cases;
  for (const auto& r : t.rows)
    if (r.group == "case") cases.push_back(r);
  REQUIRE(cases.size() == 2);
  CHECK(cases[0].pattern == "10");
  CHECK(cases[0].observed == doctest::Approx(0.75));
  CHECK(cases[1].pattern == "rest");
  CHECK(cases[1].observed == doctest::Approx(0.25));
  CHECK(cases[0].replicated.size() == 40);
  CHECK(cases[0].rep_q025 == doctest::Approx(0.5));
  CHECK(cases[0].rep_q975 == doctest::Approx(4.0 / 6));
  CHECK_FALSE(cases[0].inside);
  for (std::size_t d = 0; d < 40; ++d) CHECK(cases[0].replicated[d] + cases[1].replicated[d] == doctest::Approx(1.0));
  const auto wide = ppc_top_patterns(run, "MBS1", 5);
  CHECK_FALSE(wide.notes.empty());
  CHECK_THROWS_AS(ppc_top_patterns(run, "MBS1", 0), ValidationError);
  CHECK_THROWS_AS(ppc_top_patterns(run, "NOPE", 3), ValidationError);
}

TEST_CASE("fitted type names") {
  ValidationReport r;
  r.do_reg_fpr["MBS1"] = false;
  CHECK(fitted_type(r) == "no_reg");
  r.nested = true;
  r.do_reg_eti = true;
  r.eti_discrete = true;
  CHECK(fitted_type(r) == "reg_nest_strat");
  r.do_reg_fpr["MBS1"] = true;
  r.fpr_discrete["MBS1"] = false;
  CHECK(fitted_type(r) == "reg_nest");
  r.nested = false;
  r.do_reg_fpr["MBS1"] = false;
  CHECK(fitted_type(r) == "reg_nonest_strat");
}
