#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "macstab/analysis.hpp"
#include "macstab/errors.hpp"

using namespace macstab;

namespace {

const double kLn15 = 0.4054651081081644;
const double kLn125 = 0.22314355131420976;
const double kS = 7.600902459542082;

SystemParams benchmark(int k) {
  return SystemParams::from_snr(1.0, 1.0, 1.0, k, {1.0},
                                {ServiceClass::from_alphabet(1e-3, 2.0)});
}

SystemState state_of(std::vector<double> residuals, std::size_t j = 0) {
  SystemState s;
  for (double x : residuals) {
    Message m;
    m.id = s.messages.size();
    m.cls = {0, j};
    m.residual = x;
    s.messages.push_back(m);
  }
  return s;
}

RateVector rate(std::vector<double> m) { return RateVector{std::move(m), {}}; }

RunResult simulate(int k, ArrivalSpec spec, std::int64_t horizon, std::uint64_t seed,
                   const SlotObserver& obs = {}) {
  SimConfig c{benchmark(k)};
  c.arrivals.classes = {spec};
  c.horizon = horizon;
  c.seed = seed;
  return run(c, obs);
}

}  // namespace

TEST_CASE("c functionals") {
  const auto p1 = benchmark(1);
  CHECK(c_lemma1(SystemState{}, p1) == 1.0);
  CHECK(c_lemma1(state_of({kS}), p1) == 20.0);
  CHECK(c_lemma1(state_of({kS, kS}), p1) == 39.0);

  const auto p2 = benchmark(2);
  CHECK(c_lemma2(SystemState{}, p2) == 1.0);
  CHECK(c_lemma2(state_of({1.0}), p2) == doctest::Approx(1 + 1 + kLn125).epsilon(1e-15));
  CHECK(c_lemma2(state_of({1.0, 2.0}), p2) ==
        doctest::Approx(1 + 3 + 2 * kLn125).epsilon(1e-15));
  CHECK_THROWS_AS(c_lemma2(SystemState{}, p1), DomainError);
}

TEST_CASE("property: c functionals are additive less the shared one") {
  const auto p = benchmark(3);
  Rng rng(8, 0);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> a, b;
    for (std::size_t i = rng.below(6); i > 0; --i) a.push_back(0.01 + 8 * rng.uniform());
    for (std::size_t i = rng.below(6); i > 0; --i) b.push_back(0.01 + 8 * rng.uniform());
    auto ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    CHECK(c_lemma1(state_of(ab), p) ==
          c_lemma1(state_of(a), p) + c_lemma1(state_of(b), p) - 1);
    CHECK(c_lemma2(state_of(ab), p) ==
          doctest::Approx(c_lemma2(state_of(a), p) + c_lemma2(state_of(b), p) - 1));
  }
}

TEST_CASE("lemma functionals") {
  const auto p1 = benchmark(1);
  // Denominator 2 (K - 0) = 2 and c = 20.
  CHECK(lyapunov_v(state_of({kS}), p1, rate({0.0}), Lemma1{}) == doctest::Approx(200.0));
  CHECK(lyapunov_v(SystemState{}, p1, rate({0.05}), Lemma1{}) ==
        doctest::Approx(1.0 / (2 * 0.05)));
  try {
    lyapunov_v(SystemState{}, p1, rate({0.06}), Lemma1{});
    FAIL("expected a domain error");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("pr3") != std::string::npos);
  }

  const auto p2 = benchmark(2);
  // phi-underbar = 2 ln 1.25; zero rate leaves it as the margin.
  CHECK(lyapunov_v(state_of({1.0}), p2, rate({0.0}), Lemma2{}) ==
        doctest::Approx(std::pow(2 + kLn125, 2) / (2 * 2 * kLn125)));
  try {
    lyapunov_v(SystemState{}, p2, rate({0.1}), Lemma2{});
    FAIL("expected a domain error");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("pr4") != std::string::npos);
  }
  CHECK_THROWS_AS(lyapunov_v(SystemState{}, p1, rate({0.0}), Lemma2{}), DomainError);
}

TEST_CASE("subclass functional") {
  const auto p = benchmark(2);
  StateIndependentPolicy pol;
  pol.measure.atoms = {{Schedule{{1}}, 0.5}, {Schedule{{2}}, 0.5}};
  auto st = state_of({kS});
  st.messages[0].assigned = 0;
  // EA = 0.02 splits evenly: EA_{1,s=1} = 0.01.
  const double v = lyapunov_v(st, p, rate({0.02}), OmegaKSubclass{}, &pol);
  CHECK(v == doctest::Approx(361 * kLn15 / 0.62).epsilon(1e-12));
  CHECK(lyapunov_v(SystemState{}, p, rate({0.02}), OmegaKSubclass{}, &pol) == 0.0);

  // 0.06 / 2 exceeds the s = 1 bound 0.5 / 19.
  try {
    lyapunov_v(SystemState{}, p, rate({0.06}), OmegaKSubclass{}, &pol);
    FAIL("expected a domain error");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("subclass") != std::string::npos);
  }
  CHECK_THROWS_AS(lyapunov_v(st, p, rate({0.02}), OmegaKSubclass{}), DomainError);
}

TEST_CASE("theta-geometric functionals") {
  const auto p = benchmark(2);
  for (double th : {0.1, 0.5, 0.9})
    CHECK(lyapunov_v(SystemState{}, p, rate({0.0}), ThetaGeometric{th}) ==
          doctest::Approx(1 - th));

  const auto st = state_of({1.5, 2.5, 0.3});
  const auto small = state_of({0.1});  // c = 2, so 1 - theta^c stays below 1 in floating point
  double prev = 1.0;
  for (double th = 0.05; th < 1.0; th += 0.05) {
    const double v = lyapunov_v(small, p, rate({0.0}), ThetaGeometric{th});
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(v <= prev);
    CHECK(lyapunov_v(st, p, rate({0.0}), ThetaGeometric{th}) >= v);
    prev = v;
  }

  CHECK(r_subset(st, std::vector<std::size_t>{0}) == doctest::Approx(4.3));
  ThetaGeometric rb{0.5, ThetaGeometric::Exponent::r_subset, {0}};
  CHECK(lyapunov_v(st, p, rate({0.0}), rb) == doctest::Approx(1 - std::pow(0.5, 4.3)));
  CHECK(r_ceil(state_of({kS}), kLn125) == doctest::Approx(35 * kLn125));

  CHECK_THROWS_AS(lyapunov_v(st, p, rate({0.0}), ThetaGeometric{1.0}), DomainError);
  CHECK_THROWS_AS(lyapunov_v(st, p, rate({0.0}), ThetaGeometric{0.0}), DomainError);
  const SystemParams two(1.0, 1.0, 1.0, 2, {1.0, 2.0},
                         {ServiceClass::from_alphabet(1e-3, 2.0)});
  ThetaGeometric rc{0.5, ThetaGeometric::Exponent::r_ceil, {}};
  CHECK_THROWS_AS(lyapunov_v(SystemState{}, two, rate({0.0, 0.0}), rc), DomainError);
}

TEST_CASE("empirical drift") {
  const std::vector<double> line{0, 2, 4, 6, 8};
  const auto d = empirical_drift(line, {}, "f");
  CHECK(d.mean_drift == 2.0);
  CHECK(d.standard_error == 0.0);
  CHECK(d.samples == 4);

  DriftFilter none;
  none.min_value = 100.0;
  const auto empty = empirical_drift(line, none, "f");
  CHECK(empty.samples == 0);
  CHECK_FALSE(empty.conclusive());

  const auto zero = simulate(1, ArrivalSpec::bernoulli(0.0), 1000, 1);
  CHECK(empirical_drift(zero.trace, {}).mean_drift <= 0.0);
}

TEST_CASE("drift signs at the K = 1 benchmark") {
  const double thr = 1.0 / 19;
  const auto p = benchmark(1);

  std::vector<double> c_series;
  const LyapunovEvaluator eval(p, rate({0.9 * thr}));
  simulate(1, ArrivalSpec::bernoulli(0.9 * thr), 200000, 5,
           record_functional(c_series, [&](const SystemState& s) { return eval.c_lemma1(s); }));
  DriftFilter busy;
  busy.min_value = 5.0;
  const auto dc = empirical_drift(c_series, busy, "c_lemma1");
  // One quantum served per busy slot against 19 * 0.9 / 19 arriving.
  CHECK(dc.mean_drift < 0.0);
  CHECK(dc.mean_drift == doctest::Approx(-0.1).epsilon(0.15));

  const auto over = simulate(1, ArrivalSpec::bernoulli(1.1 * thr), 200000, 5);
  const auto dn = empirical_drift(over.trace, {});
  CHECK(dn.mean_drift > 0.0);
  CHECK(dn.mean_drift == doctest::Approx(1.1 * thr - thr).epsilon(0.3));
}

TEST_CASE("stability verdict on constructed traces") {
  VerdictOptions o;
  o.min_length = 1000;
  std::vector<std::int32_t> zeros(2000, 0);
  CHECK(stability_verdict(zeros, 0.1, o).verdict == Verdict::stable);

  std::vector<std::int32_t> line(20000);
  for (std::size_t i = 0; i < line.size(); ++i)
    line[i] = static_cast<std::int32_t>(0.01 * static_cast<double>(i + 1));
  const auto up = stability_verdict(line, 0.1, o);
  CHECK(up.verdict == Verdict::unstable);
  CHECK(up.slope == doctest::Approx(0.01).epsilon(0.01));
  CHECK(up.ci_low > 0.0);

  std::vector<std::int32_t> short_trace(10, 0);
  CHECK(stability_verdict(short_trace, 0.1, o).verdict == Verdict::inconclusive);

  // A flat but huge backlog is not called stable.
  std::vector<std::int32_t> high(2000, 50000);
  CHECK(stability_verdict(high, 0.1, o).verdict == Verdict::inconclusive);

  // Same input, same verdict.
  const auto again = stability_verdict(line, 0.1, o);
  CHECK(again.slope == up.slope);
  CHECK(again.ci_low == up.ci_low);
}

TEST_CASE("property: verdicts respect their definitions") {
  Rng rng(12, 0);
  VerdictOptions o;
  o.min_length = 1000;
  o.max_backlog = 200;
  for (int t = 0; t < 300; ++t) {
    std::vector<std::int32_t> n(4000);
    double x = 0.0;
    const double drift = (rng.uniform() - 0.5) * 0.05;
    for (auto& v : n) {
      x = std::max(0.0, x + drift + (rng.uniform() - 0.5) * 2);
      v = static_cast<std::int32_t>(x);
    }
    const auto v = stability_verdict(n, 0.1, o);
    CHECK(v.ci_low <= v.slope);
    CHECK(v.slope <= v.ci_high);
    if (v.verdict == Verdict::unstable) {
      CHECK(v.ci_low > 0.0);
      CHECK(v.slope > v.slope_threshold);
    }
    if (v.verdict == Verdict::stable) {
      CHECK(v.ci_low <= 0.0);
      CHECK(v.ci_high >= 0.0);
      CHECK(v.window_max_backlog < 200);
    }
  }
}

TEST_CASE("deterministic examples get the hand verdicts") {
  const auto ok = simulate(1, ArrivalSpec::deterministic(1, 19), 200000, 1);
  CHECK(stability_verdict(ok.trace, rate({1.0 / 19})).verdict == Verdict::stable);
  const auto bad = simulate(1, ArrivalSpec::deterministic(1, 18), 200000, 1);
  const auto v = stability_verdict(bad.trace, rate({1.0 / 18}));
  CHECK(v.verdict == Verdict::unstable);
  CHECK(v.slope == doctest::Approx(1.0 / 18 - 1.0 / 19).epsilon(0.02));
}
