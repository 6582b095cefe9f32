#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "macstab/core_model.hpp"
#include "macstab/errors.hpp"
#include "macstab/rng.hpp"

using namespace macstab;

namespace {

const double kLn15 = 0.4054651081081644;
const double kLn125 = 0.22314355131420976;
const double kS = 7.600902459542082;  // Pe = 1e-3, M = 2, rho = 1

SystemParams single(int k, double snr = 1.0) {
  return SystemParams::from_snr(1.0, 1.0, 1.0, k, {snr},
                                {ServiceClass::from_alphabet(1e-3, 2.0)});
}

// Every vector of `dims` non-negative ints with sum <= k, by brute force.
void brute(std::size_t dims, int k, std::vector<int>& cur,
           std::vector<std::vector<int>>& out) {
  if (cur.size() == dims) {
    out.push_back(cur);
    return;
  }
  int used = 0;
  for (int c : cur) used += c;
  for (int c = 0; c + used <= k; ++c) {
    cur.push_back(c);
    brute(dims, k, cur, out);
    cur.pop_back();
  }
}

double choose(int n, int r) {
  double c = 1.0;
  for (int i = 1; i <= r; ++i) c = c * (n - r + i) / i;
  return std::round(c);
}

}  // namespace

TEST_CASE("service requirement and quantum") {
  const auto p = single(1);
  CHECK(service_requirement(p, 0) == doctest::Approx(kS).epsilon(1e-15));
  CHECK(p.requirement(0) == doctest::Approx(kS).epsilon(1e-15));
  CHECK(e0_quantum(0.5, 2.0, 0.5) == doctest::Approx(0.6496414920651304).epsilon(1e-14));
  CHECK(e0_quantum(1.0, 1.0, 2.0) == doctest::Approx(kLn125).epsilon(1e-14));
  CHECK_THROWS_AS(e0_quantum(1.0, 1.0, 0.0), DomainError);

  // rho -> 0 with ln M fixed leaves only -ln Pe.
  const SystemParams tiny(1e-9, 1.0, 1.0, 1, {1.0},
                          {ServiceClass::from_alphabet(1e-3, 2.0)});
  CHECK(tiny.requirement(0) == doctest::Approx(-std::log(1e-3)).epsilon(1e-8));
}

TEST_CASE("parameter validation") {
  const std::vector<ServiceClass> c{ServiceClass::from_alphabet(1e-3, 2.0)};
  CHECK_THROWS_AS(SystemParams(0.0, 1, 1, 1, {1.0}, c), DomainError);
  CHECK_THROWS_AS(SystemParams(1.5, 1, 1, 1, {1.0}, c), DomainError);
  CHECK_THROWS_AS(SystemParams(1.0, 0, 1, 1, {1.0}, c), DomainError);
  CHECK_THROWS_AS(SystemParams(1.0, 1, 1, 0, {1.0}, c), DomainError);
  CHECK_THROWS_AS(SystemParams(1.0, 1, 1, 1, {}, c), DomainError);
  CHECK_THROWS_AS(SystemParams(1.0, 1, 1, 1, {-1.0}, c), DomainError);
  CHECK_THROWS_AS(SystemParams(1.0, 1, 1, 1, {1.0}, {}), DomainError);
  CHECK_THROWS_AS(SystemParams(1.0, 1, 1, 1, {1.0},
                               {ServiceClass::from_alphabet(1.0, 2.0)}),
                  DomainError);
  CHECK_THROWS_AS(SystemParams(1.0, 1, 1, 1, {1.0},
                               {ServiceClass::from_alphabet(1e-3, 1.0)}),
                  DomainError);
  // Duplicate powers are allowed.
  CHECK_NOTHROW(SystemParams(1.0, 1, 1, 2, {1.0, 1.0}, c));
}

TEST_CASE("flat indexing is row-major in (l, j)") {
  const SystemParams p(1.0, 1, 1, 2, {1.0, 2.0, 3.0},
                       {ServiceClass::from_alphabet(1e-3, 2.0),
                        ServiceClass::from_alphabet(1e-2, 4.0)});
  CHECK(p.num_classes() == 6);
  CHECK(p.flat_index({1, 2}) == 5);
  CHECK(p.flat_index({0, 1}) == 1);
  for (std::size_t f = 0; f < 6; ++f) CHECK(p.flat_index(p.class_of(f)) == f);
  CHECK_THROWS_AS(p.class_of(6), DomainError);
}

TEST_CASE("phi on the K = 2 equal-power system") {
  const auto p = single(2);
  CHECK(phi(p, Schedule{{1}}, 0) == doctest::Approx(kLn15).epsilon(1e-15));
  CHECK(phi(p, Schedule{{2}}, 0) == doctest::Approx(kLn125).epsilon(1e-15));
  CHECK(phi(p, Schedule{{0}}, 0) == 0.0);
  CHECK(effective_noise(p, Schedule{{2}}, 0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(effective_noise(p, Schedule{{0}}, 0), DomainError);
}

TEST_CASE("quanta_needed and ceil_to_quantum") {
  CHECK(quanta_needed(kS, kLn15) == 19);
  CHECK(quanta_needed(kS, kLn125) == 35);
  CHECK(quanta_needed(3 * 0.1, 0.1) == 3);  // 0.30000000000000004 / 0.1
  CHECK(quanta_needed(1.0, 1.0) == 1);
  CHECK(ceil_to_quantum(kS, kLn15) == doctest::Approx(19 * kLn15));
  CHECK_THROWS_AS(ceil_to_quantum(0.0, 1.0), DomainError);
  CHECK_THROWS_AS(ceil_to_quantum(1.0, 0.0), DomainError);

  Rng rng(11, 0);
  for (int i = 0; i < 2000; ++i) {
    const double x = 0.01 + 50 * rng.uniform();
    const double q = 0.001 + 2 * rng.uniform();
    const double c = ceil_to_quantum(x, q);
    CHECK(c >= x * (1 - 1e-12));
    CHECK(c < x + q);
    CHECK(ceil_to_quantum(c, q) == doctest::Approx(c));
  }
}

TEST_CASE("phi extrema on a two-power instance") {
  // P = (1, 2), N0 W = 1, rho = 1, K = 2; hand-computed over exact-K schedules.
  const SystemParams p(1.0, 1.0, 1.0, 2, {1.0, 2.0},
                       {ServiceClass::from_alphabet(1e-3, 2.0)});
  const auto e = phi_extrema(p);
  CHECK(e.min_per_power[0] == doctest::Approx(0.1541506798272583).epsilon(1e-14));
  CHECK(e.max_per_power[0] == doctest::Approx(kLn125).epsilon(1e-14));
  CHECK(e.min_per_power[1] == doctest::Approx(0.2876820724517809).epsilon(1e-14));
  CHECK(e.max_per_power[1] == doctest::Approx(kLn15).epsilon(1e-14));
  CHECK(e.min_total == doctest::Approx(2 * kLn125).epsilon(1e-14));

  CHECK_THROWS_AS(phi_extrema(p, 2.0), CapacityError);
}

TEST_CASE("equal-power phi at K = 1e4 approaches the limit") {
  const auto p = single(10000);
  const auto e = phi_extrema(p);
  CHECK(10000 * e.min_per_power[0] ==
        doctest::Approx(0.49998750041665104).epsilon(1e-12));
}

TEST_CASE("schedule counts match brute force and closed forms") {
  for (std::size_t dims = 1; dims <= 4; ++dims) {
    for (int k = 0; k <= 6; ++k) {
      std::vector<std::vector<int>> all;
      std::vector<int> cur;
      brute(dims, k, cur, all);
      CHECK(static_cast<double>(all.size()) == choose(k + static_cast<int>(dims), k));
      CHECK(schedule_count(dims, k, EnumMode::at_most) == all.size());

      std::set<std::vector<int>> seen;
      ScheduleStream at_most(dims, k, EnumMode::at_most);
      Schedule s;
      while (at_most.next(s)) {
        CHECK(s.total() <= k);
        CHECK(seen.insert(s.counts).second);
      }
      CHECK(seen.size() == all.size());

      std::size_t exact = 0;
      for (const auto& v : all) {
        int t = 0;
        for (int c : v) t += c;
        if (t == k) ++exact;
      }
      std::size_t streamed = 0;
      ScheduleStream ex(dims, k, EnumMode::exact);
      while (ex.next(s)) {
        CHECK(s.total() == k);
        ++streamed;
      }
      CHECK(streamed == exact);
      CHECK(schedule_count(dims, k, EnumMode::exact) == exact);
    }
  }
}

TEST_CASE("exact_with_class counts for every L, J split") {
  for (std::size_t L = 1; L <= 2; ++L)
    for (std::size_t J = 1; J <= 2; ++J)
      for (int k = 1; k <= 6; ++k)
        for (std::size_t j = 0; j < J; ++j) {
          std::vector<std::vector<int>> all;
          std::vector<int> cur;
          brute(L * J, k, cur, all);
          std::size_t expect = 0;
          for (const auto& v : all) {
            int t = 0, col = 0;
            for (std::size_t f = 0; f < v.size(); ++f) {
              t += v[f];
              if (f % J == j) col += v[f];
            }
            if (t == k && col > 0) ++expect;
          }
          ScheduleStream st(L * J, k, EnumMode::exact_with_class, J, j);
          Schedule s;
          std::size_t got = 0;
          while (st.next(s)) ++got;
          CHECK(got == expect);
          CHECK(schedule_count(L * J, k, EnumMode::exact_with_class, L) == expect);
        }
}

TEST_CASE("counts beyond the cap are refused") {
  CHECK(schedule_count(4, 10000, EnumMode::at_most) > kDefaultScheduleCap);
  CHECK_THROWS_AS(require_within_cap(2e7, kDefaultScheduleCap, "test"), CapacityError);
  try {
    require_within_cap(2e7, 1e7, "test");
  } catch (const CapacityError& e) {
    CHECK(e.count() == 2e7);
  }
}

TEST_CASE("property: more interferers never raise a quantum") {
  Rng rng(5, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t J = 1 + rng.below(3);
    std::vector<double> powers;
    for (std::size_t j = 0; j < J; ++j) powers.push_back(0.05 + 20 * rng.uniform());
    const double rho = 0.05 + 0.95 * rng.uniform();
    const SystemParams p(rho, 1.0, 1.0, 6, powers,
                         {ServiceClass::from_alphabet(1e-3, 2.0)});
    std::vector<int> cols(J);
    for (auto& c : cols) c = static_cast<int>(rng.below(3));
    const std::size_t j = rng.below(J);
    if (cols[j] == 0) cols[j] = 1;
    const double base = phi_from_columns(p, cols, j);

    // Alone is best.
    std::vector<int> alone(J, 0);
    alone[j] = 1;
    CHECK(phi_from_columns(p, alone, j) >= base);

    auto more = cols;
    ++more[rng.below(J)];
    CHECK(phi_from_columns(p, more, j) <= base);

    // phi depends on the schedule only through its power columns.
    Schedule s{cols};
    CHECK(phi(p, s, j) == base);
  }
}
