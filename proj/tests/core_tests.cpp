#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "pslosses/common.hpp"
#include "pslosses/core.hpp"

using namespace pslosses;

TEST_CASE("sparse labels validate their invariants", "[core]") {
  CHECK_NOTHROW(SparseLabels({0, 2, 5}, 6));
  CHECK_NOTHROW(SparseLabels({}, 3));
  CHECK_THROWS_AS(SparseLabels({2, 1}, 3), DimensionError);     // unsorted
  CHECK_THROWS_AS(SparseLabels({1, 1}, 3), DimensionError);     // duplicate
  CHECK_THROWS_AS(SparseLabels({0, 3}, 3), DimensionError);     // out of range
  CHECK_THROWS_AS(SparseLabels({-1}, 3), DimensionError);       // negative
  CHECK_THROWS_AS(SparseLabels({0}, 0), DimensionError);        // empty space

  const SparseLabels y({1, 4}, 6);
  CHECK(y.num_labels() == 6);
  CHECK(y.count() == 2);
  CHECK(y.contains(1));
  CHECK(y.contains(4));
  CHECK_FALSE(y.contains(0));
  CHECK_FALSE(y.empty());
  CHECK(SparseLabels({}, 6).empty());
}

TEST_CASE("from_unsorted sorts and rejects duplicates", "[core]") {
  const SparseLabels y = SparseLabels::from_unsorted({4, 1, 3}, 6);
  CHECK(y.indices() == std::vector<std::int32_t>{1, 3, 4});
  CHECK_THROWS_AS(SparseLabels::from_unsorted({2, 2}, 4), DimensionError);
}

TEST_CASE("indicator vector materializes the dense form", "[core]") {
  CHECK(indicator_vector(SparseLabels({1}, 3)) == std::vector<double>{0, 1, 0});
  CHECK(indicator_vector(SparseLabels({}, 2)) == std::vector<double>{0, 0});
  CHECK(indicator_vector(SparseLabels({0, 2}, 3)) == std::vector<double>{1, 0, 1});
}

TEST_CASE("propensities must lie in (0, 1]", "[core]") {
  CHECK_NOTHROW(Propensities({0.5, 1.0, 0.001}));
  CHECK_THROWS_AS(Propensities({0.0}), ParameterError);
  CHECK_THROWS_AS(Propensities({-0.1}), ParameterError);
  CHECK_THROWS_AS(Propensities({1.1}), ParameterError);
  CHECK_THROWS_AS(Propensities(std::vector<double>{}), DimensionError);

  const Propensities p = Propensities::uniform(4, 0.25);
  CHECK(p.size() == 4);
  for (std::int32_t j = 0; j < 4; ++j) CHECK(p[j] == 0.25);
}

TEST_CASE("apply_mask keeps everything at p = 1 and nothing spurious", "[core]") {
  Rng rng(7);
  const SparseLabels truth({0, 1, 2}, 3);
  CHECK(apply_mask(truth, Propensities::uniform(3, 1.0), rng) == truth);
  CHECK(apply_mask(SparseLabels({}, 3), Propensities::uniform(3, 0.5), rng).empty());
  CHECK_THROWS_AS(apply_mask(truth, Propensities::uniform(2, 0.5), rng), DimensionError);

  // Subset property under many seeds.
  const Propensities p({0.3, 0.8, 0.5});
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng r(seed);
    const SparseLabels kept = apply_mask(truth, p, r);
    for (const std::int32_t j : kept.indices()) CHECK(truth.contains(j));
  }

  // Deterministic under a fixed seed.
  Rng r1(42), r2(42);
  CHECK(apply_mask(truth, p, r1) == apply_mask(truth, p, r2));
}

TEST_CASE("masking retains roughly the expected count", "[core]") {
  // 10000 positives at p = 0.5: the kept count is Binomial(10000, 0.5),
  // so it stays within 5 standard deviations (= 250) of 5000.
  std::vector<std::int32_t> all(10000);
  for (std::int32_t j = 0; j < 10000; ++j) all[j] = j;
  const SparseLabels truth(all, 10000);
  Rng rng(123);
  const SparseLabels kept = apply_mask(truth, Propensities::uniform(10000, 0.5), rng);
  const double dev = std::abs(static_cast<double>(kept.count()) - 5000.0);
  CHECK(dev < 5.0 * std::sqrt(10000.0 * 0.25));
}

TEST_CASE("per-label retention frequency converges to the propensity", "[core]") {
  const int n = 100000;
  const SparseLabels truth({0, 1}, 2);
  const Propensities p({0.3, 0.85});
  Rng rng(99);
  int kept0 = 0, kept1 = 0;
  double prod = 0.0;  // for the correlation check
  for (int i = 0; i < n; ++i) {
    const SparseLabels kept = apply_mask(truth, p, rng);
    const int a = kept.contains(0) ? 1 : 0;
    const int b = kept.contains(1) ? 1 : 0;
    kept0 += a;
    kept1 += b;
    prod += a * b;
  }
  const double f0 = kept0 / static_cast<double>(n);
  const double f1 = kept1 / static_cast<double>(n);
  CHECK(std::abs(f0 - 0.3) < 4.0 * std::sqrt(0.3 * 0.7 / n));
  CHECK(std::abs(f1 - 0.85) < 4.0 * std::sqrt(0.85 * 0.15 / n));

  // Draws for distinct labels are uncorrelated.
  const double cov = prod / n - f0 * f1;
  const double corr = cov / std::sqrt(f0 * (1 - f0) * f1 * (1 - f1));
  CHECK(std::abs(corr) < 0.02);
}

TEST_CASE("seed derivation distinguishes streams", "[core]") {
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("canonical_double lands in the unit interval", "[core]") {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = canonical_double(rng);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("uniform_index covers the full range without bias", "[core]") {
  Rng rng(11);
  std::vector<int> counts(5, 0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) ++counts[uniform_index(rng, 5)];
  for (const int c : counts)
    CHECK(std::abs(c / static_cast<double>(n) - 0.2) < 4.0 * std::sqrt(0.2 * 0.8 / n));
  CHECK(uniform_index(rng, 1) == 0);
}

TEST_CASE("gaussian draws have unit scale", "[core]") {
  Rng rng(17);
  const int n = 50000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = gaussian(rng);
    sum += g;
    sq += g * g;
  }
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(sq / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("shuffle is a seeded permutation", "[core]") {
  std::vector<int> a{0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<int> b = a;
  Rng r1(3), r2(3);
  shuffle_in_place(a, r1);
  shuffle_in_place(b, r2);
  CHECK(a == b);
  std::sort(a.begin(), a.end());
  CHECK(a == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("compensated summation beats naive accumulation", "[core]") {
  KahanSum acc;
  acc.add(1.0);
  for (int i = 0; i < 10; ++i) acc.add(1e-17);
  acc.add(-1.0);
  CHECK(acc.value() == Catch::Approx(1e-16).epsilon(1e-3));
}

TEST_CASE("parallel_for computes every slot exactly once", "[core]") {
  std::vector<int> out(1000, 0);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i) + 1; });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i) + 1);

  // Exceptions from workers surface to the caller.
  CHECK_THROWS_AS(parallel_for(8, 2,
                               [](std::size_t i) {
                                 if (i == 5) throw ParameterError("boom");
                               }),
                  ParameterError);
}

TEST_CASE("format_double round-trips exactly", "[core]") {
  for (const double x : {0.1, 1.0 / 3.0, 1e-300, 12345.6789, -0.0, 2.0}) {
    const std::string s = format_double(x);
    CHECK(std::stod(s) == x);
  }
}
