#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <optional>

#include "cocylab/counterexamples.hpp"
#include "cocylab/errors.hpp"
#include "cocylab/lyapunov.hpp"
#include "cocylab/rng.hpp"

using namespace cocylab;

namespace {

constexpr double kLn2 = std::numbers::ln2;

Eigen::MatrixXd mat2(double a, double b, double c, double d) {
  Eigen::MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

GeneratorMap constant(const Eigen::MatrixXd& m) { return GeneratorMap::from_table({m}); }

SamplePath constant_path(std::size_t n) {
  return SamplePath(SamplePath::SymbolEntries(n, 0), 0, "constant");
}

SamplePath coin_path(std::size_t n, std::uint64_t seed) {
  return sample_bernoulli({Alphabet::indexed(2), {0.5, 0.5}}, n, seed);
}

// Oracle for the switching cocycle: A_1 halves e1, A_0 fixes it.
std::size_t ones(const SamplePath& p, std::size_t n, std::size_t start = 0) {
  std::size_t c = 0;
  for (std::size_t k = start; k < start + n; ++k) c += p.symbols()[k] == Symbol{1} ? 1 : 0;
  return c;
}

Eigen::MatrixXd rotation(double t) { return mat2(std::cos(t), -std::sin(t), std::sin(t), std::cos(t)); }

Eigen::VectorXd e(int d, int i) { return Eigen::VectorXd::Unit(d, i); }

Eigen::MatrixXd random_matrix(Rng& rng, int d) {
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  return a;
}

}  // namespace

TEST(Grouping, MergesCloseValuesAndMinusInfinity) {
  const auto g = group_exponents({kMinusInfinity, kMinusInfinity, -1.0, -0.99, 2.0}, 0.05);
  ASSERT_EQ(g.exponents.size(), 3u);
  EXPECT_EQ(g.exponents[0], kMinusInfinity);
  EXPECT_NEAR(g.exponents[1], -0.995, 1e-15);
  EXPECT_EQ(g.multiplicities, (std::vector<std::size_t>{2, 2, 1}));
  EXPECT_NEAR(g.max_spread, 0.01, 1e-15);
}

TEST(Spectrum, DiagonalConstant) {
  const auto s = spectrum(constant(mat2(3, 0, 0, 0.5)), constant_path(10000), 10000);
  ASSERT_EQ(s.levels(), 2u);
  EXPECT_NEAR(s.exponents[0], -kLn2, 1e-10);
  EXPECT_NEAR(s.exponents[1], std::log(3.0), 1e-10);
  EXPECT_EQ(s.multiplicities, (std::vector<std::size_t>{1, 1}));
}

TEST(Spectrum, SwitchingCocycleMatchesSymbolCount) {
  const std::size_t n = 100000;
  const auto path = coin_path(n, 11);
  const auto s = spectrum(example25_generator(), path, n);
  ASSERT_EQ(s.levels(), 2u);
  EXPECT_NEAR(s.exponents[0], -kLn2 * static_cast<double>(ones(path, n)) / n, 1e-10);
  EXPECT_NEAR(s.exponents[0], -kLn2 / 2, 0.01);
  EXPECT_NEAR(s.exponents[1], 0.0, 1e-12);
  EXPECT_EQ(s.multiplicities, (std::vector<std::size_t>{1, 1}));
}

TEST(Spectrum, JordanBlockHasDoubleZero) {
  const auto s = spectrum(constant(mat2(1, 1, 0, 1)), constant_path(100000), 100000, 0.01);
  ASSERT_EQ(s.levels(), 1u);
  EXPECT_NEAR(s.exponents[0], 0.0, 1e-3);
  EXPECT_EQ(s.multiplicities, (std::vector<std::size_t>{2}));
}

TEST(Spectrum, SingularStepGivesMinusInfinityLevel) {
  const auto s = spectrum(constant(mat2(2, 0, 0, 0)), constant_path(200), 200);
  ASSERT_EQ(s.levels(), 2u);
  EXPECT_EQ(s.bottom(), kMinusInfinity);
  EXPECT_NEAR(s.top(), kLn2, 1e-12);
}

TEST(Spectrum, Errors) {
  EXPECT_THROW(spectrum(constant(mat2(1, 0, 0, 1)), constant_path(50), 50), ValidationError);
  EXPECT_THROW(spectrum(constant(mat2(1, 0, 0, 1)), constant_path(150), 200), RangeError);
}

TEST(Spectrum, MultiplicitiesSumToDimension) {
  Rng rng(21);
  for (int t = 0; t < 10; ++t) {
    const int d = 2 + static_cast<int>(rng.next_u64() % 3);
    const auto gen = GeneratorMap::from_table({random_matrix(rng, d), random_matrix(rng, d)});
    const auto s = spectrum(gen, coin_path(2000, rng.next_u64()), 2000);
    std::size_t total = 0;
    for (auto m : s.multiplicities) total += m;
    EXPECT_EQ(total, static_cast<std::size_t>(d));
    for (std::size_t i = 1; i < s.levels(); ++i) EXPECT_LT(s.exponents[i - 1], s.exponents[i]);
  }
}

TEST(Directional, Examples) {
  const auto zero = directional_exponent(constant(mat2(2, 0, 0, 2)), constant_path(100),
                                         Eigen::VectorXd::Zero(2), 100);
  EXPECT_EQ(zero.value, kMinusInfinity);
  const auto two = directional_exponent(constant(mat2(2, 0, 0, 2)), constant_path(100),
                                        Eigen::Vector2d(0.3, -1.7), 100);
  EXPECT_NEAR(two.value, kLn2, 1e-12);

  const std::size_t n = 100000;
  const auto path = coin_path(n, 12);
  const auto d = directional_exponent(example25_generator(), path, e(2, 0), n);
  EXPECT_NEAR(d.value, -kLn2 * static_cast<double>(ones(path, n)) / n, 1e-12);
  EXPECT_NEAR(d.value, -kLn2 / 2, 0.01);
}

TEST(Filtration, DiagonalConstant) {
  const auto f = filtration_estimate(constant(mat2(3, 0, 0, 0.5)), constant_path(1000), 1000);
  ASSERT_EQ(f.flag.size(), 2u);
  EXPECT_NEAR(hausdorff_distance(f.flag.level(1), Subspace::axis(2, 1)), 0.0, 1e-10);
  EXPECT_EQ(f.flag.level(2).dim(), 2u);
  EXPECT_NEAR(f.flag.labels()[0], -kLn2, 1e-10);
  EXPECT_NEAR(f.flag.labels()[1], std::log(3.0), 1e-10);
}

TEST(Filtration, IdentityHasOneLevel) {
  const auto f = filtration_estimate(constant(Eigen::MatrixXd::Identity(2, 2)), constant_path(500), 500);
  ASSERT_EQ(f.flag.size(), 1u);
  EXPECT_EQ(f.flag.level(1).dim(), 2u);
  EXPECT_NEAR(f.flag.labels()[0], 0.0, 1e-15);
}

TEST(Filtration, SwitchingCocycleAgainstExplicitProductSvd) {
  const std::size_t n = 10000;
  const auto path = coin_path(n, 13);
  const auto gen = example25_generator();
  const auto f = filtration_estimate(gen, path, n);
  ASSERT_EQ(f.flag.size(), 2u);
  EXPECT_LE(hausdorff_distance(f.flag.level(1), Subspace::axis(2, 0)), 0.01);
  // Oracle: the explicit product is diag(2^-ones, 1); its weakest right
  // singular direction is e1 (exponent underflows, so use a short prefix).
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(2, 2);
  for (std::size_t k = 0; k < 200; ++k) a = gen.step_matrix(path.symbols()[k]) * a;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto weak = Subspace::span(Eigen::VectorXd(svd.matrixV().col(1)));
  EXPECT_LE(hausdorff_distance(weak, Subspace::axis(2, 0)), 1e-12);
}

TEST(Limsup, FixedVectorAndIsometry) {
  const auto jordan = limsup_stats(constant(mat2(1, 1, 0, 1)), constant_path(300), 0.0,
                                   Eigen::VectorXd(e(2, 0)), 0, 300);
  for (double v : jordan.log_running_max) EXPECT_NEAR(v, 0.0, 1e-14);

  const Eigen::VectorXd u = Eigen::Vector2d(0.6, 0.8);
  const auto rot = limsup_stats(constant(rotation(0.7)), constant_path(300), 0.0, u, 0, 300);
  EXPECT_NEAR(rot.max(), 1.0, 1e-12);
  const auto sub = limsup_stats(constant(rotation(0.7)), constant_path(300), 0.0, Subspace::full(2), 0, 300);
  EXPECT_NEAR(sub.max(), 1.0, 1e-12);
  EXPECT_THROW(limsup_stats(constant(rotation(0.7)), constant_path(10), 0.0, u, 5, 5), ValidationError);
}

TEST(Limsup, SpecialPathMaximumIsHalf) {
  const auto word = example25_word(4);
  ASSERT_EQ(word.size(), 255u);
  const auto s = limsup_stats(example25_generator(), example25_path(word), 0.0, Eigen::VectorXd(e(2, 0)), 1,
                              255);
  EXPECT_NEAR(s.max(), 0.5, 1e-15);
  EXPECT_EQ(s.argmax, 1u);
  // Oracle: weighted norm at the horizon is 2^-ones.
  EXPECT_NEAR(s.tail_min(), std::ldexp(1.0, -static_cast<int>(word.ones())), 1e-15);
}

TEST(Limsup, RunningMaxMonotoneAndMatchesTrace) {
  Rng rng(22);
  for (int t = 0; t < 10; ++t) {
    const auto gen = GeneratorMap::from_table({random_matrix(rng, 3), random_matrix(rng, 3)});
    const auto path = coin_path(400, rng.next_u64());
    const Eigen::VectorXd v = random_matrix(rng, 3).col(0);
    const double weight = rng.normal();
    const auto s = limsup_stats(gen, path, weight, v, 40, 400);
    for (std::size_t i = 1; i < s.log_running_max.size(); ++i) {
      EXPECT_GE(s.log_running_max[i], s.log_running_max[i - 1]);
    }
    // Oracle: direct vector iteration with per-step renormalization.
    Eigen::VectorXd x = v;
    double log_scale = 0.0, best = kMinusInfinity;
    for (std::size_t k = 1; k <= 400; ++k) {
      x = gen.step_matrix(path.symbols()[k - 1]) * x;
      const double nrm = x.norm();
      log_scale += std::log(nrm);
      x /= nrm;
      if (k >= 40) best = std::max(best, log_scale - weight * static_cast<double>(k));
    }
    EXPECT_NEAR(s.log_running_max.back(), best, 1e-9 * (1 + std::abs(best)));
  }
}

TEST(Nonshrinking, Examples) {
  const auto rot = find_nonshrinking_vector(constant(rotation(1.1)), constant_path(500), 0.0, Subspace::full(2),
                                            Subspace::zero(2), 500);
  EXPECT_TRUE(rot.certified);
  EXPECT_NEAR(rot.weighted_sup, 1.0, 1e-12);

  const auto path = coin_path(2000, 14);
  const auto sw = find_nonshrinking_vector(example25_generator(), path, 0.0, Subspace::full(2),
                                           Subspace::axis(2, 0), 2000);
  EXPECT_TRUE(sw.certified);
  EXPECT_NEAR(std::abs(sw.v(1)), 1.0, 1e-12);

  const auto diag = find_nonshrinking_vector(constant(mat2(3, 0, 0, 0.5)), constant_path(500), std::log(3.0),
                                             Subspace::full(2), Subspace::axis(2, 1), 500);
  EXPECT_TRUE(diag.certified);
  EXPECT_NEAR(diag.weighted_sup, 1.0, 1e-9);
  EXPECT_NEAR(std::abs(diag.v(0)), 1.0, 1e-12);

  EXPECT_THROW(find_nonshrinking_vector(constant(rotation(1.1)), constant_path(50), 0.0, Subspace::axis(2, 0),
                                        Subspace::axis(2, 1), 50),
               PreconditionError);
}

TEST(VerifyMet, DiagonalConstant) {
  const auto r = verify_met(constant(mat2(3, 0, 0, 0.5)), constant_path(1001), 1000);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.stable.dim(), 1u);
  EXPECT_LE(r.invariance.value, 1e-9);
  for (double x : r.invariance_residuals) EXPECT_LE(x, 1e-9);
  EXPECT_TRUE(r.dimension.passed);
}

TEST(VerifyMet, RotationHasTrivialStableSpace) {
  const auto r = verify_met(constant(rotation(0.4)), constant_path(1001), 1000);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.stable.dim(), 0u);
  ASSERT_TRUE(r.norm_sup.applicable);
  EXPECT_NEAR(r.norm_sup.value, 0.0, 1e-12);
}

TEST(VerifyMet, SwitchingCocyclePassesOnTypicalPaths) {
  int passed = 0;
  for (int s = 0; s < 10; ++s) {
    const auto r = verify_met(example25_generator(), coin_path(5001, derive_seed(15, s)), 5000);
    passed += r.passed() ? 1 : 0;
  }
  EXPECT_EQ(passed, 10);
}

TEST(BlockCocycle, DiagonalRestrictsToAxes) {
  const auto gen = constant(mat2(3, 0, 0, 0.5));
  const auto path = constant_path(1100);
  const auto fx = filtration_estimate(gen, path, 1000, kDefaultGapThreshold, 0).flag;
  const auto fy = filtration_estimate(gen, path, 1000, kDefaultGapThreshold, 20).flag;
  const auto blocks = induced_block_cocycle(gen, path, fx, fy, 20);
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_NEAR(std::log(std::abs(blocks[0].value(0, 0))) + blocks[0].log_scale, -20 * kLn2, 1e-10);
  EXPECT_NEAR(std::log(std::abs(blocks[1].value(0, 0))) + blocks[1].log_scale, 20 * std::log(3.0), 1e-10);
  const auto fm = filtration_estimate(gen, path, 1000, kDefaultGapThreshold, 10).flag;
  for (const auto& r : block_cocycle_residual(gen, path, fx, fm, fy, 10, 10)) EXPECT_LE(r.residual, 1e-9 * (1 + r.reference_norm));
}

TEST(BlockCocycle, JordanSingleLevelIsTheMapItself) {
  const auto gen = constant(mat2(1, 1, 0, 1));
  const Flag whole({Subspace::full(2)});
  const auto blocks = induced_block_cocycle(gen, constant_path(10), whole, whole, 7);
  ASSERT_EQ(blocks.size(), 1u);
  const Eigen::MatrixXd b = std::exp(blocks[0].log_scale) * blocks[0].value;
  const Eigen::MatrixXd basis = Subspace::full(2).basis();
  const Eigen::MatrixXd expect = basis.transpose() * mat2(1, 7, 0, 1) * basis;
  EXPECT_LE((b - expect).norm(), 1e-12);
}

TEST(BlockCocycle, SwitchingIdentityResidual) {
  const auto gen = example25_generator();
  const auto path = coin_path(2200, 16);
  const auto f0 = filtration_estimate(gen, path, 2000, kDefaultGapThreshold, 0).flag;
  const auto f50 = filtration_estimate(gen, path, 2000, kDefaultGapThreshold, 50).flag;
  const auto f100 = filtration_estimate(gen, path, 2000, kDefaultGapThreshold, 100).flag;
  for (const auto& r : block_cocycle_residual(gen, path, f0, f50, f100, 50, 50)) EXPECT_TRUE(r.within(1e-8));
}

TEST(BlockCocycle, MismatchedFlagsThrow) {
  const auto gen = constant(mat2(3, 0, 0, 0.5));
  const Flag two({Subspace::axis(2, 1), Subspace::full(2)});
  const Flag one({Subspace::full(2)});
  EXPECT_THROW(induced_block_cocycle(gen, constant_path(10), two, one, 3), InvarianceError);
}

TEST(Properties, ShiftInvarianceOfExponents) {
  Rng rng(23);
  for (int t = 0; t < 6; ++t) {
    const auto gen = GeneratorMap::from_table({random_matrix(rng, 2) + 2 * Eigen::MatrixXd::Identity(2, 2),
                                               random_matrix(rng, 2)});
    const auto path = coin_path(10100, rng.next_u64());
    const auto a = spectrum(gen, path, 10000, kDefaultGapThreshold, 1, 0);
    for (std::size_t k : {1u, 37u, 100u}) {
      const auto b = spectrum(gen, path, 10000, kDefaultGapThreshold, 1, k);
      ASSERT_EQ(a.raw.size(), b.raw.size());
      for (std::size_t i = 0; i < a.raw.size(); ++i) EXPECT_NEAR(a.raw[i], b.raw[i], 0.02);
    }
  }
}

TEST(Properties, DimensionInvarianceAlongOrbit) {
  Rng rng(24);
  int checked = 0;
  for (int t = 0; t < 10; ++t) {
    const auto gen = GeneratorMap::from_table({random_matrix(rng, 3), random_matrix(rng, 3)});
    const auto path = coin_path(4003, rng.next_u64());
    try {
      const auto f0 = filtration_estimate(gen, path, 4000);
      for (std::size_t k = 1; k <= 3; ++k) {
        EXPECT_EQ(f0.flag.dims(), filtration_estimate(gen, path, 4000, kDefaultGapThreshold, k).flag.dims());
      }
      ++checked;
    } catch (const UngroupableSpectrum&) {
    }
  }
  EXPECT_GE(checked, 5);
}

TEST(Properties, DirectionalConsistencyTopLevel) {
  // Any vector off the next-to-top level grows at the top rate.
  Rng rng(25);
  int checked = 0;
  for (int t = 0; t < 10; ++t) {
    const auto gen = GeneratorMap::from_table({random_matrix(rng, 3), random_matrix(rng, 3)});
    const auto path = coin_path(4000, rng.next_u64());
    std::optional<FiltrationEstimate> f;
    try {
      f = filtration_estimate(gen, path, 4000);
    } catch (const UngroupableSpectrum&) {
      continue;
    }
    const std::size_t s = f->flag.size();
    const Eigen::VectorXd v = random_matrix(rng, 3).col(0);
    if (hausdorff_distance(Subspace::span(v), f->flag.level(s - 1)) <= 0.1) continue;
    EXPECT_NEAR(directional_exponent(gen, path, v, 4000).value, f->flag.labels().back(), 3 * kDefaultGapThreshold);
    ++checked;
  }
  EXPECT_GE(checked, 5);
}

TEST(Properties, DirectionalConsistencyEveryLevelTriangular) {
  // Upper-triangular steps keep span(e1..ei) invariant exactly in floating
  // point, so lower levels can be probed without leakage into faster
  // directions. Diagonal log-means -1, 0, 1 order the levels by index.
  Rng rng(26);
  for (int t = 0; t < 5; ++t) {
    std::vector<Eigen::MatrixXd> table;
    for (int s = 0; s < 2; ++s) {
      Eigen::MatrixXd m = random_matrix(rng, 3).triangularView<Eigen::StrictlyUpper>();
      for (int i = 0; i < 3; ++i) m(i, i) = std::exp(i - 1.0 + 0.3 * rng.normal());
      table.push_back(m);
    }
    const auto gen = GeneratorMap::from_table(table);
    const auto path = coin_path(4000, rng.next_u64());
    const auto f = filtration_estimate(gen, path, 4000);
    ASSERT_EQ(f.flag.size(), 3u);
    for (std::size_t i = 1; i <= 3; ++i) {
      // Oracle flag: span(e1..ei).
      const auto exact = Subspace::span(Eigen::MatrixXd(Eigen::MatrixXd::Identity(3, 3).leftCols(i)));
      EXPECT_LE(hausdorff_distance(f.flag.level(i), exact), 0.01);
      Eigen::VectorXd v = Eigen::VectorXd::Zero(3);
      v.head(i) = random_matrix(rng, 3).col(0).head(i);
      v(i - 1) = 1.0;
      EXPECT_NEAR(directional_exponent(gen, path, v, 4000).value, f.flag.labels()[i - 1], 3 * kDefaultGapThreshold);
    }
  }
}

TEST(Properties, DegenerateDecayOnSpecialPath) {
  const auto word = example25_word(5);
  const auto s = limsup_stats(example25_generator(), example25_path(word), 0.0, Eigen::VectorXd(e(2, 0)), 1,
                              word.size());
  EXPECT_LE(s.tail_min(), 1e-4);
  EXPECT_NEAR(s.log_tail_min, -kLn2 * static_cast<double>(word.ones()), 1e-12);
}
