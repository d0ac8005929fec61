#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "cocylab/counterexamples.hpp"
#include "cocylab/errors.hpp"

using namespace cocylab;

namespace {

// Oracle: build the words as strings straight from the definition.
std::string word_by_strings(std::size_t k) {
  std::string w = "1";
  for (std::size_t g = 2; g <= k; ++g) w = w + std::string(w.size() * w.size(), '0') + w;
  return w;
}

}  // namespace

TEST(Word, SmallGenerations) {
  EXPECT_EQ(example25_word(1).text(), "1");
  EXPECT_EQ(example25_word(2).text(), "101");
  const auto w4 = example25_word(4);
  EXPECT_EQ(w4.size(), 255u);
  EXPECT_EQ(w4.ones(), 8u);
  EXPECT_EQ(w4.generation, 4u);
}

TEST(Word, RecurrencesAndStringOracle) {
  const std::size_t lengths[] = {1, 3, 15, 255, 65535};
  for (std::size_t k = 1; k <= 5; ++k) {
    const auto w = example25_word(k);
    EXPECT_EQ(w.size(), lengths[k - 1]);
    EXPECT_EQ(w.ones(), std::size_t{1} << (k - 1));
    EXPECT_EQ(w.text(), word_by_strings(k));
    if (k > 1) {
      const auto prev = example25_word(k - 1).text();
      EXPECT_EQ(w.text().substr(0, prev.size()), prev);
    }
  }
}

TEST(Word, GenerationBounds) {
  EXPECT_THROW(example25_word(0), ValidationError);
  try {
    example25_word(6);
    FAIL() << "expected ResourceError";
  } catch (const ResourceError& e) {
    EXPECT_NE(std::string(e.what()).find("65535"), std::string::npos);
  }
}

TEST(Trajectory, FirstCoordinateExactPowersOfTwo) {
  const auto t = example25_trajectory(4, Eigen::Vector2d(1, 0));
  ASSERT_EQ(t.size(), 255u);
  EXPECT_EQ(t.back().n, 255u);
  EXPECT_EQ(t.back().norm, 0.00390625);
  EXPECT_NEAR(t.back().exponent, -8 * std::numbers::ln2 / 255, 1e-15);
  EXPECT_NEAR(t.back().exponent, -0.02175, 1e-5);
  // Nonincreasing, and exactly 2^-ones(prefix).
  const auto text = example25_word(4).text();
  int ones = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    ones += text[i] == '1' ? 1 : 0;
    EXPECT_EQ(t[i].norm, std::ldexp(1.0, -ones));
    if (i > 0) EXPECT_LE(t[i].norm, t[i - 1].norm);
  }
}

TEST(Trajectory, SecondCoordinateFixed) {
  for (const auto& p : example25_trajectory(3, Eigen::Vector2d(0, 1))) {
    EXPECT_EQ(p.norm, 1.0);
    EXPECT_EQ(p.exponent, 0.0);
  }
}

TEST(Trajectory, EndpointExponentsIncreaseTowardZero) {
  double previous = -INFINITY;
  for (std::size_t k = 2; k <= 5; ++k) {
    const auto t = example25_trajectory(k, Eigen::Vector2d(1, 0));
    const double half = std::ldexp(1.0, static_cast<int>(k) - 1);
    const double closed = -half * std::numbers::ln2 / (std::ldexp(1.0, static_cast<int>(half)) - 1);
    EXPECT_NEAR(t.back().exponent, closed, 1e-15);
    EXPECT_GT(t.back().exponent, previous);
    EXPECT_LT(t.back().exponent, 0.0);
    previous = t.back().exponent;
  }
}

TEST(Trajectory, Validation) {
  EXPECT_THROW(example25_trajectory(2, Eigen::Vector2d(0, 0)), ValidationError);
  EXPECT_THROW(example25_trajectory(2, Eigen::Vector3d(1, 0, 0)), DimensionError);
}

TEST(Trajectory, CsvHeader) {
  std::ostringstream out;
  write_trajectory_csv(out, example25_trajectory(1, Eigen::Vector2d(1, 0)));
  EXPECT_EQ(out.str().rfind("n,norm,exponent\n", 0), 0u);
  EXPECT_NE(out.str().find("\n1,0.5,"), std::string::npos);
}

TEST(Jordan, AgainstSvdOracle) {
  const auto g = jordan_min_gain(1000);
  ASSERT_EQ(g.size(), 1001u);
  EXPECT_EQ(g[0].min_gain, 1.0);
  EXPECT_NEAR(g[1].min_gain, (std::sqrt(5.0) - 1) / 2, 1e-10);
  EXPECT_LE(g[1000].min_gain, 1.01 / 1000);
  EXPECT_GE(g[1000].min_gain, 0.99 / 1000);
  for (std::size_t n : {1u, 2u, 7u, 50u, 333u}) {
    Eigen::Matrix2d a;
    a << 1, static_cast<double>(n), 0, 1;
    const Eigen::Vector2d sv = Eigen::JacobiSVD<Eigen::Matrix2d>(a).singularValues();
    EXPECT_NEAR(g[n].min_gain, sv(1), 1e-12);
    EXPECT_NEAR(g[n].max_gain, sv(0), 1e-12 * sv(0));
  }
}

TEST(Jordan, UnimodularAndDecreasing) {
  const auto g = jordan_min_gain(5000);
  for (std::size_t n = 0; n < g.size(); ++n) {
    EXPECT_NEAR(g[n].min_gain * g[n].max_gain, 1.0, 1e-10);
    if (n > 0) EXPECT_LT(g[n].min_gain, g[n - 1].min_gain);
  }
  EXPECT_THROW(jordan_min_gain(0), ValidationError);
}
