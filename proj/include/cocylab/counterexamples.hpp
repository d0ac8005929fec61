#pragma once

// Explicit pathological objects: the switching word whose product decays to
// zero but not exponentially fast, and the Jordan block whose minimal gain
// tends to zero.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cocylab/cocycle.hpp"
#include "cocylab/driving.hpp"

namespace cocylab {

inline constexpr std::size_t kMaxWordGeneration = 5;

struct Word {
  std::vector<bool> bits;  // bit-packed
  std::size_t generation = 0;

  std::size_t size() const { return bits.size(); }
  std::size_t ones() const;
  // 0/1 text, no separators.
  std::string text() const;
};

// sigma_1 = (1), sigma_k = sigma_{k-1} 0^{|sigma_{k-1}|^2} sigma_{k-1}.
// Throws ValidationError for k = 0 and ResourceError for k > 5.
Word example25_word(std::size_t k);

// A_0 = I, A_1 = diag(1/2, 1).
GeneratorMap example25_generator();
// The word as a two-symbol sample path.
SamplePath example25_path(const Word& word);

struct TrajectoryPoint {
  std::size_t n = 0;
  double norm = 0.0;      // ||A(n, sigma) v||
  double exponent = 0.0;  // (1/n) log ||A(n, sigma) v||
};

// n = 1..L_k along sigma_k. Throws ValidationError for v = 0 and
// DimensionError unless v is in R^2.
std::vector<TrajectoryPoint> example25_trajectory(std::size_t k, const Eigen::VectorXd& v);

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryPoint>& series);

struct GainPoint {
  std::size_t n = 0;
  double min_gain = 0.0;  // smallest singular value of [[1, n], [0, 1]]
  double max_gain = 0.0;
};

// n = 0..n_max. Throws ValidationError for n_max = 0.
std::vector<GainPoint> jordan_min_gain(std::size_t n_max);

}  // namespace cocylab
