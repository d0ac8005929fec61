#pragma once

// Monte Carlo testers for L-conditional Lyapunov and exponential stability,
// their equivalence on random diagonal instances, and the infinite-time
// cost index with its sampled optimal cost.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cocylab/cocycle.hpp"
#include "cocylab/driving.hpp"
#include "cocylab/grassmann.hpp"

namespace cocylab {

// z for a two-sided 99% interval.
inline constexpr double kWilsonZ = 2.5758293035489004;

struct Proportion {
  std::size_t successes = 0;
  std::size_t trials = 0;
  double fraction = 0.0;
  double half_width = 0.0;  // Wilson score interval
  double lower = 0.0;
  double upper = 0.0;
  // Lower confidence bound strictly positive.
  bool positive() const { return lower > 0.0; }
};

Proportion wilson(std::size_t successes, std::size_t trials, double z = kWilsonZ);

struct StabilityOptions {
  std::size_t horizon = 10000;
  std::size_t trials = 200;
  double rate_margin = 0.05;
  double norm_threshold = 1e-3;
  std::uint64_t seed = 0;
};

struct StabilityPath {
  std::uint64_t seed = 0;
  double log_norm = 0.0;       // log ||A(N, x)|L||
  double log_norm_half = 0.0;  // log ||A(N/2, x)|L||
  double rate = 0.0;           // log_norm / N
  bool lyapunov = false;
  bool exponential = false;
};

struct StabilityVerdict {
  Proportion lyapunov;
  Proportion exponential;
  std::size_t trials = 0;
  std::size_t horizon = 0;
  double rate_margin = 0.0;
  double norm_threshold = 0.0;
  std::vector<StabilityPath> paths;
};

// Per path: Lyapunov-stable when ||A(N, x)|L|| <= norm_threshold and the
// norm at N is below the norm at N/2; exponentially stable when
// (1/N) log ||A(N, x)|L|| <= -rate_margin. Throws ValidationError for fewer
// than 30 trials or N < 1000.
StabilityVerdict conditional_stability(const GeneratorMap& gen, const DriverSpec& driver,
                                       const Subspace& l, const StabilityOptions& options);

// A diagonal generator table over a Bernoulli or Markov driver, tested on
// L = span(e_1). The true rate is the stationary average of log |A_s(0, 0)|.
struct DiagonalInstance {
  std::uint64_t seed = 0;
  GeneratorMap gen;
  DriverSpec driver;
  double true_rate = 0.0;
  std::string description;
};

// Entries with log |a| uniform on [-1, 1] and a random sign; 2 or 3
// symbols; probabilities (or kernel rows) uniform on the simplex; Bernoulli
// and Markov drivers with equal odds.
DiagonalInstance random_diagonal_instance(std::uint64_t seed);
// Explicit table on a Bernoulli driver; symbols with probability zero are
// ignored by the true rate.
DiagonalInstance diagonal_instance(std::vector<Eigen::MatrixXd> table, std::vector<double> probs);

struct InstanceOutcome {
  std::uint64_t seed = 0;
  std::string description;
  double true_rate = 0.0;
  double fitted_rate = 0.0;  // mean finite per-path rate; -inf if all collapsed
  bool lyapunov_positive = false;
  bool exponential_positive = false;
  bool boundary = false;
  bool agree() const { return lyapunov_positive == exponential_positive; }
};

struct EquivalenceReport {
  std::size_t instances = 0;
  std::size_t evaluated = 0;  // outside the boundary band
  std::size_t agreements = 0;
  double agreement = 0.0;     // over evaluated instances
  std::vector<InstanceOutcome> outcomes;
  std::vector<InstanceOutcome> disagreements;
  std::vector<InstanceOutcome> boundary;
};

// Compares the positivity verdicts of the two classifiers on each instance.
// Instances with |true rate| or |fitted rate| below rate_margin form the
// boundary band and are reported separately.
EquivalenceReport equivalence_check(const std::vector<DiagonalInstance>& instances,
                                    const StabilityOptions& options);

struct CostFunction {
  enum class Kind { Norm, Quadratic };  // V(u) = ||u||, V(u) = ||u||^2
  Kind kind = Kind::Norm;
  double gamma = 1.0;  // V(u) <= gamma ||u|| whenever ||u|| <= delta
  double delta = std::numeric_limits<double>::infinity();

  // Throws ValidationError when (gamma, delta) does not bound V near 0.
  void validate() const;
  double operator()(double norm) const;
  double from_log_norm(double log_norm) const;
};

struct CostReport {
  Eigen::VectorXd u;
  std::size_t truncation = 0;
  std::vector<double> partial_sums;  // sum_{n=0}^{k} V(A(n, x) u), k = 0..N
  double fitted_rate = 0.0;          // slope of log ||A(n, x) u|| over [N/2, N]
  bool certified = false;            // fitted rate negative and trajectory within delta
  double tail_bound = 0.0;           // +inf unless certified
  double total = 0.0;                // partial sum at N plus tail bound
  bool divergent = false;
  double gamma = 0.0;
  double delta = 0.0;
};

inline constexpr double kCostRateMargin = 1e-3;

// The tail beyond N is bounded by gamma times a geometric envelope at half
// the fitted rate, anchored so that it dominates the observed last half.
CostReport cost_index(const GeneratorMap& gen, const SamplePath& path, const Eigen::VectorXd& u,
                      const CostFunction& v, std::size_t truncation);

struct OptimalCost {
  double estimate = 0.0;          // min over sampled paths; an upper bound on J(u)
  bool divergent = false;
  std::size_t trials = 0;
  std::size_t truncation = 0;
  std::vector<double> running_min;  // min over the first k + 1 seeds
  std::size_t argmin = 0;
  std::uint64_t argmin_seed = 0;
};

// Sample minimum of the truncated plus tail-bounded cost. Divergent (and
// estimate +inf) unless conditional_stability on span(u) certifies a
// positive exponentially stable fraction.
OptimalCost optimal_cost_estimate(const GeneratorMap& gen, const DriverSpec& driver,
                                  const Eigen::VectorXd& u, const CostFunction& v,
                                  std::size_t truncation, std::size_t trials, std::uint64_t seed);

}  // namespace cocylab
