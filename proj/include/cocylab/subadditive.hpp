#pragma once

// Subadditive processes f_n built from cocycle norms: subadditivity checks,
// Kingman limits, the sign equivalence between limsup f_n < 0 and
// lim f_n / n < 0, and recurrence of zero-mean additive sums.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cocylab/cocycle.hpp"
#include "cocylab/driving.hpp"
#include "cocylab/grassmann.hpp"

namespace cocylab {

struct SubadditiveSeries {
  std::vector<double> values;  // values[n - 1] = f_n; entries may be -inf
  std::string tag;
  std::optional<double> subadditivity_residual;

  std::size_t size() const { return values.size(); }
  double f(std::size_t n) const { return values.at(n - 1); }
};

// The family n -> f_n(T^s x) along one path, evaluated on demand.
class SeriesSource {
 public:
  // Returns f_1, ..., f_n at T^start x.
  using Evaluator = std::function<std::vector<double>(std::size_t start, std::size_t n)>;

  SeriesSource(std::string tag, std::size_t path_length, Evaluator evaluator);

  const std::string& tag() const { return tag_; }
  std::size_t path_length() const { return path_length_; }
  // Throws RangeError when start + n exceeds the path.
  std::vector<double> values(std::size_t start, std::size_t n) const;

 private:
  std::string tag_;
  std::size_t path_length_;
  Evaluator evaluator_;
};

// Sources keep references to gen and path, which must outlive them.

// f_n(x) = log ||A(n, x)|L||.
SeriesSource log_norm_series(const GeneratorMap& gen, const SamplePath& path, const Subspace& l);
// f_n(x) = g(x_0) + ... + g(x_{n-1}).
SeriesSource additive_series(const SamplePath& path, std::vector<double> per_symbol);

// f_1..f_N at x, with an optional subadditivity residual attached.
SubadditiveSeries materialize(const SeriesSource& source, std::size_t n,
                              std::optional<double> residual = std::nullopt);

// max over pairs of f_{m+n}(x) - f_n(T^m x) - f_m(x); -inf when every lhs
// is -inf, +inf when a finite lhs faces a -inf bound.
double subadditivity_residual(const SeriesSource& source,
                              const std::vector<std::pair<std::size_t, std::size_t>>& pairs);

// `count` pairs (m, n) with m, n >= 1 and m + n <= horizon.
std::vector<std::pair<std::size_t, std::size_t>> random_pairs(std::size_t horizon,
                                                              std::size_t count,
                                                              std::uint64_t seed);

inline constexpr double kSubadditivityTol = 1e-9;

struct KingmanEstimate {
  double value = 0.0;       // f_N / N
  double tail_slope = 0.0;  // least-squares slope of f_n over n in [N/2, N]
  bool converged = false;   // |value - tail_slope| <= convergence_tol
  bool authoritative = false;  // series carries a residual <= kSubadditivityTol
};

KingmanEstimate kingman_limit(const SubadditiveSeries& series, double convergence_tol = 0.01);

inline constexpr double kSignMargin = 0.01;

struct SignTrialPath {
  std::uint64_t seed = 0;
  double limsup_estimate = 0.0;  // max f_n over n in [N/2, N]
  double limit = 0.0;            // f_N / N
  bool limsup_negative = false;
  bool limit_negative = false;
};

struct SignEquivalence {
  double agreement = 0.0;
  std::size_t trials = 0;
  std::size_t disagreements = 0;
  double margin = kSignMargin;
  std::vector<SignTrialPath> paths;
};

// Classifies each sampled path by limsup f_n < -margin and by
// f_N / N < -margin, for f_n = log ||A(n, x)|L||. Throws PreconditionError
// unless L is invariant under every step matrix.
SignEquivalence sign_equivalence_trial(const GeneratorMap& gen, const DriverSpec& driver,
                                       const Subspace& l, std::size_t horizon, std::size_t trials,
                                       std::uint64_t base_seed, double margin = kSignMargin);

// True when every step matrix maps L into L within kContainmentTol.
bool is_invariant(const GeneratorMap& gen, const Subspace& l);

struct Recurrence {
  double fraction = 0.0;
  std::size_t trials = 0;
  std::size_t returned = 0;
  double epsilon = 0.0;
  bool lattice = false;  // sums tracked exactly as integer multiples of a step
};

// Fraction of sampled paths whose partial sums S_k = f(x_0) + ... + f(x_{k-1})
// satisfy min over 1 < k <= N of |S_k| <= epsilon. A negative epsilon picks
// the default (1e-9 for lattice-valued f, else 0.05 times the single-step
// standard deviation). Throws PreconditionError unless f has zero mean under
// the driver's stationary law.
Recurrence atkinson_recurrence(const std::vector<double>& f, const DriverSpec& driver,
                               std::size_t horizon, std::size_t trials, double epsilon,
                               std::uint64_t base_seed);

}  // namespace cocylab
