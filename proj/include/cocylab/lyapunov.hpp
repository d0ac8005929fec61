#pragma once

// Finite-horizon estimators for the multiplicative ergodic theorem: Lyapunov
// spectrum, filtration, directional exponents, weighted limsup statistics,
// and a verification report for the stable-space dichotomy.

#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "cocylab/cocycle.hpp"
#include "cocylab/driving.hpp"
#include "cocylab/grassmann.hpp"

namespace cocylab {

inline constexpr double kDefaultGapThreshold = 0.05;

struct LyapunovSpectrum {
  std::vector<double> exponents;  // strictly ascending; may start at -inf
  std::vector<std::size_t> multiplicities;
  std::size_t horizon = 0;
  double gap_threshold = kDefaultGapThreshold;
  std::vector<double> raw;       // per-direction log|r| / n, ascending
  std::vector<double> raw_half;  // same at horizon n / 2
  double max_group_spread = 0.0;

  double top() const { return exponents.back(); }
  double bottom() const { return exponents.front(); }
  std::size_t levels() const { return exponents.size(); }
};

struct ExponentGroups {
  std::vector<double> exponents;
  std::vector<std::size_t> multiplicities;
  double max_spread = 0.0;  // widest max - min within one finite group
};

// Merges sorted raw values whose consecutive differences are below
// gap_threshold; each group is labelled by its mean. All -inf values form a
// single group.
ExponentGroups group_exponents(std::vector<double> raw, double gap_threshold);

// Throws ValidationError for n < 100 and RangeError when n exceeds the path.
LyapunovSpectrum spectrum(const GeneratorMap& gen, const SamplePath& path, std::size_t n,
                          double gap_threshold = kDefaultGapThreshold,
                          std::size_t reorth_period = 1, std::size_t start = 0);

struct DirectionalExponent {
  Eigen::VectorXd v;
  std::size_t horizon = 0;
  double value = kMinusInfinity;
  std::size_t tail_start = 0;  // horizon of tail.front()
  std::vector<double> tail;    // (1/k) log ||A(k, x) v|| for k in [tail_start, horizon]
};

// (1/n) log ||A(n, x) v|| for v scaled to unit length; -inf for v = 0.
DirectionalExponent directional_exponent(const GeneratorMap& gen, const SamplePath& path,
                                         const Eigen::VectorXd& v, std::size_t n,
                                         std::size_t tail_window = 0, std::size_t start = 0);

struct FiltrationEstimate {
  Flag flag;
  LyapunovSpectrum spectrum;
  // D_H between each level estimated at horizons n / 2 and n.
  std::vector<double> level_convergence;
};

// Levels are spans of the right singular directions of A(n, x) whose growth
// rates fall at or below each grouped exponent, computed from the adjoint QR
// iteration. Throws UngroupableSpectrum when a chained group spreads wider
// than gap_threshold.
FiltrationEstimate filtration_estimate(const GeneratorMap& gen, const SamplePath& path,
                                       std::size_t n, double gap_threshold = kDefaultGapThreshold,
                                       std::size_t start = 0);

using LimsupTarget = std::variant<Eigen::VectorXd, Subspace>;

struct LimsupStats {
  double weight = 0.0;
  std::size_t window_begin = 0;
  std::size_t window_end = 0;
  // log of the running max of exp(-weight k) ||A(k, x) target|| over
  // k in [window_begin, window_begin + i].
  std::vector<double> log_running_max;
  std::size_t argmax = 0;
  double log_tail_min = kMinusInfinity;
  std::size_t argmin = 0;

  double max() const;
  double tail_min() const;
};

// Running max of the weighted norm (restricted operator norm for subspace
// targets) over k in [burn_in, n]. Throws ValidationError unless n > burn_in.
LimsupStats limsup_stats(const GeneratorMap& gen, const SamplePath& path, double weight,
                         const LimsupTarget& target, std::size_t burn_in, std::size_t n,
                         std::size_t start = 0);

struct NonshrinkingSearch {
  std::size_t random_trials = 64;
  std::size_t burn_in = 0;  // 0 selects n / 10
  double tolerance = 1e-3;
  std::uint64_t seed = 0;
};

struct NonshrinkingWitness {
  Eigen::VectorXd v;  // unit vector in level ∩ previous^⊥
  double weighted_sup = 0.0;  // windowed sup of exp(-weight k) ||A(k, x) v||
  bool certified = false;     // weighted_sup >= 1 - tolerance
  std::size_t candidates = 0;
  LimsupStats stats;
};

// Searches unit vectors in level ∩ previous^⊥ for one whose weighted norm
// does not shrink over the window. Failure to certify is reported, not
// thrown. Throws PreconditionError unless previous ⊂ level strictly.
NonshrinkingWitness find_nonshrinking_vector(const GeneratorMap& gen, const SamplePath& path,
                                             double weight, const Subspace& level,
                                             const Subspace& previous, std::size_t n,
                                             const NonshrinkingSearch& options = {});

struct MetTolerances {
  double epsilon = 0.05;
  double invariance_tol = 1e-8;
  std::size_t samples = 8;
  std::uint64_t seed = 0;
};

struct MetCheck {
  bool applicable = true;
  bool passed = true;
  double value = 0.0;  // worst observed quantity for the check
};

struct MetReport {
  LyapunovSpectrum spectrum;
  Flag flag;
  Flag shifted_flag;
  Subspace stable;  // estimated stable space
  // Directional exponents < 0 on the stable space (value: largest seen).
  MetCheck stable_exponents;
  // Directional exponents >= -epsilon off it (value: smallest seen).
  MetCheck unstable_exponents;
  // Windowed sup ||A(t, x) v|| >= epsilon off the stable space (value: log of
  // the smallest sup seen).
  MetCheck nonvanishing;
  // Windowed sup ||A(t, x)|| >= 1 - epsilon when the stable space is proper
  // (value: log sup).
  MetCheck norm_sup;
  // A(1, x) V^(i)(x) ⊆ V^(i)(Tx) (value: largest containment residual).
  MetCheck invariance;
  std::vector<double> invariance_residuals;
  // dim V^(i)(Tx) = dim V^(i)(x).
  MetCheck dimension;

  bool passed() const;
};

// Needs a path of length at least n + 1 (the filtration is also estimated
// at T x).
MetReport verify_met(const GeneratorMap& gen, const SamplePath& path, std::size_t n,
                     double gap_threshold = kDefaultGapThreshold, const MetTolerances& tol = {});

struct BlockMap {
  Eigen::MatrixXd value;  // in orthonormal block coordinates
  double log_scale = 0.0;
};

// Â^(i)(n, x) = P_{V̂^(i)(T^n x)} A(n, x) restricted to V̂^(i)(x), one per
// level, where V̂^(i) = V^(i) ∩ V^(i-1)^⊥. `at_x` is the flag at T^start x
// and `at_target` the flag at T^(start+n) x. Throws InvarianceError when the
// flags' dimensions differ.
std::vector<BlockMap> induced_block_cocycle(const GeneratorMap& gen, const SamplePath& path,
                                            const Flag& at_x, const Flag& at_target, std::size_t n,
                                            std::size_t start = 0);

// Per level: || Â(m+n, x) - Â(n, T^m x) Â(m, x) ||.
std::vector<IdentityResidual> block_cocycle_residual(const GeneratorMap& gen,
                                                     const SamplePath& path, const Flag& at_x,
                                                     const Flag& at_m, const Flag& at_m_plus_n,
                                                     std::size_t m, std::size_t n);

}  // namespace cocylab
