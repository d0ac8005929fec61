#pragma once

// Linear cocycle A(n, x) = A(x_{n-1}) ... A(x_0) over a sample path, with
// A(0, x) = I. Long products are carried as value * exp(log_scale) so that
// exponential growth or decay over 10^5 steps stays representable.

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cocylab/driving.hpp"

namespace cocylab {

inline constexpr double kMinusInfinity = -std::numeric_limits<double>::infinity();

enum class NormKind { Euclidean, One, Infinity };

double vector_norm(const Eigen::VectorXd& v, NormKind kind = NormKind::Euclidean);
double operator_norm(const Eigen::MatrixXd& m, NormKind kind = NormKind::Euclidean);

// State-dependent generator for real-valued drivers:
//   M(y) = exp(rate * c) * (base + c * slope),  c = clamp(y, lower, upper).
// The clamp keeps the generator bounded on the whole real line.
struct RealStateRule {
  Eigen::MatrixXd base;
  Eigen::MatrixXd slope;
  double rate = 0.0;
  double lower = -1.0;
  double upper = 1.0;

  Eigen::MatrixXd evaluate(double y) const;
  // Analytic upper bound of the Euclidean operator norm over all y.
  double norm_bound() const;
};

class GeneratorMap {
 public:
  static constexpr std::size_t kMaxDimension = 64;

  // Throws ValidationError on empty/mis-sized tables, non-finite entries,
  // or a declared beta below the largest table norm (beyond 1e-9).
  static GeneratorMap from_table(std::vector<Eigen::MatrixXd> table,
                                 std::optional<double> beta = std::nullopt);
  static GeneratorMap from_rule(RealStateRule rule, std::optional<double> beta = std::nullopt);

  std::size_t dimension() const { return dimension_; }
  double beta() const { return beta_; }
  bool is_table() const { return rule_ == std::nullopt; }
  const std::vector<Eigen::MatrixXd>& table() const { return table_; }
  bool is_singular(Symbol s) const { return singular_.at(s); }

  // Throws LookupError for a symbol outside the table.
  const Eigen::MatrixXd& step_matrix(Symbol s) const;
  // Throws LookupError when the generator is a finite table.
  Eigen::MatrixXd step_matrix(double state) const;

 private:
  GeneratorMap() = default;

  std::size_t dimension_ = 0;
  double beta_ = 0.0;
  std::vector<Eigen::MatrixXd> table_;
  std::vector<bool> singular_;
  std::optional<RealStateRule> rule_;
};

// Step matrices A(x_k) of a generator along a path. Holds references; the
// generator and path must outlive it.
class StepSequence {
 public:
  StepSequence(const GeneratorMap& gen, const SamplePath& path);

  std::size_t size() const { return path_.size(); }
  const Eigen::MatrixXd& operator()(std::size_t k);
  bool may_be_singular(std::size_t k) const;

 private:
  const GeneratorMap& gen_;
  const SamplePath& path_;
  Eigen::MatrixXd scratch_;
};

struct CocycleProduct {
  Eigen::MatrixXd value;
  double log_scale = 0.0;
  std::size_t steps = 0;

  // log of the operator norm of value * exp(log_scale); -inf for zero.
  double log_norm(NormKind kind = NormKind::Euclidean) const;
  // value * exp(log_scale); overflows for very long horizons.
  Eigen::MatrixXd materialize() const;
};

// A(n, x). Throws RangeError when n exceeds the path length.
CocycleProduct product(const GeneratorMap& gen, const SamplePath& path, std::size_t n);
// A(n, T^start x) without copying the path.
CocycleProduct product(const GeneratorMap& gen, const SamplePath& path, std::size_t start,
                       std::size_t n);

struct QRState {
  Eigen::MatrixXd q;
  Eigen::VectorXd log_r;  // may hold kMinusInfinity for collapsed directions
  std::size_t steps = 0;

  Eigen::VectorXd rates() const;
  // rates() sorted in descending order.
  Eigen::VectorXd sorted_rates() const;
};

// Repeated Householder QR of the running product. A column whose diagonal
// entry vanishes on a singular step is recorded as -inf and iteration
// continues on the remaining directions.
QRState qr_accumulate(const GeneratorMap& gen, const SamplePath& path, std::size_t n,
                      std::size_t reorth_period = 1, std::size_t start = 0);

// Same iteration applied to the transposed factors in reverse order, i.e. to
// A(n, x)^T = A(x_0)^T ... A(x_{n-1})^T. The leading columns of q (sorted by
// log_r) converge to the dominant right singular directions of A(n, x).
QRState qr_accumulate_adjoint(const GeneratorMap& gen, const SamplePath& path, std::size_t n,
                              std::size_t start = 0);

// log ||A(k, T^start x) B|| for k = 0..n. For a single column this is the
// vector norm under `kind`; for several orthonormal columns it is the
// restricted operator norm (exact for the Euclidean norm, and for any kind
// when B = I).
std::vector<double> log_norm_trace(const GeneratorMap& gen, const SamplePath& path,
                                   const Eigen::MatrixXd& b, std::size_t n, std::size_t start = 0,
                                   NormKind kind = NormKind::Euclidean);

// QR iteration with snapshots after each horizon in `checkpoints` (each in
// [1, n], ascending); the last snapshot is at n.
std::vector<QRState> qr_accumulate_checkpoints(const GeneratorMap& gen, const SamplePath& path,
                                               std::size_t n, std::vector<std::size_t> checkpoints,
                                               std::size_t reorth_period = 1,
                                               std::size_t start = 0);

struct IdentityResidual {
  double residual = 0.0;
  double reference_norm = 0.0;  // ||A(m+n, x)||
  double log_residual = kMinusInfinity;
  double log_reference_norm = kMinusInfinity;

  // residual <= tol * (1 + reference_norm), evaluated in log space.
  bool within(double tol) const;
};

// || a e^{a_scale} - b e^{b_scale} || with reference norm || a e^{a_scale} ||,
// evaluated without forming either product.
IdentityResidual scaled_difference(const Eigen::MatrixXd& a, double a_scale,
                                   const Eigen::MatrixXd& b, double b_scale,
                                   NormKind kind = NormKind::Euclidean);

// || A(m+n, x) - A(n, T^m x) A(m, x) ||. Throws RangeError when m + n
// exceeds the path length.
IdentityResidual cocycle_identity_residual(const GeneratorMap& gen, const SamplePath& path,
                                           std::size_t m, std::size_t n,
                                           NormKind kind = NormKind::Euclidean);

}  // namespace cocylab
