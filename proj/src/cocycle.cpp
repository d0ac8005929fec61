#include "cocylab/cocycle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "cocylab/errors.hpp"
#include "cocylab/format.hpp"

namespace cocylab {
namespace {

constexpr double kRenormHigh = 1e100;
constexpr double kRenormLow = 1e-100;
constexpr double kBetaSlack = 1e-9;

bool numerically_singular(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return true;
  const double tol = static_cast<double>(m.rows()) * std::numeric_limits<double>::epsilon() * s(0);
  return s(s.size() - 1) <= tol;
}

// Rescales `value` by a power of two so its largest entry is O(1); exact in
// binary floating point.
void renormalize(Eigen::MatrixXd& value, double& log_scale) {
  const double peak = value.cwiseAbs().maxCoeff();
  if (peak == 0.0 || (peak <= kRenormHigh && peak >= kRenormLow)) return;
  int exponent = 0;
  std::frexp(peak, &exponent);
  value *= std::ldexp(1.0, -exponent);
  log_scale += exponent * std::numbers::ln2;
}

void require_range(const SamplePath& path, std::size_t start, std::size_t n) {
  if (start > path.size() || n > path.size() - start) {
    throw RangeError("horizon " + std::to_string(start) + "+" + std::to_string(n) +
                     " exceeds path length " + std::to_string(path.size()));
  }
}

// Factors `running` = Q R, folds log|diag R| into state, and restarts the
// running product from Q.
void fold_qr(Eigen::MatrixXd& running, QRState& state, bool singular_step) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(running);
  const Eigen::MatrixXd& packed = qr.matrixQR();
  const Eigen::Index d = packed.rows();
  double peak = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) peak = std::max(peak, std::abs(packed(i, i)));
  const double collapse_tol =
      singular_step ? 16.0 * static_cast<double>(d) * std::numeric_limits<double>::epsilon() * peak
                    : 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double r = std::abs(packed(i, i));
    if (r <= collapse_tol || r == 0.0) {
      state.log_r(i) = kMinusInfinity;
    } else {
      state.log_r(i) += std::log(r);
    }
  }
  state.q = qr.householderQ();
  running = state.q;
}

std::vector<QRState> accumulate(const GeneratorMap& gen, std::size_t n, std::size_t period,
                                std::vector<std::size_t> checkpoints,
                                const std::function<const Eigen::MatrixXd&(std::size_t)>& step,
                                const std::function<bool(std::size_t)>& singular) {
  const auto d = static_cast<Eigen::Index>(gen.dimension());
  if (checkpoints.empty() || checkpoints.back() != n) checkpoints.push_back(n);
  QRState state{Eigen::MatrixXd::Identity(d, d), Eigen::VectorXd::Zero(d), 0};
  Eigen::MatrixXd running = state.q;
  Eigen::MatrixXd tmp(d, d);
  std::vector<QRState> snapshots;
  std::size_t next_checkpoint = 0;
  std::size_t pending = 0;
  bool singular_step = false;
  for (std::size_t k = 0; k < n; ++k) {
    tmp.noalias() = step(k) * running;
    running.swap(tmp);
    singular_step = singular_step || singular(k);
    const bool at_checkpoint = k + 1 == checkpoints[next_checkpoint];
    if (++pending == period || at_checkpoint) {
      fold_qr(running, state, singular_step);
      pending = 0;
      singular_step = false;
    }
    state.steps = k + 1;
    if (at_checkpoint) {
      snapshots.push_back(state);
      ++next_checkpoint;
    }
  }
  return snapshots;
}

void validate_checkpoints(const std::vector<std::size_t>& checkpoints, std::size_t n) {
  std::size_t prev = 0;
  for (auto c : checkpoints) {
    if (c <= prev || c > n) throw ValidationError("checkpoints must be ascending within [1, n]");
    prev = c;
  }
}

}  // namespace

double vector_norm(const Eigen::VectorXd& v, NormKind kind) {
  switch (kind) {
    case NormKind::One: return v.lpNorm<1>();
    case NormKind::Infinity: return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
    case NormKind::Euclidean: break;
  }
  return v.norm();
}

double operator_norm(const Eigen::MatrixXd& m, NormKind kind) {
  if (m.size() == 0) return 0.0;
  switch (kind) {
    case NormKind::One: return m.cwiseAbs().colwise().sum().maxCoeff();
    case NormKind::Infinity: return m.cwiseAbs().rowwise().sum().maxCoeff();
    case NormKind::Euclidean: break;
  }
  if (m.cols() == 1) return m.norm();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

Eigen::MatrixXd RealStateRule::evaluate(double y) const {
  const double c = std::clamp(y, lower, upper);
  return std::exp(rate * c) * (base + c * slope);
}

double RealStateRule::norm_bound() const {
  const double reach = std::max(std::abs(lower), std::abs(upper));
  return std::exp(std::abs(rate) * reach) * (operator_norm(base) + reach * operator_norm(slope));
}

GeneratorMap GeneratorMap::from_table(std::vector<Eigen::MatrixXd> table,
                                      std::optional<double> beta) {
  if (table.empty()) throw ValidationError("generator table is empty");
  const auto d = static_cast<std::size_t>(table.front().rows());
  if (d < 1 || d > kMaxDimension) {
    throw ValidationError("generator dimension must be in [1, 64], got " + std::to_string(d));
  }
  GeneratorMap gen;
  gen.dimension_ = d;
  double max_norm = 0.0;
  for (std::size_t s = 0; s < table.size(); ++s) {
    const auto& m = table[s];
    if (static_cast<std::size_t>(m.rows()) != d || static_cast<std::size_t>(m.cols()) != d) {
      throw ValidationError("generator matrix for symbol " + std::to_string(s) + " is not " +
                            std::to_string(d) + "x" + std::to_string(d));
    }
    if (!m.allFinite()) {
      throw ValidationError("generator matrix for symbol " + std::to_string(s) + " is not finite");
    }
    max_norm = std::max(max_norm, operator_norm(m));
    gen.singular_.push_back(numerically_singular(m));
  }
  if (beta && *beta < max_norm - kBetaSlack) {
    throw ValidationError("declared beta " + format_real(*beta) +
                          " is below the largest generator norm " + format_real(max_norm));
  }
  gen.beta_ = beta.value_or(max_norm);
  gen.table_ = std::move(table);
  return gen;
}

GeneratorMap GeneratorMap::from_rule(RealStateRule rule, std::optional<double> beta) {
  const auto d = static_cast<std::size_t>(rule.base.rows());
  if (d < 1 || d > kMaxDimension || rule.base.cols() != rule.base.rows() ||
      rule.slope.rows() != rule.base.rows() || rule.slope.cols() != rule.base.cols()) {
    throw ValidationError("real-state rule needs square base and slope of equal size");
  }
  if (!(rule.lower <= rule.upper) || !std::isfinite(rule.lower) || !std::isfinite(rule.upper) ||
      !std::isfinite(rule.rate) || !rule.base.allFinite() || !rule.slope.allFinite()) {
    throw ValidationError("real-state rule has a non-finite or empty clamp interval");
  }
  // Sample the clamp interval for the declared-beta check; the analytic
  // bound is used when none is declared.
  double sampled = 0.0;
  for (int i = 0; i <= 256; ++i) {
    const double y = rule.lower + (rule.upper - rule.lower) * i / 256.0;
    sampled = std::max(sampled, operator_norm(rule.evaluate(y)));
  }
  if (beta && *beta < sampled - kBetaSlack) {
    throw ValidationError("declared beta " + format_real(*beta) +
                          " is below the sampled generator norm " + format_real(sampled));
  }
  GeneratorMap gen;
  gen.dimension_ = d;
  gen.beta_ = beta.value_or(rule.norm_bound());
  gen.rule_ = std::move(rule);
  return gen;
}

const Eigen::MatrixXd& GeneratorMap::step_matrix(Symbol s) const {
  if (!is_table()) throw LookupError("generator is a real-state rule; symbols are not defined");
  if (s >= table_.size()) {
    throw LookupError("symbol " + std::to_string(s) + " has no generator matrix");
  }
  return table_[s];
}

Eigen::MatrixXd GeneratorMap::step_matrix(double state) const {
  if (is_table()) throw LookupError("generator is a finite table; real states are not defined");
  return rule_->evaluate(state);
}

StepSequence::StepSequence(const GeneratorMap& gen, const SamplePath& path)
    : gen_(gen), path_(path) {
  if (gen.is_table() != path.is_symbolic()) {
    throw ValidationError("generator and path kinds differ (finite table vs real states)");
  }
  if (gen.is_table()) {
    const auto m = gen.table().size();
    for (Symbol s : path.symbols()) {
      if (s >= m) throw LookupError("path symbol " + std::to_string(s) + " has no generator matrix");
    }
  }
}

const Eigen::MatrixXd& StepSequence::operator()(std::size_t k) {
  if (gen_.is_table()) return gen_.table()[path_.symbols()[k]];
  scratch_ = gen_.step_matrix(path_.states()[k]);
  return scratch_;
}

bool StepSequence::may_be_singular(std::size_t k) const {
  // Real-state rules are not pre-screened; collapse is detected from R alone.
  return !gen_.is_table() || gen_.is_singular(path_.symbols()[k]);
}

double CocycleProduct::log_norm(NormKind kind) const {
  const double n = operator_norm(value, kind);
  return n == 0.0 ? kMinusInfinity : std::log(n) + log_scale;
}

Eigen::MatrixXd CocycleProduct::materialize() const { return value * std::exp(log_scale); }

CocycleProduct product(const GeneratorMap& gen, const SamplePath& path, std::size_t n) {
  return product(gen, path, 0, n);
}

CocycleProduct product(const GeneratorMap& gen, const SamplePath& path, std::size_t start,
                       std::size_t n) {
  require_range(path, start, n);
  StepSequence steps(gen, path);
  const auto d = static_cast<Eigen::Index>(gen.dimension());
  CocycleProduct out{Eigen::MatrixXd::Identity(d, d), 0.0, n};
  Eigen::MatrixXd tmp(d, d);
  for (std::size_t k = start; k < start + n; ++k) {
    tmp.noalias() = steps(k) * out.value;
    out.value.swap(tmp);
    renormalize(out.value, out.log_scale);
  }
  return out;
}

Eigen::VectorXd QRState::rates() const {
  if (steps == 0) return Eigen::VectorXd::Zero(log_r.size());
  return log_r / static_cast<double>(steps);
}

Eigen::VectorXd QRState::sorted_rates() const {
  Eigen::VectorXd r = rates();
  std::sort(r.data(), r.data() + r.size(), std::greater<>());
  return r;
}

QRState qr_accumulate(const GeneratorMap& gen, const SamplePath& path, std::size_t n,
                      std::size_t reorth_period, std::size_t start) {
  if (n < 1) throw ValidationError("qr_accumulate needs at least one step");
  if (reorth_period < 1) throw ValidationError("reorth_period must be at least 1");
  require_range(path, start, n);
  return qr_accumulate_checkpoints(gen, path, n, {n}, reorth_period, start).back();
}

std::vector<QRState> qr_accumulate_checkpoints(const GeneratorMap& gen, const SamplePath& path,
                                               std::size_t n, std::vector<std::size_t> checkpoints,
                                               std::size_t reorth_period, std::size_t start) {
  if (n < 1) throw ValidationError("qr_accumulate needs at least one step");
  if (reorth_period < 1) throw ValidationError("reorth_period must be at least 1");
  require_range(path, start, n);
  validate_checkpoints(checkpoints, n);
  StepSequence steps(gen, path);
  return accumulate(
      gen, n, reorth_period, std::move(checkpoints),
      [&](std::size_t k) -> const Eigen::MatrixXd& { return steps(start + k); },
      [&](std::size_t k) { return steps.may_be_singular(start + k); });
}

std::vector<double> log_norm_trace(const GeneratorMap& gen, const SamplePath& path,
                                   const Eigen::MatrixXd& b, std::size_t n, std::size_t start,
                                   NormKind kind) {
  require_range(path, start, n);
  if (static_cast<std::size_t>(b.rows()) != gen.dimension()) {
    throw DimensionError("trace start matrix does not match generator dimension");
  }
  StepSequence steps(gen, path);
  auto log_norm_of = [kind](const Eigen::MatrixXd& m, double scale) {
    const double v = m.cols() == 1 ? vector_norm(m.col(0), kind) : operator_norm(m, kind);
    return v == 0.0 ? kMinusInfinity : std::log(v) + scale;
  };
  std::vector<double> trace(n + 1);
  Eigen::MatrixXd running = b;
  Eigen::MatrixXd tmp(b.rows(), b.cols());
  double scale = 0.0;
  trace[0] = b.cols() == 0 ? kMinusInfinity : log_norm_of(running, scale);
  for (std::size_t k = 0; k < n; ++k) {
    tmp.noalias() = steps(start + k) * running;
    running.swap(tmp);
    renormalize(running, scale);
    trace[k + 1] = b.cols() == 0 ? kMinusInfinity : log_norm_of(running, scale);
  }
  return trace;
}

QRState qr_accumulate_adjoint(const GeneratorMap& gen, const SamplePath& path, std::size_t n,
                              std::size_t start) {
  if (n < 1) throw ValidationError("qr_accumulate_adjoint needs at least one step");
  require_range(path, start, n);
  StepSequence steps(gen, path);
  Eigen::MatrixXd transposed;
  return accumulate(
      gen, n, 1, {n},
      [&](std::size_t k) -> const Eigen::MatrixXd& {
        transposed = steps(start + n - 1 - k).transpose();
        return transposed;
      },
      [&](std::size_t k) { return steps.may_be_singular(start + n - 1 - k); })
      .back();
}

bool IdentityResidual::within(double tol) const {
  if (log_residual == kMinusInfinity) return true;
  // log(tol * (1 + N)) with N = exp(log_reference_norm), overflow-free.
  const double log_one_plus =
      log_reference_norm > 0.0 ? log_reference_norm + std::log1p(std::exp(-log_reference_norm))
                               : std::log1p(std::exp(log_reference_norm));
  return log_residual <= std::log(tol) + log_one_plus;
}

IdentityResidual cocycle_identity_residual(const GeneratorMap& gen, const SamplePath& path,
                                           std::size_t m, std::size_t n, NormKind kind) {
  require_range(path, 0, m + n);
  const CocycleProduct whole = product(gen, path, 0, m + n);
  const CocycleProduct head = product(gen, path, 0, m);
  const CocycleProduct tail = product(gen, path, m, n);

  return scaled_difference(whole.value, whole.log_scale, tail.value * head.value,
                           tail.log_scale + head.log_scale, kind);
}

IdentityResidual scaled_difference(const Eigen::MatrixXd& a, double a_scale,
                                   const Eigen::MatrixXd& b, double b_scale, NormKind kind) {
  IdentityResidual out;
  const double a_norm = operator_norm(a, kind);
  const double b_norm = operator_norm(b, kind);
  out.log_reference_norm = a_norm == 0.0 ? kMinusInfinity : std::log(a_norm) + a_scale;
  double diff_norm = 0.0;
  double scale = a_scale;
  if (a_norm == 0.0 && b_norm == 0.0) {
    diff_norm = 0.0;
  } else if (a_norm == 0.0) {
    diff_norm = b_norm;
    scale = b_scale;
  } else {
    diff_norm = operator_norm(a - std::exp(b_scale - a_scale) * b, kind);
  }
  out.log_residual = diff_norm == 0.0 ? kMinusInfinity : std::log(diff_norm) + scale;
  out.residual = std::exp(out.log_residual);
  out.reference_norm = std::exp(out.log_reference_norm);
  return out;
}

}  // namespace cocylab
