#include "cocylab/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "cocylab/errors.hpp"
#include "cocylab/format.hpp"
#include "cocylab/rng.hpp"

namespace cocylab {
namespace {

constexpr std::size_t kMinSpectrumHorizon = 100;

std::vector<double> ascending(const Eigen::VectorXd& v) {
  std::vector<double> out(v.data(), v.data() + v.size());
  std::sort(out.begin(), out.end());
  return out;
}

// Levels V^(1) ⊂ ... ⊂ V^(s) from an adjoint QR state: the columns of q
// ordered by decreasing growth, with level i spanned by the trailing
// multiplicities[0] + ... + multiplicities[i-1] columns.
std::vector<Subspace> levels_from_adjoint(const QRState& adjoint,
                                          const std::vector<std::size_t>& multiplicities) {
  const auto d = static_cast<std::size_t>(adjoint.q.rows());
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return adjoint.log_r(a) > adjoint.log_r(b); });
  std::vector<Subspace> levels;
  std::size_t cumulative = 0;
  for (std::size_t mult : multiplicities) {
    cumulative += mult;
    Eigen::MatrixXd basis(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(cumulative));
    for (std::size_t j = 0; j < cumulative; ++j) {
      basis.col(static_cast<Eigen::Index>(j)) = adjoint.q.col(static_cast<Eigen::Index>(order[d - cumulative + j]));
    }
    levels.push_back(Subspace::from_orthonormal(std::move(basis)));
  }
  return levels;
}

// Per column: max over k in [burn_in, n] of log ||A(k) c|| - weight k.
std::vector<double> windowed_log_sup(const GeneratorMap& gen, const SamplePath& path, double weight,
                                     const Eigen::MatrixXd& columns, std::size_t burn_in,
                                     std::size_t n) {
  StepSequence steps(gen, path);
  const Eigen::Index count = columns.cols();
  Eigen::MatrixXd running = columns;
  Eigen::MatrixXd tmp(running.rows(), count);
  std::vector<double> scale(static_cast<std::size_t>(count), 0.0);
  std::vector<double> best(static_cast<std::size_t>(count), kMinusInfinity);
  auto observe = [&](std::size_t k) {
    for (Eigen::Index j = 0; j < count; ++j) {
      const double norm = running.col(j).norm();
      if (norm == 0.0) continue;
      const double value = std::log(norm) + scale[j] - weight * static_cast<double>(k);
      best[j] = std::max(best[j], value);
    }
  };
  if (burn_in == 0) observe(0);
  for (std::size_t k = 1; k <= n; ++k) {
    tmp.noalias() = steps(k - 1) * running;
    running.swap(tmp);
    for (Eigen::Index j = 0; j < count; ++j) {
      const double norm = running.col(j).norm();
      if (norm != 0.0 && (norm > 1e100 || norm < 1e-100)) {
        int e = 0;
        std::frexp(norm, &e);
        running.col(j) *= std::ldexp(1.0, -e);
        scale[j] += e * std::numbers::ln2;
      }
    }
    if (k >= burn_in) observe(k);
  }
  return best;
}

Eigen::VectorXd random_unit_in(const Subspace& s, Rng& rng) {
  Eigen::VectorXd c(static_cast<Eigen::Index>(s.dim()));
  for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = rng.normal();
  Eigen::VectorXd v = s.basis() * c;
  const double norm = v.norm();
  return norm == 0.0 ? Eigen::VectorXd(s.basis().col(0)) : Eigen::VectorXd(v / norm);
}

}  // namespace

ExponentGroups group_exponents(std::vector<double> raw, double gap_threshold) {
  if (raw.empty()) throw ValidationError("no exponents to group");
  if (!(gap_threshold > 0.0)) throw ValidationError("gap_threshold must be positive");
  std::sort(raw.begin(), raw.end());
  ExponentGroups out;
  std::size_t i = 0;
  std::size_t collapsed = 0;
  while (i < raw.size() && raw[i] == kMinusInfinity) {
    ++collapsed;
    ++i;
  }
  if (collapsed > 0) {
    out.exponents.push_back(kMinusInfinity);
    out.multiplicities.push_back(collapsed);
  }
  while (i < raw.size()) {
    std::size_t j = i + 1;
    while (j < raw.size() && raw[j] - raw[j - 1] < gap_threshold) ++j;
    const double sum = std::accumulate(raw.begin() + static_cast<std::ptrdiff_t>(i),
                                       raw.begin() + static_cast<std::ptrdiff_t>(j), 0.0);
    out.exponents.push_back(sum / static_cast<double>(j - i));
    out.multiplicities.push_back(j - i);
    out.max_spread = std::max(out.max_spread, raw[j - 1] - raw[i]);
    i = j;
  }
  return out;
}

LyapunovSpectrum spectrum(const GeneratorMap& gen, const SamplePath& path, std::size_t n,
                          double gap_threshold, std::size_t reorth_period, std::size_t start) {
  if (n < kMinSpectrumHorizon) {
    throw ValidationError("spectrum horizon must be at least 100, got " + std::to_string(n));
  }
  const auto states = qr_accumulate_checkpoints(gen, path, n, {n / 2, n}, reorth_period, start);
  LyapunovSpectrum out;
  out.horizon = n;
  out.gap_threshold = gap_threshold;
  out.raw_half = ascending(states.front().rates());
  out.raw = ascending(states.back().rates());
  auto groups = group_exponents(out.raw, gap_threshold);
  out.exponents = std::move(groups.exponents);
  out.multiplicities = std::move(groups.multiplicities);
  out.max_group_spread = groups.max_spread;
  return out;
}

DirectionalExponent directional_exponent(const GeneratorMap& gen, const SamplePath& path,
                                         const Eigen::VectorXd& v, std::size_t n,
                                         std::size_t tail_window, std::size_t start) {
  if (n < 1) throw ValidationError("directional exponent needs n >= 1");
  if (static_cast<std::size_t>(v.size()) != gen.dimension()) {
    throw DimensionError("vector does not match generator dimension");
  }
  DirectionalExponent out;
  out.v = v;
  out.horizon = n;
  const std::size_t window = std::clamp<std::size_t>(tail_window == 0 ? n / 10 : tail_window, 1, n);
  out.tail_start = n - window + 1;
  if (v.isZero(0.0)) {
    out.tail.assign(window, kMinusInfinity);
    return out;
  }
  const auto trace = log_norm_trace(gen, path, v.normalized(), n, start);
  out.value = trace[n] / static_cast<double>(n);
  for (std::size_t k = out.tail_start; k <= n; ++k) {
    out.tail.push_back(trace[k] / static_cast<double>(k));
  }
  return out;
}

FiltrationEstimate filtration_estimate(const GeneratorMap& gen, const SamplePath& path,
                                       std::size_t n, double gap_threshold, std::size_t start) {
  LyapunovSpectrum spec = spectrum(gen, path, n, gap_threshold, 1, start);
  if (spec.max_group_spread > gap_threshold) {
    std::string raw;
    for (double r : spec.raw) raw += (raw.empty() ? "" : ", ") + format_real(r);
    throw UngroupableSpectrum("exponent groups chain wider than the gap threshold " +
                              format_real(gap_threshold) + "; raw rates: [" + raw + "]");
  }
  const auto levels = levels_from_adjoint(qr_accumulate_adjoint(gen, path, n, start), spec.multiplicities);
  const auto half = levels_from_adjoint(qr_accumulate_adjoint(gen, path, n / 2, start), spec.multiplicities);
  std::vector<double> convergence;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    convergence.push_back(hausdorff_distance(levels[i], half[i]));
  }
  Flag flag(levels, spec.exponents);
  return FiltrationEstimate{std::move(flag), std::move(spec), std::move(convergence)};
}

double LimsupStats::max() const {
  return log_running_max.empty() ? 0.0 : std::exp(log_running_max.back());
}

double LimsupStats::tail_min() const { return std::exp(log_tail_min); }

LimsupStats limsup_stats(const GeneratorMap& gen, const SamplePath& path, double weight,
                         const LimsupTarget& target, std::size_t burn_in, std::size_t n,
                         std::size_t start) {
  if (!(n > burn_in)) throw ValidationError("limsup window needs n > burn_in");
  const Eigen::MatrixXd b = std::visit(
      [](const auto& t) -> Eigen::MatrixXd {
        if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Subspace>) return t.basis();
        else return t;
      },
      target);
  const auto trace = log_norm_trace(gen, path, b, n, start);
  LimsupStats out;
  out.argmax = burn_in;
  out.weight = weight;
  out.window_begin = burn_in;
  out.window_end = n;
  double running = kMinusInfinity;
  double lowest = std::numeric_limits<double>::infinity();
  for (std::size_t k = burn_in; k <= n; ++k) {
    const double weighted =
        trace[k] == kMinusInfinity ? kMinusInfinity : trace[k] - weight * static_cast<double>(k);
    if (weighted > running) {
      running = weighted;
      out.argmax = k;
    }
    if (weighted < lowest) {
      lowest = weighted;
      out.argmin = k;
    }
    out.log_running_max.push_back(running);
  }
  out.log_tail_min = lowest;
  return out;
}

NonshrinkingWitness find_nonshrinking_vector(const GeneratorMap& gen, const SamplePath& path,
                                             double weight, const Subspace& level,
                                             const Subspace& previous, std::size_t n,
                                             const NonshrinkingSearch& options) {
  if (previous.dim() >= level.dim() || !subspace_contains(level, previous).contained) {
    throw PreconditionError("previous level must be a proper subspace of the level");
  }
  if (n < 1) throw ValidationError("search horizon must be at least 1");
  const std::size_t burn_in = options.burn_in == 0 ? n / 10 : options.burn_in;
  if (burn_in >= n) throw ValidationError("burn-in must be below the horizon");

  const Subspace block = intersect_with_complement(level, previous);
  const auto q = static_cast<Eigen::Index>(block.dim());
  const auto d = static_cast<Eigen::Index>(level.ambient());

  // Candidates in block coordinates: the block axes, projected ambient axes,
  // and random directions.
  std::vector<Eigen::VectorXd> coeffs;
  for (Eigen::Index j = 0; j < q; ++j) coeffs.push_back(Eigen::VectorXd::Unit(q, j));
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::VectorXd c = block.basis().row(j).transpose();
    if (c.norm() > 1e-6) coeffs.push_back(c.normalized());
  }
  Rng rng(options.seed);
  for (std::size_t t = 0; t < options.random_trials; ++t) {
    Eigen::VectorXd c(q);
    for (Eigen::Index i = 0; i < q; ++i) c(i) = rng.normal();
    if (c.norm() > 0.0) coeffs.push_back(c.normalized());
  }

  auto evaluate = [&](const std::vector<Eigen::VectorXd>& cs) {
    Eigen::MatrixXd cols(d, static_cast<Eigen::Index>(cs.size()));
    for (std::size_t j = 0; j < cs.size(); ++j) cols.col(static_cast<Eigen::Index>(j)) = block.basis() * cs[j];
    return windowed_log_sup(gen, path, weight, cols, burn_in, n);
  };

  std::size_t evaluated = coeffs.size();
  auto sups = evaluate(coeffs);
  const auto best_it = std::max_element(sups.begin(), sups.end());
  Eigen::VectorXd best = coeffs[static_cast<std::size_t>(best_it - sups.begin())];
  double best_sup = *best_it;

  // Coordinate ascent on the unit sphere of the block.
  if (q >= 2) {
    for (double h = 0.25; h > 1e-3;) {
      std::vector<Eigen::VectorXd> moves;
      for (Eigen::Index i = 0; i < q; ++i) {
        for (double sign : {1.0, -1.0}) {
          Eigen::VectorXd c = best;
          c(i) += sign * h;
          if (c.norm() > 0.0) moves.push_back(c.normalized());
        }
      }
      evaluated += moves.size();
      const auto move_sups = evaluate(moves);
      const auto it = std::max_element(move_sups.begin(), move_sups.end());
      if (*it > best_sup) {
        best_sup = *it;
        best = moves[static_cast<std::size_t>(it - move_sups.begin())];
      } else {
        h /= 2.0;
      }
    }
  }

  NonshrinkingWitness out;
  out.v = block.basis() * best;
  out.weighted_sup = std::exp(best_sup);
  out.certified = out.weighted_sup >= 1.0 - options.tolerance;
  out.candidates = evaluated;
  out.stats = limsup_stats(gen, path, weight, out.v, burn_in, n);
  return out;
}

bool MetReport::passed() const {
  for (const MetCheck* c : {&stable_exponents, &unstable_exponents, &nonvanishing, &norm_sup,
                            &invariance, &dimension}) {
    if (c->applicable && !c->passed) return false;
  }
  return true;
}

MetReport verify_met(const GeneratorMap& gen, const SamplePath& path, std::size_t n,
                     double gap_threshold, const MetTolerances& tol) {
  if (path.size() < n + 1) {
    throw RangeError("verify_met needs a path of length n + 1 = " + std::to_string(n + 1));
  }
  auto at_x = filtration_estimate(gen, path, n, gap_threshold, 0);
  auto at_tx = filtration_estimate(gen, path, n, gap_threshold, 1);
  const std::size_t d = gen.dimension();
  const std::size_t burn_in = n / 10;

  std::size_t stable_levels = 0;
  for (double label : at_x.flag.labels()) {
    if (label < 0.0) ++stable_levels;
  }
  Subspace stable = at_x.flag.level(stable_levels);

  MetReport report{std::move(at_x.spectrum), at_x.flag, at_tx.flag, stable, {}, {}, {}, {}, {}, {}, {}};
  Rng rng(tol.seed);

  // Directional exponents on the stable space.
  auto& se = report.stable_exponents;
  se.applicable = stable.dim() > 0;
  se.value = kMinusInfinity;
  if (se.applicable) {
    std::vector<Eigen::VectorXd> samples;
    for (Eigen::Index j = 0; j < stable.basis().cols(); ++j) samples.push_back(stable.basis().col(j));
    for (std::size_t t = 0; t < tol.samples; ++t) samples.push_back(random_unit_in(stable, rng));
    for (const auto& v : samples) {
      se.value = std::max(se.value, directional_exponent(gen, path, v, n).value);
    }
    se.passed = se.value < 0.0;
  }

  // Off the stable space: exponents, non-vanishing trajectories, and the
  // windowed operator norm.
  auto& ue = report.unstable_exponents;
  auto& nv = report.nonvanishing;
  auto& ns = report.norm_sup;
  ue.applicable = nv.applicable = ns.applicable = stable.dim() < d;
  if (ue.applicable) {
    const Subspace complement = orthogonal_complement(stable);
    std::vector<Eigen::VectorXd> samples;
    for (Eigen::Index j = 0; j < complement.basis().cols(); ++j) samples.push_back(complement.basis().col(j));
    const Subspace ambient = Subspace::full(d);
    for (std::size_t t = 0; t < tol.samples; ++t) {
      Eigen::VectorXd v = random_unit_in(ambient, rng);
      for (int retry = 0; retry < 100 && stable.distance(v) <= 0.1; ++retry) v = random_unit_in(ambient, rng);
      if (stable.distance(v) > 0.1) samples.push_back(v);
    }
    ue.value = std::numeric_limits<double>::infinity();
    nv.value = std::numeric_limits<double>::infinity();
    for (const auto& v : samples) {
      const auto trace = log_norm_trace(gen, path, v, n);
      ue.value = std::min(ue.value, trace[n] / static_cast<double>(n));
      const double sup = *std::max_element(trace.begin() + static_cast<std::ptrdiff_t>(burn_in), trace.end());
      nv.value = std::min(nv.value, sup);
    }
    ue.passed = ue.value >= -tol.epsilon;
    nv.passed = nv.value >= std::log(tol.epsilon);

    const auto norms = log_norm_trace(gen, path, Eigen::MatrixXd::Identity(d, d), n);
    ns.value = *std::max_element(norms.begin() + static_cast<std::ptrdiff_t>(burn_in), norms.end());
    ns.passed = ns.value >= std::log(1.0 - tol.epsilon);
  }

  // Invariance of the filtration under one step of the cocycle.
  StepSequence steps(gen, path);
  const Eigen::MatrixXd first = steps(0);
  auto& inv = report.invariance;
  const std::size_t common = std::min(report.flag.size(), report.shifted_flag.size());
  for (std::size_t i = 1; i <= common; ++i) {
    const Subspace image = image_subspace(first, report.flag.level(i));
    const double residual = subspace_contains(report.shifted_flag.level(i), image).residual;
    report.invariance_residuals.push_back(residual);
    inv.value = std::max(inv.value, residual);
  }
  inv.passed = inv.value <= tol.invariance_tol;

  auto& dim = report.dimension;
  dim.passed = report.flag.dims() == report.shifted_flag.dims();
  dim.value = dim.passed ? 0.0 : 1.0;
  return report;
}

std::vector<BlockMap> induced_block_cocycle(const GeneratorMap& gen, const SamplePath& path,
                                            const Flag& at_x, const Flag& at_target, std::size_t n,
                                            std::size_t start) {
  if (at_x.dims() != at_target.dims() || at_x.ambient() != gen.dimension()) {
    throw InvarianceError("flag dimensions differ along the orbit");
  }
  const CocycleProduct a = product(gen, path, start, n);
  std::vector<BlockMap> out;
  for (std::size_t i = 1; i <= at_x.size(); ++i) {
    const Subspace from = at_x.block(i);
    const Subspace to = at_target.block(i);
    out.push_back(BlockMap{to.basis().transpose() * a.value * from.basis(), a.log_scale});
  }
  return out;
}

std::vector<IdentityResidual> block_cocycle_residual(const GeneratorMap& gen,
                                                     const SamplePath& path, const Flag& at_x,
                                                     const Flag& at_m, const Flag& at_m_plus_n,
                                                     std::size_t m, std::size_t n) {
  const auto whole = induced_block_cocycle(gen, path, at_x, at_m_plus_n, m + n, 0);
  const auto head = induced_block_cocycle(gen, path, at_x, at_m, m, 0);
  const auto tail = induced_block_cocycle(gen, path, at_m, at_m_plus_n, n, m);
  std::vector<IdentityResidual> out;
  for (std::size_t i = 0; i < whole.size(); ++i) {
    out.push_back(scaled_difference(whole[i].value, whole[i].log_scale, tail[i].value * head[i].value,
                                    tail[i].log_scale + head[i].log_scale));
  }
  return out;
}

}  // namespace cocylab
