#include "cocylab/subadditive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cocylab/errors.hpp"
#include "cocylab/parallel.hpp"
#include "cocylab/rng.hpp"

namespace cocylab {
namespace {

// Integer multiples of a common step h, or nothing.
std::optional<std::vector<long long>> lattice_steps(const std::vector<double>& f, double& h) {
  h = 0.0;
  for (double v : f) {
    if (v != 0.0 && (h == 0.0 || std::abs(v) < h)) h = std::abs(v);
  }
  std::vector<long long> steps;
  if (h == 0.0) {
    steps.assign(f.size(), 0);
    return steps;
  }
  for (double v : f) {
    const double ratio = v / h;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-12 || std::abs(rounded) > 1e9) return std::nullopt;
    steps.push_back(static_cast<long long>(rounded));
  }
  return steps;
}

}  // namespace

SeriesSource::SeriesSource(std::string tag, std::size_t path_length, Evaluator evaluator)
    : tag_(std::move(tag)), path_length_(path_length), evaluator_(std::move(evaluator)) {}

std::vector<double> SeriesSource::values(std::size_t start, std::size_t n) const {
  if (start > path_length_ || n > path_length_ - start) {
    throw RangeError("series evaluation beyond the path: " + std::to_string(start) + "+" +
                     std::to_string(n) + " > " + std::to_string(path_length_));
  }
  return evaluator_(start, n);
}

SeriesSource log_norm_series(const GeneratorMap& gen, const SamplePath& path, const Subspace& l) {
  if (l.ambient() != gen.dimension()) throw DimensionError("subspace does not match generator");
  const Eigen::MatrixXd basis = l.basis();
  return SeriesSource("log restricted operator norm on L", path.size(),
                      [&gen, &path, basis](std::size_t start, std::size_t n) {
                        auto trace = log_norm_trace(gen, path, basis, n, start);
                        return std::vector<double>(trace.begin() + 1, trace.end());
                      });
}

SeriesSource additive_series(const SamplePath& path, std::vector<double> per_symbol) {
  return SeriesSource("additive", path.size(),
                      [&path, g = std::move(per_symbol)](std::size_t start, std::size_t n) {
                        const auto& s = path.symbols();
                        std::vector<double> out(n);
                        double sum = 0.0;
                        for (std::size_t k = 0; k < n; ++k) {
                          sum += g.at(s[start + k]);
                          out[k] = sum;
                        }
                        return out;
                      });
}

SubadditiveSeries materialize(const SeriesSource& source, std::size_t n,
                              std::optional<double> residual) {
  if (n < 2) throw ValidationError("a subadditive series needs at least two terms");
  return SubadditiveSeries{source.values(0, n), source.tag(), residual};
}

double subadditivity_residual(const SeriesSource& source,
                              const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  double worst = kMinusInfinity;
  for (const auto& [m, n] : pairs) {
    if (m < 1 || n < 1) throw ValidationError("subadditivity pairs need m, n >= 1");
    const auto head = source.values(0, m + n);
    const double whole = head[m + n - 1];
    const double first = head[m - 1];
    const double second = source.values(m, n)[n - 1];
    double residual = 0.0;
    if (whole == kMinusInfinity) {
      residual = kMinusInfinity;
    } else if (first == kMinusInfinity || second == kMinusInfinity) {
      residual = std::numeric_limits<double>::infinity();
    } else {
      residual = whole - second - first;
    }
    worst = std::max(worst, residual);
  }
  return worst;
}

std::vector<std::pair<std::size_t, std::size_t>> random_pairs(std::size_t horizon,
                                                              std::size_t count,
                                                              std::uint64_t seed) {
  if (horizon < 2) throw ValidationError("pairs need a horizon of at least 2");
  Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t m = 1 + rng.next_u64() % (horizon - 1);
    const std::size_t n = 1 + rng.next_u64() % (horizon - m);
    out.emplace_back(m, n);
  }
  return out;
}

KingmanEstimate kingman_limit(const SubadditiveSeries& series, double convergence_tol) {
  const std::size_t big_n = series.size();
  if (big_n < 2) throw ValidationError("kingman_limit needs at least two terms");
  KingmanEstimate out;
  out.authoritative = series.subadditivity_residual.has_value() &&
                      *series.subadditivity_residual <= kSubadditivityTol;
  const std::size_t lo = std::max<std::size_t>(1, big_n / 2);
  bool collapsed = false;
  for (std::size_t n = lo; n <= big_n; ++n) collapsed = collapsed || series.f(n) == kMinusInfinity;
  if (collapsed || series.f(big_n) == kMinusInfinity) {
    out.value = out.tail_slope = kMinusInfinity;
    out.converged = true;
    return out;
  }
  out.value = series.f(big_n) / static_cast<double>(big_n);

  // Least-squares slope, centred for conditioning.
  const double count = static_cast<double>(big_n - lo + 1);
  double mean_n = 0.0, mean_f = 0.0;
  for (std::size_t n = lo; n <= big_n; ++n) {
    mean_n += static_cast<double>(n);
    mean_f += series.f(n);
  }
  mean_n /= count;
  mean_f /= count;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t n = lo; n <= big_n; ++n) {
    const double dx = static_cast<double>(n) - mean_n;
    sxy += dx * (series.f(n) - mean_f);
    sxx += dx * dx;
  }
  out.tail_slope = sxx == 0.0 ? out.value : sxy / sxx;
  out.converged = std::abs(out.value - out.tail_slope) <= convergence_tol;
  return out;
}

bool is_invariant(const GeneratorMap& gen, const Subspace& l) {
  if (l.ambient() != gen.dimension()) throw DimensionError("subspace does not match generator");
  auto maps_into = [&](const Eigen::MatrixXd& m) {
    return subspace_contains(l, Subspace::span(m * l.basis())).contained;
  };
  if (gen.is_table()) {
    return std::all_of(gen.table().begin(), gen.table().end(), maps_into);
  }
  for (int i = -64; i <= 64; ++i) {
    if (!maps_into(gen.step_matrix(static_cast<double>(i) / 8.0))) return false;
  }
  return true;
}

SignEquivalence sign_equivalence_trial(const GeneratorMap& gen, const DriverSpec& driver,
                                       const Subspace& l, std::size_t horizon, std::size_t trials,
                                       std::uint64_t base_seed, double margin) {
  if (!is_invariant(gen, l)) {
    throw PreconditionError("L is not invariant under the step matrices; f_n need not be subadditive");
  }
  if (horizon < 2 || trials < 1) throw ValidationError("sign trial needs horizon >= 2 and trials >= 1");
  SignEquivalence out;
  out.trials = trials;
  out.margin = margin;
  out.paths.resize(trials);
  parallel_for(trials, [&](std::size_t t) {
    const std::uint64_t seed = derive_seed(base_seed, t);
    const SamplePath path = sample(driver, horizon, seed);
    const auto series = materialize(log_norm_series(gen, path, l), horizon);
    const std::size_t lo = std::max<std::size_t>(1, horizon / 2);
    double limsup = kMinusInfinity;
    for (std::size_t n = lo; n <= horizon; ++n) limsup = std::max(limsup, series.f(n));
    SignTrialPath p;
    p.seed = seed;
    p.limsup_estimate = limsup;
    p.limit = kingman_limit(series).value;
    p.limsup_negative = limsup < -margin;
    p.limit_negative = p.limit < -margin;
    out.paths[t] = p;
  });
  for (const auto& p : out.paths) {
    if (p.limsup_negative != p.limit_negative) ++out.disagreements;
  }
  out.agreement = 1.0 - static_cast<double>(out.disagreements) / static_cast<double>(trials);
  return out;
}

Recurrence atkinson_recurrence(const std::vector<double>& f, const DriverSpec& driver,
                               std::size_t horizon, std::size_t trials, double epsilon,
                               std::uint64_t base_seed) {
  const auto law = marginal_law(driver);
  if (f.size() != law.size()) throw ValidationError("f must assign one value per symbol");
  double mean = 0.0, second = 0.0;
  for (std::size_t s = 0; s < f.size(); ++s) {
    mean += law[s] * f[s];
    second += law[s] * f[s] * f[s];
  }
  if (std::abs(mean) > 1e-12) {
    throw PreconditionError("f must have zero mean under the stationary law");
  }
  if (horizon < 2 || trials < 1) throw ValidationError("recurrence needs horizon >= 2 and trials >= 1");

  double h = 0.0;
  const auto lattice = lattice_steps(f, h);
  Recurrence out;
  out.trials = trials;
  out.lattice = lattice.has_value();
  out.epsilon = epsilon >= 0.0 ? epsilon : (out.lattice ? 1e-9 : 0.05 * std::sqrt(second - mean * mean));

  std::vector<char> returned(trials, 0);
  parallel_for(trials, [&](std::size_t t) {
    const SamplePath path = sample(driver, horizon, derive_seed(base_seed, t));
    const auto& s = path.symbols();
    bool hit = false;
    if (lattice) {
      // Exact integer walk; |S_k| = |count| * h.
      long long count = (*lattice)[s[0]];
      for (std::size_t k = 2; k <= horizon && !hit; ++k) {
        count += (*lattice)[s[k - 1]];
        hit = static_cast<double>(std::llabs(count)) * h <= out.epsilon;
      }
    } else {
      double sum = f[s[0]];
      for (std::size_t k = 2; k <= horizon && !hit; ++k) {
        sum += f[s[k - 1]];
        hit = std::abs(sum) <= out.epsilon;
      }
    }
    returned[t] = hit ? 1 : 0;
  });
  out.returned = static_cast<std::size_t>(std::count(returned.begin(), returned.end(), 1));
  out.fraction = static_cast<double>(out.returned) / static_cast<double>(trials);
  return out;
}

}  // namespace cocylab
