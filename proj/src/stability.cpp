#include "cocylab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cocylab/errors.hpp"
#include "cocylab/parallel.hpp"
#include "cocylab/rng.hpp"

namespace cocylab {
namespace {

// Uniform on the simplex: normalized exponentials.
std::vector<double> dirichlet_one(Rng& rng, std::size_t m) {
  std::vector<double> w(m);
  double total = 0.0;
  for (auto& x : w) {
    x = -std::log1p(-rng.uniform());
    total += x;
  }
  for (auto& x : w) x /= total;
  return w;
}

// Stationary average of log |A_s(0, 0)|; -inf if a symbol of positive weight
// kills e_1.
double diagonal_rate(const std::vector<Eigen::MatrixXd>& table, const std::vector<double>& law) {
  double rate = 0.0;
  for (std::size_t s = 0; s < table.size(); ++s) {
    if (law[s] == 0.0) continue;
    const double a = std::abs(table[s](0, 0));
    if (a == 0.0) return kMinusInfinity;
    rate += law[s] * std::log(a);
  }
  return rate;
}

}  // namespace

Proportion wilson(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) throw ValidationError("a proportion needs at least one trial");
  Proportion p;
  p.successes = successes;
  p.trials = trials;
  const double n = static_cast<double>(trials);
  p.fraction = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (p.fraction + z2 / (2.0 * n)) / (1.0 + z2 / n);
  p.half_width = z * std::sqrt(p.fraction * (1.0 - p.fraction) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
  p.lower = successes == 0 ? 0.0 : std::max(0.0, centre - p.half_width);
  p.upper = successes == trials ? 1.0 : std::min(1.0, centre + p.half_width);
  return p;
}

StabilityVerdict conditional_stability(const GeneratorMap& gen, const DriverSpec& driver,
                                       const Subspace& l, const StabilityOptions& options) {
  if (options.trials < 30) throw ValidationError("conditional_stability needs at least 30 trials");
  if (options.horizon < 1000) throw ValidationError("conditional_stability needs N >= 1000");
  if (!(options.norm_threshold > 0.0)) throw ValidationError("norm_threshold must be positive");
  if (l.ambient() != gen.dimension()) throw DimensionError("subspace does not match generator");

  StabilityVerdict out;
  out.trials = options.trials;
  out.horizon = options.horizon;
  out.rate_margin = options.rate_margin;
  out.norm_threshold = options.norm_threshold;
  out.paths.resize(options.trials);
  const double log_threshold = std::log(options.norm_threshold);
  const Eigen::MatrixXd basis = l.basis();
  const std::size_t n = options.horizon;

  parallel_for(options.trials, [&](std::size_t t) {
    StabilityPath p;
    p.seed = derive_seed(options.seed, t);
    if (l.dim() == 0) {
      p.log_norm = p.log_norm_half = p.rate = kMinusInfinity;
    } else {
      const SamplePath path = sample(driver, n, p.seed);
      // Restricted norm taken directly; L need not be invariant.
      const auto trace = log_norm_trace(gen, path, basis, n);
      p.log_norm = trace[n];
      p.log_norm_half = trace[n / 2];
      p.rate = p.log_norm / static_cast<double>(n);
    }
    const bool decreasing = p.log_norm == kMinusInfinity || p.log_norm < p.log_norm_half;
    p.lyapunov = p.log_norm <= log_threshold && decreasing;
    p.exponential = p.rate <= -options.rate_margin;
    out.paths[t] = p;
  });

  std::size_t lyap = 0, expo = 0;
  for (const auto& p : out.paths) {
    lyap += p.lyapunov ? 1 : 0;
    expo += p.exponential ? 1 : 0;
  }
  out.lyapunov = wilson(lyap, options.trials);
  out.exponential = wilson(expo, options.trials);
  return out;
}

DiagonalInstance random_diagonal_instance(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t m = 2 + rng.next_u64() % 2;
  std::vector<Eigen::MatrixXd> table;
  std::ostringstream desc;
  for (std::size_t s = 0; s < m; ++s) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
    for (int i = 0; i < 2; ++i) {
      const double mag = std::exp(2.0 * rng.uniform() - 1.0);
      a(i, i) = (rng.next_u64() & 1) ? -mag : mag;
    }
    table.push_back(a);
  }
  const bool markov = rng.next_u64() & 1;
  const Alphabet alphabet = Alphabet::indexed(m);
  std::vector<double> law;
  DriverSpec driver;
  if (markov) {
    Eigen::MatrixXd kernel(m, m);
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = dirichlet_one(rng, m);
      for (std::size_t j = 0; j < m; ++j) kernel(i, j) = row[j];
    }
    auto spec = MarkovSpec::stationary(alphabet, kernel);
    law = spec.initial;
    driver = std::move(spec);
    desc << "markov";
  } else {
    law = dirichlet_one(rng, m);
    driver = BernoulliSpec{alphabet, law};
    desc << "bernoulli";
  }
  desc << " m=" << m;
  const double rate = diagonal_rate(table, law);
  return DiagonalInstance{seed, GeneratorMap::from_table(std::move(table)), std::move(driver), rate,
                          desc.str()};
}

DiagonalInstance diagonal_instance(std::vector<Eigen::MatrixXd> table, std::vector<double> probs) {
  BernoulliSpec spec{Alphabet::indexed(probs.size()), probs};
  spec.validate();
  for (const auto& a : table) {
    if (a.rows() != 2 || a.cols() != 2 || a(0, 1) != 0.0 || a(1, 0) != 0.0) {
      throw ValidationError("diagonal instances take 2x2 diagonal matrices");
    }
  }
  const double rate = diagonal_rate(table, probs);
  return DiagonalInstance{0, GeneratorMap::from_table(std::move(table)), std::move(spec), rate,
                          "explicit bernoulli"};
}

EquivalenceReport equivalence_check(const std::vector<DiagonalInstance>& instances,
                                    const StabilityOptions& options) {
  EquivalenceReport report;
  report.instances = instances.size();
  const Subspace l = Subspace::axis(2, 0);
  for (const auto& inst : instances) {
    StabilityOptions opt = options;
    opt.seed = derive_seed(inst.seed ^ options.seed, 1);
    const auto verdict = conditional_stability(inst.gen, inst.driver, l, opt);
    InstanceOutcome o;
    o.seed = inst.seed;
    o.description = inst.description;
    o.true_rate = inst.true_rate;
    double sum = 0.0;
    std::size_t finite = 0;
    for (const auto& p : verdict.paths) {
      if (std::isfinite(p.rate)) {
        sum += p.rate;
        ++finite;
      }
    }
    o.fitted_rate = finite == 0 ? kMinusInfinity : sum / static_cast<double>(finite);
    o.lyapunov_positive = verdict.lyapunov.positive();
    o.exponential_positive = verdict.exponential.positive();
    o.boundary = std::abs(o.true_rate) < options.rate_margin ||
                 std::abs(o.fitted_rate) < options.rate_margin;
    report.outcomes.push_back(o);
    if (o.boundary) {
      report.boundary.push_back(o);
      continue;
    }
    ++report.evaluated;
    if (o.agree()) {
      ++report.agreements;
    } else {
      report.disagreements.push_back(o);
    }
  }
  report.agreement = report.evaluated == 0
                         ? 1.0
                         : static_cast<double>(report.agreements) / static_cast<double>(report.evaluated);
  return report;
}

void CostFunction::validate() const {
  if (!(delta > 0.0)) throw ValidationError("cost delta must be positive");
  if (kind == Kind::Norm && !(gamma >= 1.0)) {
    throw ValidationError("V(u) = ||u|| needs gamma >= 1");
  }
  if (kind == Kind::Quadratic && !(std::isfinite(delta) && gamma >= delta)) {
    throw ValidationError("V(u) = ||u||^2 needs a finite delta and gamma >= delta");
  }
}

double CostFunction::operator()(double norm) const {
  return kind == Kind::Norm ? norm : norm * norm;
}

double CostFunction::from_log_norm(double log_norm) const {
  if (log_norm == kMinusInfinity) return 0.0;
  return std::exp(kind == Kind::Norm ? log_norm : 2.0 * log_norm);
}

CostReport cost_index(const GeneratorMap& gen, const SamplePath& path, const Eigen::VectorXd& u,
                      const CostFunction& v, std::size_t truncation) {
  v.validate();
  if (truncation < 2) throw ValidationError("cost truncation must be at least 2");
  if (static_cast<std::size_t>(u.size()) != gen.dimension()) {
    throw DimensionError("u does not match generator dimension");
  }
  CostReport out;
  out.u = u;
  out.truncation = truncation;
  out.gamma = v.gamma;
  out.delta = v.delta;

  const std::size_t n = truncation;
  const auto trace = log_norm_trace(gen, path, u, n);
  out.partial_sums.resize(n + 1);
  double sum = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    sum += v.from_log_norm(trace[k]);
    out.partial_sums[k] = sum;
  }

  const std::size_t lo = n / 2;
  if (std::any_of(trace.begin() + static_cast<std::ptrdiff_t>(lo), trace.end(),
                  [](double x) { return x == kMinusInfinity; })) {
    // Collapsed: every later term is V(0) = 0.
    out.fitted_rate = kMinusInfinity;
    out.certified = true;
    out.tail_bound = 0.0;
  } else {
    const double count = static_cast<double>(n - lo + 1);
    double mean_k = 0.0, mean_l = 0.0;
    for (std::size_t k = lo; k <= n; ++k) {
      mean_k += static_cast<double>(k);
      mean_l += trace[k];
    }
    mean_k /= count;
    mean_l /= count;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = lo; k <= n; ++k) {
      const double dk = static_cast<double>(k) - mean_k;
      sxy += dk * (trace[k] - mean_l);
      sxx += dk * dk;
    }
    out.fitted_rate = sxy / sxx;
    const double slow = 0.5 * out.fitted_rate;
    double anchor = kMinusInfinity;
    for (std::size_t k = lo; k <= n; ++k) {
      anchor = std::max(anchor, trace[k] - slow * (static_cast<double>(k) - static_cast<double>(n)));
    }
    out.certified = out.fitted_rate < -kCostRateMargin && std::exp(anchor) <= v.delta;
    out.tail_bound = out.certified
                         ? v.gamma * std::exp(anchor + slow) / -std::expm1(slow)
                         : std::numeric_limits<double>::infinity();
  }
  out.divergent = !out.certified;
  out.total = out.partial_sums[n] + out.tail_bound;
  return out;
}

OptimalCost optimal_cost_estimate(const GeneratorMap& gen, const DriverSpec& driver,
                                  const Eigen::VectorXd& u, const CostFunction& v,
                                  std::size_t truncation, std::size_t trials, std::uint64_t seed) {
  v.validate();
  OptimalCost out;
  out.trials = trials;
  out.truncation = truncation;
  if (trials < 1) throw ValidationError("optimal cost needs at least one trial");
  if (u.isZero(0.0)) {
    out.running_min.assign(trials, 0.0);
    out.argmin_seed = derive_seed(seed, 0);
    return out;
  }
  StabilityOptions opt;
  opt.horizon = truncation;
  opt.trials = std::max<std::size_t>(trials, 30);
  opt.seed = seed;
  const auto verdict = conditional_stability(gen, driver, Subspace::span(u), opt);
  if (!verdict.exponential.positive()) {
    out.divergent = true;
    out.estimate = std::numeric_limits<double>::infinity();
    out.running_min.assign(trials, out.estimate);
    return out;
  }
  std::vector<double> totals(trials);
  parallel_for(trials, [&](std::size_t t) {
    const SamplePath path = sample(driver, truncation, derive_seed(seed, t));
    totals[t] = cost_index(gen, path, u, v, truncation).total;
  });
  out.running_min.resize(trials);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < trials; ++t) {
    if (totals[t] < best) {
      best = totals[t];
      out.argmin = t;
    }
    out.running_min[t] = best;
  }
  out.estimate = best;
  out.argmin_seed = derive_seed(seed, out.argmin);
  return out;
}

}  // namespace cocylab
