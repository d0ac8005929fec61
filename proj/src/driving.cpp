#include "cocylab/driving.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <queue>
#include <set>

#include "cocylab/errors.hpp"
#include "cocylab/format.hpp"
#include "cocylab/rng.hpp"

namespace cocylab {
namespace {

constexpr double kSimplexTol = 1e-12;

void validate_simplex(const std::vector<double>& probs, std::size_t m, const char* what) {
  if (probs.size() != m) {
    throw ValidationError(std::string(what) + ": expected " + std::to_string(m) +
                          " probabilities, got " + std::to_string(probs.size()));
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw ValidationError(std::string(what) + ": negative or non-finite probability");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSimplexTol) {
    throw ValidationError(std::string(what) + ": probabilities sum to " + format_real(sum));
  }
}

void validate_kernel(const Eigen::MatrixXd& kernel) {
  if (kernel.rows() == 0 || kernel.rows() != kernel.cols()) {
    throw ValidationError("kernel must be a non-empty square matrix");
  }
  for (Eigen::Index i = 0; i < kernel.rows(); ++i) {
    std::vector<double> row(kernel.cols());
    for (Eigen::Index j = 0; j < kernel.cols(); ++j) row[j] = kernel(i, j);
    validate_simplex(row, row.size(), ("kernel row " + std::to_string(i)).c_str());
  }
}

std::vector<double> cumulative(const std::vector<double>& probs) {
  std::vector<double> cum(probs.size());
  std::partial_sum(probs.begin(), probs.end(), cum.begin());
  return cum;
}

// Inverse-CDF draw; zero-probability symbols are never returned because the
// comparison is strict.
Symbol draw(const std::vector<double>& cum, double u) {
  for (std::size_t s = 0; s + 1 < cum.size(); ++s) {
    if (u < cum[s]) return static_cast<Symbol>(s);
  }
  // Guard against a cumulative sum that falls short of 1 by rounding: pick
  // the last symbol with positive mass.
  for (std::size_t s = cum.size(); s-- > 0;) {
    const double prev = s == 0 ? 0.0 : cum[s - 1];
    if (cum[s] > prev) return static_cast<Symbol>(s);
  }
  return 0;
}

void require_length(std::size_t n) {
  if (n < 1) throw ValidationError("sample length must be at least 1");
}

// Closed communicating classes of the support graph of `kernel`.
std::size_t count_closed_classes(const Eigen::MatrixXd& kernel) {
  const auto m = static_cast<std::size_t>(kernel.rows());
  std::vector<std::vector<bool>> reach(m, std::vector<bool>(m, false));
  for (std::size_t start = 0; start < m; ++start) {
    std::queue<std::size_t> frontier;
    frontier.push(start);
    reach[start][start] = true;
    while (!frontier.empty()) {
      const std::size_t i = frontier.front();
      frontier.pop();
      for (std::size_t j = 0; j < m; ++j) {
        if (kernel(i, j) > 0.0 && !reach[start][j]) {
          reach[start][j] = true;
          frontier.push(j);
        }
      }
    }
  }
  // A class is closed when everything reachable from it reaches back.
  std::set<std::vector<bool>> closed;
  for (std::size_t i = 0; i < m; ++i) {
    bool is_closed = true;
    for (std::size_t j = 0; j < m && is_closed; ++j) {
      if (reach[i][j] && !reach[j][i]) is_closed = false;
    }
    if (is_closed) closed.insert(reach[i]);
  }
  return closed.size();
}

double stationarity_residual(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& pi) {
  return (kernel.transpose() * pi - pi).cwiseAbs().maxCoeff();
}

}  // namespace

Alphabet::Alphabet(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  if (symbols_.empty()) throw ValidationError("alphabet must be non-empty");
  std::set<std::string> seen(symbols_.begin(), symbols_.end());
  if (seen.size() != symbols_.size()) {
    throw ValidationError("alphabet identifiers must be distinct");
  }
}

Alphabet Alphabet::indexed(std::size_t m) {
  std::vector<std::string> ids(m);
  for (std::size_t i = 0; i < m; ++i) ids[i] = std::to_string(i);
  return Alphabet(std::move(ids));
}

const std::string& Alphabet::name(Symbol s) const {
  if (s >= symbols_.size()) throw LookupError("symbol index " + std::to_string(s) + " out of alphabet");
  return symbols_[s];
}

Symbol Alphabet::index_of(const std::string& id) const {
  const auto it = std::find(symbols_.begin(), symbols_.end(), id);
  if (it == symbols_.end()) throw LookupError("unknown symbol '" + id + "'");
  return static_cast<Symbol>(it - symbols_.begin());
}

void BernoulliSpec::validate() const {
  if (alphabet.size() == 0) throw ValidationError("bernoulli: empty alphabet");
  validate_simplex(probs, alphabet.size(), "bernoulli probs");
}

void MarkovSpec::validate() const {
  if (alphabet.size() == 0) throw ValidationError("markov: empty alphabet");
  if (static_cast<std::size_t>(kernel.rows()) != alphabet.size()) {
    throw ValidationError("markov: kernel size does not match alphabet");
  }
  validate_kernel(kernel);
  validate_simplex(initial, alphabet.size(), "markov initial law");
}

MarkovSpec MarkovSpec::stationary(Alphabet alphabet, Eigen::MatrixXd kernel) {
  auto pi = stationary_distribution(kernel);
  return MarkovSpec{std::move(alphabet), std::move(kernel), std::move(pi)};
}

void GaussianWalkSpec::validate() const {
  if (!(step_stddev > 0.0) || !std::isfinite(step_stddev)) {
    throw ValidationError("gaussian walk: step_stddev must be positive");
  }
  if (!(initial_stddev >= 0.0) || !std::isfinite(initial_stddev) || !std::isfinite(initial_mean)) {
    throw ValidationError("gaussian walk: invalid initial law");
  }
}

std::vector<double> marginal_law(const DriverSpec& spec) {
  if (const auto* b = std::get_if<BernoulliSpec>(&spec)) return b->probs;
  if (const auto* m = std::get_if<MarkovSpec>(&spec)) return stationary_distribution(m->kernel);
  throw PreconditionError("the Gaussian walk has no invariant probability law");
}

bool is_stationary(const DriverSpec& spec) {
  if (std::holds_alternative<BernoulliSpec>(spec)) return true;
  if (const auto* m = std::get_if<MarkovSpec>(&spec)) {
    const auto pi = stationary_distribution(m->kernel);
    for (std::size_t i = 0; i < pi.size(); ++i) {
      if (std::abs(pi[i] - m->initial[i]) > 1e-9) return false;
    }
    return true;
  }
  return false;
}

std::string source_tag(const DriverSpec& spec) {
  if (std::holds_alternative<BernoulliSpec>(spec)) return "bernoulli";
  if (std::holds_alternative<MarkovSpec>(spec)) return "markov";
  return "gaussian_walk";
}

SamplePath::SamplePath(SymbolEntries entries, std::uint64_t seed, std::string source_tag)
    : entries_(std::move(entries)), seed_(seed), source_tag_(std::move(source_tag)) {
  if (size() == 0) throw ValidationError("sample path must be non-empty");
}

SamplePath::SamplePath(RealEntries entries, std::uint64_t seed, std::string source_tag)
    : entries_(std::move(entries)), seed_(seed), source_tag_(std::move(source_tag)) {
  if (size() == 0) throw ValidationError("sample path must be non-empty");
}

std::size_t SamplePath::size() const {
  return std::visit([](const auto& e) { return e.size(); }, entries_);
}

SamplePath sample_bernoulli(const BernoulliSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  require_length(n);
  const auto cum = cumulative(spec.probs);
  Rng rng(seed);
  std::vector<Symbol> out(n);
  for (auto& s : out) s = draw(cum, rng.uniform());
  return SamplePath(std::move(out), seed, "bernoulli");
}

SamplePath sample_markov(const MarkovSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  require_length(n);
  const std::size_t m = spec.alphabet.size();
  std::vector<std::vector<double>> rows(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> row(m);
    for (std::size_t j = 0; j < m; ++j) row[j] = spec.kernel(i, j);
    rows[i] = cumulative(row);
  }
  const auto initial = cumulative(spec.initial);
  Rng rng(seed);
  std::vector<Symbol> out(n);
  out[0] = draw(initial, rng.uniform());
  for (std::size_t k = 1; k < n; ++k) out[k] = draw(rows[out[k - 1]], rng.uniform());
  return SamplePath(std::move(out), seed, "markov");
}

SamplePath sample_gaussian_walk(const GaussianWalkSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  require_length(n);
  Rng rng(seed);
  std::vector<double> out(n);
  out[0] = spec.initial_stddev == 0.0 ? spec.initial_mean
                                      : spec.initial_mean + spec.initial_stddev * rng.normal();
  for (std::size_t k = 1; k < n; ++k) out[k] = out[k - 1] + spec.step_stddev * rng.normal();
  return SamplePath(std::move(out), seed, "gaussian_walk");
}

SamplePath sample(const DriverSpec& spec, std::size_t n, std::uint64_t seed) {
  return std::visit(
      [&](const auto& s) -> SamplePath {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, BernoulliSpec>) return sample_bernoulli(s, n, seed);
        else if constexpr (std::is_same_v<T, MarkovSpec>) return sample_markov(s, n, seed);
        else return sample_gaussian_walk(s, n, seed);
      },
      spec);
}

std::vector<double> stationary_distribution(const Eigen::MatrixXd& kernel) {
  validate_kernel(kernel);
  if (count_closed_classes(kernel) != 1) {
    throw NonUniqueStationary("kernel has more than one closed class; stationary law is not unique");
  }
  const Eigen::Index m = kernel.rows();

  // (P^T - I) pi = 0 with sum(pi) = 1 appended, solved in the least-squares
  // sense; the system is consistent, so the solution is exact up to rounding.
  Eigen::MatrixXd system(m + 1, m);
  system.topRows(m) = kernel.transpose() - Eigen::MatrixXd::Identity(m, m);
  system.row(m).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
  rhs(m) = 1.0;
  Eigen::VectorXd pi = system.colPivHouseholderQr().solve(rhs);
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();

  if (!(stationarity_residual(kernel, pi) <= 1e-12)) {
    // Power iteration on the lazy chain (P + I) / 2 converges for periodic
    // kernels too and shares the stationary law.
    const Eigen::MatrixXd lazy = 0.5 * (kernel + Eigen::MatrixXd::Identity(m, m));
    Eigen::VectorXd iterate = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    for (int it = 0; it < 1'000'000; ++it) {
      Eigen::VectorXd next = lazy.transpose() * iterate;
      next /= next.sum();
      const double change = (next - iterate).cwiseAbs().maxCoeff();
      iterate = std::move(next);
      if (change < 1e-16) break;
    }
    pi = iterate;
  }
  return {pi.data(), pi.data() + m};
}

SamplePath shift(const SamplePath& path, std::size_t k) {
  if (k >= path.size()) {
    throw RangeError("shift by " + std::to_string(k) + " on a path of length " +
                     std::to_string(path.size()));
  }
  SamplePath out = path;
  std::visit([k](auto& e) { e.erase(e.begin(), e.begin() + static_cast<std::ptrdiff_t>(k)); },
             out.entries_);
  out.offset_ = path.offset_ + k;
  return out;
}

void write_path_csv(std::ostream& out, const SamplePath& path, const Alphabet* alphabet) {
  out << "# source=" << path.source_tag() << " seed=" << path.seed() << " offset=" << path.offset()
      << " length=" << path.size() << " rng=" << Rng::kAlgorithm
      << " stationary=" << (path.source_tag() == "gaussian_walk" ? "false" : "true") << '\n';
  out << "k,x\n";
  if (path.is_symbolic()) {
    const auto& s = path.symbols();
    for (std::size_t k = 0; k < s.size(); ++k) {
      out << k << ',';
      if (alphabet) out << alphabet->name(s[k]);
      else out << s[k];
      out << '\n';
    }
  } else {
    const auto& x = path.states();
    for (std::size_t k = 0; k < x.size(); ++k) out << k << ',' << format_real(x[k]) << '\n';
  }
}

}  // namespace cocylab
