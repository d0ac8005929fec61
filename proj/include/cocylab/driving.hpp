#pragma once

// Stationary symbol processes driving a cocycle: Bernoulli and Markov shifts
// over finite alphabets, and a real-valued Gaussian random walk. A sample
// path is a finite prefix x_0, x_1, ..., x_{n-1}; the driving map is the
// left shift.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace cocylab {

// Index into an Alphabet.
using Symbol = std::uint32_t;

class Alphabet {
 public:
  Alphabet() = default;
  // Throws ValidationError when empty or when identifiers repeat.
  explicit Alphabet(std::vector<std::string> symbols);

  // Alphabet {"0", "1", ..., "m-1"}.
  static Alphabet indexed(std::size_t m);

  std::size_t size() const { return symbols_.size(); }
  const std::string& name(Symbol s) const;
  // Throws LookupError for unknown identifiers.
  Symbol index_of(const std::string& id) const;
  const std::vector<std::string>& symbols() const { return symbols_; }

  bool operator==(const Alphabet&) const = default;

 private:
  std::vector<std::string> symbols_;
};

struct BernoulliSpec {
  Alphabet alphabet;
  std::vector<double> probs;

  void validate() const;
};

struct MarkovSpec {
  Alphabet alphabet;
  Eigen::MatrixXd kernel;  // row-stochastic, m x m
  std::vector<double> initial;

  void validate() const;
  // Markov chain started from its stationary law.
  static MarkovSpec stationary(Alphabet alphabet, Eigen::MatrixXd kernel);
};

struct GaussianWalkSpec {
  double initial_mean = 0.0;
  double initial_stddev = 0.0;
  double step_stddev = 1.0;

  void validate() const;
};

using DriverSpec = std::variant<BernoulliSpec, MarkovSpec, GaussianWalkSpec>;

// Stationary law of the driver's one-dimensional marginal. Throws
// PreconditionError for the Gaussian walk, which has none.
std::vector<double> marginal_law(const DriverSpec& spec);
bool is_stationary(const DriverSpec& spec);
std::string source_tag(const DriverSpec& spec);

class SamplePath {
 public:
  using SymbolEntries = std::vector<Symbol>;
  using RealEntries = std::vector<double>;

  SamplePath(SymbolEntries entries, std::uint64_t seed, std::string source_tag);
  SamplePath(RealEntries entries, std::uint64_t seed, std::string source_tag);

  std::size_t size() const;
  bool is_symbolic() const { return std::holds_alternative<SymbolEntries>(entries_); }
  // Throws std::bad_variant_access on a mismatched kind.
  const SymbolEntries& symbols() const { return std::get<SymbolEntries>(entries_); }
  const RealEntries& states() const { return std::get<RealEntries>(entries_); }

  std::uint64_t seed() const { return seed_; }
  const std::string& source_tag() const { return source_tag_; }
  // Offset of this path's first entry in the path it was shifted from.
  std::size_t offset() const { return offset_; }

  bool operator==(const SamplePath&) const = default;

  friend SamplePath shift(const SamplePath& path, std::size_t k);

 private:
  std::variant<SymbolEntries, RealEntries> entries_;
  std::uint64_t seed_ = 0;
  std::string source_tag_;
  std::size_t offset_ = 0;
};

SamplePath sample_bernoulli(const BernoulliSpec& spec, std::size_t n, std::uint64_t seed);
SamplePath sample_markov(const MarkovSpec& spec, std::size_t n, std::uint64_t seed);
SamplePath sample_gaussian_walk(const GaussianWalkSpec& spec, std::size_t n,
                                std::uint64_t seed);
SamplePath sample(const DriverSpec& spec, std::size_t n, std::uint64_t seed);

// Unique stationary law of a row-stochastic kernel. Throws ValidationError
// for a non-stochastic kernel and NonUniqueStationary when the support graph
// has more than one closed communicating class.
std::vector<double> stationary_distribution(const Eigen::MatrixXd& kernel);

// T^k: drops the first k entries. Throws RangeError unless k < size().
SamplePath shift(const SamplePath& path, std::size_t k);

// One entry per row after a "# key=value ..." metadata comment and a header
// row. Symbols are written by identifier when an alphabet is given.
void write_path_csv(std::ostream& out, const SamplePath& path, const Alphabet* alphabet = nullptr);

}  // namespace cocylab
