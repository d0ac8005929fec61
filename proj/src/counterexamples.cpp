#include "cocylab/counterexamples.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "cocylab/errors.hpp"
#include "cocylab/format.hpp"

namespace cocylab {

std::size_t Word::ones() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true)); }

std::string Word::text() const {
  std::string out;
  out.reserve(bits.size());
  for (bool b : bits) out.push_back(b ? '1' : '0');
  return out;
}

Word example25_word(std::size_t k) {
  if (k == 0) throw ValidationError("word generation starts at 1");
  if (k > kMaxWordGeneration) {
    throw ResourceError("generation " + std::to_string(k) +
                        " exceeds the cap of 5 (length 65535; generation 6 has 4294967295 bits)");
  }
  Word w{{true}, 1};
  while (w.generation < k) {
    const std::size_t len = w.bits.size();
    std::vector<bool> next;
    next.reserve(len * (len + 2));
    next.insert(next.end(), w.bits.begin(), w.bits.end());
    next.insert(next.end(), len * len, false);
    next.insert(next.end(), w.bits.begin(), w.bits.end());
    w.bits = std::move(next);
    ++w.generation;
  }
  return w;
}

GeneratorMap example25_generator() {
  Eigen::MatrixXd a1 = Eigen::MatrixXd::Identity(2, 2);
  a1(0, 0) = 0.5;
  return GeneratorMap::from_table({Eigen::MatrixXd::Identity(2, 2), a1});
}

SamplePath example25_path(const Word& word) {
  SamplePath::SymbolEntries s(word.bits.begin(), word.bits.end());
  return SamplePath(std::move(s), 0, "word:generation=" + std::to_string(word.generation));
}

std::vector<TrajectoryPoint> example25_trajectory(std::size_t k, const Eigen::VectorXd& v) {
  if (v.size() != 2) throw DimensionError("trajectory vector must be in R^2");
  if (v.isZero(0.0)) throw ValidationError("trajectory vector must be nonzero");
  const Word w = example25_word(k);
  // Both matrices are diagonal: only the first coordinate ever changes, and
  // halving is exact in binary floating point.
  Eigen::Vector2d x = v;
  std::vector<TrajectoryPoint> out;
  out.reserve(w.size());
  for (std::size_t n = 1; n <= w.size(); ++n) {
    if (w.bits[n - 1]) x(0) *= 0.5;
    const double norm = x.norm();
    out.push_back({n, norm, std::log(norm) / static_cast<double>(n)});
  }
  return out;
}

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryPoint>& series) {
  out << "n,norm,exponent\n";
  for (const auto& p : series) {
    out << p.n << ',' << format_real(p.norm) << ',' << format_real(p.exponent) << '\n';
  }
}

std::vector<GainPoint> jordan_min_gain(std::size_t n_max) {
  if (n_max == 0) throw ValidationError("jordan_min_gain needs n_max >= 1");
  std::vector<GainPoint> out;
  out.reserve(n_max + 1);
  for (std::size_t n = 0; n <= n_max; ++n) {
    // Singular values of [[1, n], [0, 1]] are (sqrt(n^2 + 4) +- n) / 2; the
    // small one is written as a quotient to avoid cancellation.
    const double x = static_cast<double>(n);
    const double big = 0.5 * (std::hypot(x, 2.0) + x);
    out.push_back({n, 1.0 / big, big});
  }
  return out;
}

}  // namespace cocylab
