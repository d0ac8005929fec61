#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "cocylab/cocycle.hpp"
#include "cocylab/counterexamples.hpp"
#include "cocylab/driving.hpp"
#include "cocylab/errors.hpp"
#include "cocylab/format.hpp"
#include "cocylab/grassmann.hpp"
#include "cocylab/lyapunov.hpp"
#include "cocylab/parallel.hpp"
#include "cocylab/rng.hpp"
#include "cocylab/stability.hpp"
#include "cocylab/subadditive.hpp"

namespace cocylab::cli {

using nlohmann::json;

ConfigError::ConfigError(const std::string& source, std::size_t line, const std::string& message)
    : std::invalid_argument(source + ":" + std::to_string(line) + ": " + message), line_(line) {}

// ---------------------------------------------------------------------------
// Line index. The text has already been accepted by the JSON parser, so the
// scanner only needs to track structure, not report syntax errors.

namespace {

class Scanner {
 public:
  Scanner(std::string_view text, std::map<std::string, std::size_t>& out) : text_(text), out_(out) {}

  void value(const std::string& ptr) {
    skip_ws();
    if (pos_ >= text_.size()) return;
    if (!out_.count(ptr)) out_[ptr] = line_;
    const char c = text_[pos_];
    if (c == '{') {
      ++pos_;
      skip_ws();
      if (peek() == '}') {
        ++pos_;
        return;
      }
      while (pos_ < text_.size()) {
        skip_ws();
        const std::size_t key_line = line_;
        const std::string key = string();
        const std::string child = ptr + "/" + escape(key);
        out_[child] = key_line;
        skip_ws();
        ++pos_;  // ':'
        value(child);
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        ++pos_;  // '}'
        return;
      }
    } else if (c == '[') {
      ++pos_;
      skip_ws();
      if (peek() == ']') {
        ++pos_;
        return;
      }
      for (std::size_t i = 0; pos_ < text_.size(); ++i) {
        value(ptr + "/" + std::to_string(i));
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        ++pos_;  // ']'
        return;
      }
    } else if (c == '"') {
      string();
    } else {
      while (pos_ < text_.size() && std::string_view(",]} \t\r\n").find(text_[pos_]) == std::string_view::npos) {
        ++pos_;
      }
    }
  }

 private:
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < text_.size() && std::string_view(" \t\r\n").find(text_[pos_]) != std::string_view::npos) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }

  // Raw key text; escapes are kept verbatim except \" and \\, which is
  // enough for the keys a config uses.
  std::string string() {
    std::string s;
    ++pos_;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) {
        ++pos_;
        if (text_[pos_] != '"' && text_[pos_] != '\\') s.push_back('\\');
      }
      s.push_back(text_[pos_++]);
    }
    ++pos_;
    return s;
  }

  static std::string escape(const std::string& key) {
    std::string out;
    for (char c : key) {
      if (c == '~') {
        out += "~0";
      } else if (c == '/') {
        out += "~1";
      } else {
        out.push_back(c);
      }
    }
    return out;
  }

  std::string_view text_;
  std::map<std::string, std::size_t>& out_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace

LineIndex::LineIndex(std::string_view text) {
  Scanner scanner(text, lines_);
  scanner.value("");
}

std::size_t LineIndex::line(const std::string& pointer) const {
  std::string p = pointer;
  while (true) {
    if (auto it = lines_.find(p); it != lines_.end()) return it->second;
    if (p.empty()) return 1;
    p.erase(p.rfind('/'));
  }
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < length; ++i) {
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return out.str();
}

namespace {

// ---------------------------------------------------------------------------
// Schema reading.

struct Document {
  std::string source;
  json root;
  LineIndex index;
};

class Node {
 public:
  Node(const Document& doc, const json& value, std::string pointer)
      : doc_(&doc), value_(&value), pointer_(std::move(pointer)) {}

  [[noreturn]] void fail(const std::string& message) const {
    const std::string where = pointer_.empty() ? "document" : pointer_;
    throw ConfigError(doc_->source, doc_->index.line(pointer_), where + ": " + message);
  }

  const json& raw() const { return *value_; }
  const std::string& pointer() const { return pointer_; }

  void require_object() const {
    if (!value_->is_object()) fail("expected an object");
  }

  void allow_only(std::initializer_list<std::string_view> keys) const {
    require_object();
    for (const auto& [k, v] : value_->items()) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
        child(k).fail("unknown key");
      }
    }
  }

  bool has(const std::string& key) const { return value_->contains(key); }

  Node child(const std::string& key) const { return Node(*doc_, value_->at(key), pointer_ + "/" + key); }

  Node at(const std::string& key) const {
    require_object();
    if (!value_->contains(key)) fail("missing required key \"" + key + "\"");
    return child(key);
  }

  std::optional<Node> find(const std::string& key) const {
    require_object();
    if (!value_->contains(key)) return std::nullopt;
    return child(key);
  }

  std::vector<Node> items() const {
    if (!value_->is_array()) fail("expected an array");
    std::vector<Node> out;
    for (std::size_t i = 0; i < value_->size(); ++i) {
      out.emplace_back(*doc_, (*value_)[i], pointer_ + "/" + std::to_string(i));
    }
    return out;
  }

  double real() const {
    if (!value_->is_number()) fail("expected a number");
    const double x = value_->get<double>();
    if (!std::isfinite(x)) fail("expected a finite number");
    return x;
  }

  std::uint64_t u64() const {
    if (!value_->is_number_unsigned()) fail("expected a nonnegative integer");
    return value_->get<std::uint64_t>();
  }

  std::size_t count(std::size_t min = 0) const {
    const std::uint64_t x = u64();
    if (x < min) fail("must be at least " + std::to_string(min));
    return static_cast<std::size_t>(x);
  }

  std::string string() const {
    if (!value_->is_string()) fail("expected a string");
    return value_->get<std::string>();
  }

  std::vector<double> reals() const {
    std::vector<double> out;
    for (const auto& n : items()) out.push_back(n.real());
    if (out.empty()) fail("expected a non-empty array");
    return out;
  }

  Eigen::VectorXd vector() const {
    const auto r = reals();
    return Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
  }

  Eigen::MatrixXd matrix() const {
    const auto rows = items();
    if (rows.empty()) fail("expected a non-empty matrix");
    const auto first = rows[0].reals();
    Eigen::MatrixXd m(rows.size(), first.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = rows[i].reals();
      if (r.size() != first.size()) rows[i].fail("ragged matrix row");
      for (std::size_t j = 0; j < r.size(); ++j) m(i, j) = r[j];
    }
    return m;
  }

 private:
  const Document* doc_;
  const json* value_;
  std::string pointer_;
};

template <class Fn>
auto guarded(const Node& node, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    node.fail(e.what());
  }
}

double opt_real(const Node& params, const std::string& key, double fallback) {
  auto n = params.find(key);
  return n ? n->real() : fallback;
}

std::size_t opt_count(const Node& params, const std::string& key, std::size_t fallback,
                      std::size_t min = 0) {
  auto n = params.find(key);
  return n ? n->count(min) : fallback;
}

DriverSpec parse_driver(const Node& node) {
  const std::string kind = node.at("kind").string();
  if (kind == "bernoulli") {
    node.allow_only({"kind", "probs", "symbols"});
    const auto probs = node.at("probs").reals();
    return guarded(node, [&]() -> DriverSpec {
      std::vector<std::string> names;
      if (auto s = node.find("symbols")) {
        for (const auto& item : s->items()) names.push_back(item.string());
      }
      BernoulliSpec spec{names.empty() ? Alphabet::indexed(probs.size()) : Alphabet(names), probs};
      spec.validate();
      return spec;
    });
  }
  if (kind == "markov") {
    node.allow_only({"kind", "kernel", "initial", "symbols"});
    const Eigen::MatrixXd kernel = node.at("kernel").matrix();
    std::vector<std::string> names;
    if (auto s = node.find("symbols")) {
      for (const auto& item : s->items()) names.push_back(item.string());
    }
    std::optional<std::vector<double>> initial;
    if (auto i = node.find("initial")) {
      if (i->raw().is_string()) {
        if (i->string() != "stationary") i->fail("expected \"stationary\" or a probability vector");
      } else {
        initial = i->reals();
      }
    }
    return guarded(node, [&]() -> DriverSpec {
      Alphabet alphabet = names.empty() ? Alphabet::indexed(static_cast<std::size_t>(kernel.rows()))
                                        : Alphabet(names);
      if (!initial) return MarkovSpec::stationary(alphabet, kernel);
      MarkovSpec spec{alphabet, kernel, *initial};
      spec.validate();
      return spec;
    });
  }
  if (kind == "gaussian_walk") {
    node.allow_only({"kind", "initial_mean", "initial_stddev", "step_stddev"});
    GaussianWalkSpec spec;
    spec.initial_mean = opt_real(node, "initial_mean", 0.0);
    spec.initial_stddev = opt_real(node, "initial_stddev", 0.0);
    spec.step_stddev = opt_real(node, "step_stddev", 1.0);
    return guarded(node, [&]() -> DriverSpec {
      spec.validate();
      return spec;
    });
  }
  node.child("kind").fail("unknown driver kind \"" + kind + "\"");
}

GeneratorMap parse_generator(const Node& node, const DriverSpec& driver) {
  node.allow_only({"table", "rule", "beta"});
  std::optional<double> beta;
  if (auto b = node.find("beta")) beta = b->real();
  if (node.has("table") == node.has("rule")) node.fail("give exactly one of \"table\" or \"rule\"");
  if (auto t = node.find("table")) {
    std::vector<Eigen::MatrixXd> table;
    for (const auto& item : t->items()) table.push_back(item.matrix());
    if (std::holds_alternative<GaussianWalkSpec>(driver)) {
      t->fail("a finite table needs a symbolic driver");
    }
    const std::size_t m = std::visit(
        [](const auto& s) -> std::size_t {
          if constexpr (std::is_same_v<std::decay_t<decltype(s)>, GaussianWalkSpec>) {
            return 0;
          } else {
            return s.alphabet.size();
          }
        },
        driver);
    if (table.size() != m) {
      t->fail("table has " + std::to_string(table.size()) + " matrices for " + std::to_string(m) +
              " symbols");
    }
    return guarded(*t, [&] { return GeneratorMap::from_table(std::move(table), beta); });
  }
  const Node r = node.at("rule");
  r.allow_only({"base", "slope", "rate", "lower", "upper"});
  if (!std::holds_alternative<GaussianWalkSpec>(driver)) {
    r.fail("a state rule needs the gaussian_walk driver");
  }
  RealStateRule rule;
  rule.base = r.at("base").matrix();
  rule.slope = r.has("slope") ? r.at("slope").matrix() : Eigen::MatrixXd::Zero(rule.base.rows(), rule.base.cols());
  rule.rate = opt_real(r, "rate", 0.0);
  rule.lower = opt_real(r, "lower", -1.0);
  rule.upper = opt_real(r, "upper", 1.0);
  return guarded(r, [&] { return GeneratorMap::from_rule(std::move(rule), beta); });
}

Subspace parse_subspace(const Node& node, std::size_t d) {
  const auto vectors = node.items();
  if (vectors.empty()) return Subspace::zero(d);
  Eigen::MatrixXd m(d, vectors.size());
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    const Eigen::VectorXd v = vectors[j].vector();
    if (static_cast<std::size_t>(v.size()) != d) vectors[j].fail("vector length must be " + std::to_string(d));
    m.col(static_cast<Eigen::Index>(j)) = v;
  }
  return Subspace::span(m);
}

// ---------------------------------------------------------------------------
// Output helpers.

json jreal(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

json jreals(const std::vector<double>& xs) {
  json a = json::array();
  for (double x : xs) a.push_back(jreal(x));
  return a;
}

json jvector(const Eigen::VectorXd& v) {
  return jreals(std::vector<double>(v.data(), v.data() + v.size()));
}

json jmatrix_columns(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index j = 0; j < m.cols(); ++j) a.push_back(jvector(m.col(j)));
  return a;
}

std::string csv_real(double x) { return format_real(x); }

struct Outcome {
  json report;
  std::string series;
  std::size_t steps = 0;
  int status = kOk;
};

struct Context {
  std::string subcommand;
  const Node* params = nullptr;  // may be null (counterexample without config)
  std::optional<GeneratorMap> gen;
  std::optional<DriverSpec> driver;
  std::uint64_t seed = 0;
  std::optional<std::size_t> generation;
};

// Each subcommand reads its parameters first (validation, may throw) and
// returns the computation as a deferred job.
using Job = std::function<Outcome()>;

const Node& params_of(const Context& ctx) { return *ctx.params; }

Job plan_spectrum(const Context& ctx) {
  const Node& p = params_of(ctx);
  p.allow_only({"horizon", "gap_threshold", "reorth_period"});
  const std::size_t n = p.at("horizon").count(100);
  const double gap = opt_real(p, "gap_threshold", kDefaultGapThreshold);
  const std::size_t reorth = opt_count(p, "reorth_period", 1, 1);
  return [=, &ctx] {
    const SamplePath path = sample(*ctx.driver, n, ctx.seed);
    const auto sp = spectrum(*ctx.gen, path, n, gap, reorth);
    Outcome o;
    o.report = {{"horizon", n},
                {"seed", ctx.seed},
                {"gap_threshold", gap},
                {"exponents", jreals(sp.exponents)},
                {"multiplicities", sp.multiplicities},
                {"raw", jreals(sp.raw)},
                {"raw_half", jreals(sp.raw_half)},
                {"max_group_spread", jreal(sp.max_group_spread)}};
    std::ostringstream csv;
    csv << "index,raw,raw_half\n";
    for (std::size_t i = 0; i < sp.raw.size(); ++i) {
      csv << i << ',' << csv_real(sp.raw[i]) << ',' << csv_real(sp.raw_half[i]) << '\n';
    }
    o.series = csv.str();
    o.steps = n;
    return o;
  };
}

Job plan_filtration(const Context& ctx) {
  const Node& p = params_of(ctx);
  p.allow_only({"horizon", "gap_threshold"});
  const std::size_t n = p.at("horizon").count(100);
  const double gap = opt_real(p, "gap_threshold", kDefaultGapThreshold);
  return [=, &ctx] {
    const SamplePath path = sample(*ctx.driver, n, ctx.seed);
    const auto fe = filtration_estimate(*ctx.gen, path, n, gap);
    Outcome o;
    json levels = json::array();
    std::ostringstream csv;
    csv << "level,dimension,label,convergence\n";
    for (std::size_t i = 1; i <= fe.flag.size(); ++i) {
      const Subspace lv = fe.flag.level(i);
      const double label = fe.flag.labels().at(i - 1);
      const double conv = fe.level_convergence.at(i - 1);
      levels.push_back({{"dimension", lv.dim()},
                        {"label", jreal(label)},
                        {"convergence", jreal(conv)},
                        {"basis", jmatrix_columns(lv.basis())}});
      csv << i << ',' << lv.dim() << ',' << csv_real(label) << ',' << csv_real(conv) << '\n';
    }
    o.report = {{"horizon", n},
                {"seed", ctx.seed},
                {"gap_threshold", gap},
                {"exponents", jreals(fe.spectrum.exponents)},
                {"levels", levels},
                {"complete", fe.flag.is_complete()}};
    o.series = csv.str();
    o.steps = 2 * n;
    return o;
  };
}

Job plan_verify_met(const Context& ctx) {
  const Node& p = params_of(ctx);
  p.allow_only({"horizon", "gap_threshold", "epsilon", "trials", "pass_threshold"});
  const std::size_t n = p.at("horizon").count(100);
  const double gap = opt_real(p, "gap_threshold", kDefaultGapThreshold);
  MetTolerances tol;
  tol.epsilon = opt_real(p, "epsilon", tol.epsilon);
  const std::size_t trials = opt_count(p, "trials", 1, 1);
  const double threshold = opt_real(p, "pass_threshold", 0.99);
  return [=, &ctx] {
    std::vector<std::optional<MetReport>> reports(trials);
    std::vector<std::uint64_t> seeds(trials);
    parallel_for(trials, [&](std::size_t t) {
      seeds[t] = trials == 1 ? ctx.seed : derive_seed(ctx.seed, t);
      const SamplePath path = sample(*ctx.driver, n + 1, seeds[t]);
      MetTolerances local = tol;
      local.seed = seeds[t];
      reports[t] = verify_met(*ctx.gen, path, n, gap, local);
    });
    auto check = [](const MetCheck& c) {
      return json{{"applicable", c.applicable}, {"passed", c.passed}, {"value", jreal(c.value)}};
    };
    json per = json::array();
    std::ostringstream csv;
    csv << "trial,seed,passed,stable_exponents,unstable_exponents,nonvanishing,norm_sup,invariance,"
           "dimension\n";
    std::size_t passed = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      const MetReport& r = *reports[t];
      passed += r.passed() ? 1 : 0;
      per.push_back({{"seed", seeds[t]},
                     {"passed", r.passed()},
                     {"exponents", jreals(r.spectrum.exponents)},
                     {"stable_dimension", r.stable.dim()},
                     {"stable_exponents", check(r.stable_exponents)},
                     {"unstable_exponents", check(r.unstable_exponents)},
                     {"nonvanishing", check(r.nonvanishing)},
                     {"norm_sup", check(r.norm_sup)},
                     {"invariance", check(r.invariance)},
                     {"invariance_residuals", jreals(r.invariance_residuals)},
                     {"dimension", check(r.dimension)}});
      csv << t << ',' << seeds[t] << ',' << (r.passed() ? 1 : 0) << ','
          << csv_real(r.stable_exponents.value) << ',' << csv_real(r.unstable_exponents.value) << ','
          << csv_real(r.nonvanishing.value) << ',' << csv_real(r.norm_sup.value) << ','
          << csv_real(r.invariance.value) << ',' << csv_real(r.dimension.value) << '\n';
    }
    const double rate = static_cast<double>(passed) / static_cast<double>(trials);
    Outcome o;
    o.report = {{"horizon", n},
                {"seed", ctx.seed},
                {"epsilon", tol.epsilon},
                {"trials", trials},
                {"pass_rate", rate},
                {"pass_threshold", threshold},
                {"passed", rate >= threshold},
                {"per_trial", per}};
    o.series = csv.str();
    o.steps = trials * 3 * n;
    o.status = rate >= threshold ? kOk : kCheckFailure;
    return o;
  };
}

Job plan_subadditive(const Context& ctx) {
  const Node& p = params_of(ctx);
  const std::string mode = p.has("mode") ? p.at("mode").string() : "sign";
  const std::size_t d = ctx.gen->dimension();
  if (mode == "recurrence") {
    p.allow_only({"mode", "horizon", "trials", "f", "epsilon"});
    const std::size_t n = p.at("horizon").count(2);
    const std::size_t trials = opt_count(p, "trials", 1, 1);
    const auto f = p.at("f").reals();
    const double eps = opt_real(p, "epsilon", -1.0);
    // Surface the zero-mean precondition before any work.
    guarded(p.at("f"), [&] { return atkinson_recurrence(f, *ctx.driver, 2, 1, eps, ctx.seed); });
    return [=, &ctx] {
      const auto r = atkinson_recurrence(f, *ctx.driver, n, trials, eps, ctx.seed);
      const SamplePath path = sample(*ctx.driver, n, derive_seed(ctx.seed, 0));
      std::ostringstream csv;
      csv << "k,partial_sum\n";
      double s = 0.0;
      for (std::size_t k = 1; k <= n; ++k) {
        s += f[path.symbols()[k - 1]];
        csv << k << ',' << csv_real(s) << '\n';
      }
      Outcome o;
      o.report = {{"mode", mode},     {"horizon", n},         {"seed", ctx.seed},
                  {"trials", trials}, {"epsilon", r.epsilon}, {"lattice", r.lattice},
                  {"returned", r.returned}, {"fraction", r.fraction}};
      o.series = csv.str();
      o.steps = trials * n;
      return o;
    };
  }
  if (mode != "sign") p.child("mode").fail("mode must be \"sign\" or \"recurrence\"");
  p.allow_only({"mode", "horizon", "trials", "subspace", "margin", "pairs"});
  const std::size_t n = p.at("horizon").count(2);
  const std::size_t trials = opt_count(p, "trials", 1, 1);
  const Subspace l = p.has("subspace") ? parse_subspace(p.at("subspace"), d) : Subspace::full(d);
  const double margin = opt_real(p, "margin", kSignMargin);
  const std::size_t pairs = opt_count(p, "pairs", 50);
  if (p.has("subspace")) {
    const Node s = p.at("subspace");
    if (!guarded(s, [&] { return is_invariant(*ctx.gen, l); })) {
      s.fail("L is not invariant under the step matrices");
    }
  }
  return [=, &ctx] {
    const auto trial = sign_equivalence_trial(*ctx.gen, *ctx.driver, l, n, trials, ctx.seed, margin);
    const SamplePath path = sample(*ctx.driver, n, derive_seed(ctx.seed, 0));
    const auto source = log_norm_series(*ctx.gen, path, l);
    const double residual =
        pairs == 0 ? kMinusInfinity : subadditivity_residual(source, random_pairs(n, pairs, ctx.seed));
    const auto series = materialize(source, n, pairs == 0 ? std::nullopt : std::optional(residual));
    const auto k = kingman_limit(series);
    json per = json::array();
    for (const auto& tp : trial.paths) {
      per.push_back({{"seed", tp.seed},
                     {"limsup_estimate", jreal(tp.limsup_estimate)},
                     {"limit", jreal(tp.limit)},
                     {"limsup_negative", tp.limsup_negative},
                     {"limit_negative", tp.limit_negative}});
    }
    std::ostringstream csv;
    csv << "n,f_n,f_n_over_n\n";
    for (std::size_t i = 1; i <= n; ++i) {
      csv << i << ',' << csv_real(series.f(i)) << ',' << csv_real(series.f(i) / static_cast<double>(i))
          << '\n';
    }
    Outcome o;
    o.report = {{"mode", mode},
                {"horizon", n},
                {"seed", ctx.seed},
                {"subspace_dimension", l.dim()},
                {"margin", margin},
                {"agreement", trial.agreement},
                {"trials", trial.trials},
                {"disagreements", trial.disagreements},
                {"first_path",
                 {{"subadditivity_residual", jreal(residual)},
                  {"kingman_limit", jreal(k.value)},
                  {"tail_slope", jreal(k.tail_slope)},
                  {"converged", k.converged},
                  {"authoritative", k.authoritative}}},
                {"per_trial", per}};
    o.series = csv.str();
    o.steps = (trials + 1 + 2 * pairs) * n;
    return o;
  };
}

Job plan_counterexample(const Context& ctx) {
  std::size_t generation = 4;
  Eigen::VectorXd v = Eigen::Vector2d(1.0, 0.0);
  std::size_t n_max = 1000;
  if (ctx.params) {
    const Node& p = *ctx.params;
    p.allow_only({"generation", "vector", "jordan_n_max"});
    if (auto g = p.find("generation")) {
      generation = g->count(1);
      if (generation > kMaxWordGeneration) g->fail("generation above 5 exceeds the length cap");
    }
    if (auto x = p.find("vector")) {
      v = x->vector();
      if (v.size() != 2 || v.isZero(0.0)) x->fail("expected a nonzero vector in R^2");
    }
    n_max = opt_count(p, "jordan_n_max", n_max, 1);
  }
  if (ctx.generation) generation = *ctx.generation;
  if (generation < 1 || generation > kMaxWordGeneration) {
    throw ValidationError("--generation must be in [1, 5]");
  }
  return [=] {
    const Word w = example25_word(generation);
    const auto traj = example25_trajectory(generation, v);
    json by_generation = json::array();
    for (std::size_t k = 1; k <= generation; ++k) {
      const std::size_t len = example25_word(k).size();
      by_generation.push_back({{"generation", k},
                               {"length", len},
                               {"norm", jreal(traj[len - 1].norm)},
                               {"exponent", jreal(traj[len - 1].exponent)}});
    }
    const auto gains = jordan_min_gain(n_max);
    double unimodular = 0.0;
    for (const auto& g : gains) unimodular = std::max(unimodular, std::abs(g.min_gain * g.max_gain - 1.0));
    Outcome o;
    o.report = {{"generation", generation},
                {"length", w.size()},
                {"ones", w.ones()},
                {"vector", jvector(v)},
                {"final_norm", jreal(traj.back().norm)},
                {"final_exponent", jreal(traj.back().exponent)},
                {"by_generation", by_generation},
                {"jordan",
                 {{"n_max", n_max},
                  {"min_gain", jreal(gains.back().min_gain)},
                  {"max_gain", jreal(gains.back().max_gain)},
                  {"max_unimodularity_error", jreal(unimodular)}}}};
    std::ostringstream csv;
    write_trajectory_csv(csv, traj);
    o.series = csv.str();
    o.steps = w.size();
    return o;
  };
}

StabilityOptions stability_options(const Node& p, std::uint64_t seed, std::size_t default_trials) {
  StabilityOptions opt;
  opt.horizon = opt_count(p, "horizon", opt.horizon, 1000);
  opt.trials = opt_count(p, "trials", default_trials, 30);
  opt.rate_margin = opt_real(p, "rate_margin", opt.rate_margin);
  opt.norm_threshold = opt_real(p, "norm_threshold", opt.norm_threshold);
  if (!(opt.norm_threshold > 0.0)) p.child("norm_threshold").fail("must be positive");
  opt.seed = seed;
  return opt;
}

json proportion_json(const Proportion& pr) {
  return {{"successes", pr.successes}, {"trials", pr.trials},   {"fraction", pr.fraction},
          {"half_width", pr.half_width}, {"lower", pr.lower},   {"upper", pr.upper},
          {"positive", pr.positive()}};
}

json outcome_json(const InstanceOutcome& o) {
  return {{"seed", o.seed},
          {"description", o.description},
          {"true_rate", jreal(o.true_rate)},
          {"fitted_rate", jreal(o.fitted_rate)},
          {"lyapunov_positive", o.lyapunov_positive},
          {"exponential_positive", o.exponential_positive},
          {"boundary", o.boundary}};
}

Job plan_stability(const Context& ctx) {
  const Node& p = params_of(ctx);
  const std::string mode = p.has("mode") ? p.at("mode").string() : "conditional";
  if (mode == "equivalence") {
    p.allow_only({"mode", "instances", "horizon", "trials", "rate_margin", "norm_threshold",
                  "agreement_threshold"});
    const std::size_t count = opt_count(p, "instances", 200, 1);
    const StabilityOptions opt = stability_options(p, ctx.seed, 30);
    const double threshold = opt_real(p, "agreement_threshold", 0.99);
    return [=, &ctx] {
      std::vector<DiagonalInstance> instances;
      for (std::size_t i = 0; i < count; ++i) {
        instances.push_back(random_diagonal_instance(derive_seed(ctx.seed, i)));
      }
      const auto rep = equivalence_check(instances, opt);
      json dis = json::array(), band = json::array();
      for (const auto& o : rep.disagreements) dis.push_back(outcome_json(o));
      for (const auto& o : rep.boundary) band.push_back(outcome_json(o));
      std::ostringstream csv;
      csv << "instance,seed,true_rate,fitted_rate,lyapunov_positive,exponential_positive,boundary\n";
      for (std::size_t i = 0; i < rep.outcomes.size(); ++i) {
        const auto& o = rep.outcomes[i];
        csv << i << ',' << o.seed << ',' << csv_real(o.true_rate) << ',' << csv_real(o.fitted_rate)
            << ',' << o.lyapunov_positive << ',' << o.exponential_positive << ',' << o.boundary << '\n';
      }
      Outcome out;
      out.report = {{"mode", mode},
                    {"seed", ctx.seed},
                    {"instances", rep.instances},
                    {"evaluated", rep.evaluated},
                    {"agreements", rep.agreements},
                    {"agreement", rep.agreement},
                    {"agreement_threshold", threshold},
                    {"horizon", opt.horizon},
                    {"trials", opt.trials},
                    {"rate_margin", opt.rate_margin},
                    {"norm_threshold", opt.norm_threshold},
                    {"disagreements", dis},
                    {"boundary_band", band}};
      out.series = csv.str();
      out.steps = count * opt.trials * opt.horizon;
      out.status = rep.agreement >= threshold ? kOk : kCheckFailure;
      return out;
    };
  }
  if (mode != "conditional") p.child("mode").fail("mode must be \"conditional\" or \"equivalence\"");
  if (!ctx.gen) p.fail("conditional mode needs a generator and driver");
  p.allow_only({"mode", "subspace", "horizon", "trials", "rate_margin", "norm_threshold"});
  const std::size_t d = ctx.gen->dimension();
  const Subspace l = p.has("subspace") ? parse_subspace(p.at("subspace"), d) : Subspace::full(d);
  const StabilityOptions opt = stability_options(p, ctx.seed, 200);
  return [=, &ctx] {
    const auto v = conditional_stability(*ctx.gen, *ctx.driver, l, opt);
    std::ostringstream csv;
    csv << "trial,seed,log_norm,rate,lyapunov,exponential\n";
    for (std::size_t t = 0; t < v.paths.size(); ++t) {
      const auto& ps = v.paths[t];
      csv << t << ',' << ps.seed << ',' << csv_real(ps.log_norm) << ',' << csv_real(ps.rate) << ','
          << ps.lyapunov << ',' << ps.exponential << '\n';
    }
    Outcome out;
    out.report = {{"mode", mode},
                  {"seed", ctx.seed},
                  {"subspace_dimension", l.dim()},
                  {"horizon", v.horizon},
                  {"trials", v.trials},
                  {"rate_margin", v.rate_margin},
                  {"norm_threshold", v.norm_threshold},
                  {"lyapunov", proportion_json(v.lyapunov)},
                  {"exponential", proportion_json(v.exponential)}};
    out.series = csv.str();
    out.steps = opt.trials * opt.horizon;
    return out;
  };
}

Job plan_cost(const Context& ctx) {
  const Node& p = params_of(ctx);
  p.allow_only({"u", "cost", "truncation", "trials"});
  const std::size_t d = ctx.gen->dimension();
  const Eigen::VectorXd u = p.at("u").vector();
  if (static_cast<std::size_t>(u.size()) != d) p.child("u").fail("length must be " + std::to_string(d));
  CostFunction v;
  if (auto c = p.find("cost")) {
    c->allow_only({"kind", "gamma", "delta"});
    const std::string kind = c->has("kind") ? c->at("kind").string() : "norm";
    if (kind == "norm") {
      v.kind = CostFunction::Kind::Norm;
    } else if (kind == "quadratic") {
      v.kind = CostFunction::Kind::Quadratic;
      v.gamma = 1.0;
      v.delta = 1.0;
    } else {
      c->child("kind").fail("kind must be \"norm\" or \"quadratic\"");
    }
    v.gamma = opt_real(*c, "gamma", v.gamma);
    v.delta = opt_real(*c, "delta", v.delta);
    guarded(*c, [&] {
      v.validate();
      return 0;
    });
  }
  const std::size_t n = opt_count(p, "truncation", 1000, 1000);
  const std::size_t trials = opt_count(p, "trials", 30, 1);
  return [=, &ctx] {
    const auto best = optimal_cost_estimate(*ctx.gen, *ctx.driver, u, v, n, trials, ctx.seed);
    const SamplePath path = sample(*ctx.driver, n, derive_seed(ctx.seed, 0));
    const auto first = cost_index(*ctx.gen, path, u, v, n);
    std::ostringstream csv;
    csv << "n,term,partial_sum\n";
    for (std::size_t k = 0; k <= n; ++k) {
      const double term = first.partial_sums[k] - (k == 0 ? 0.0 : first.partial_sums[k - 1]);
      csv << k << ',' << csv_real(term) << ',' << csv_real(first.partial_sums[k]) << '\n';
    }
    Outcome o;
    o.report = {{"seed", ctx.seed},
                {"u", jvector(u)},
                {"truncation", n},
                {"trials", trials},
                {"gamma", jreal(v.gamma)},
                {"delta", jreal(v.delta)},
                {"optimal_cost_estimate", jreal(best.estimate)},
                {"estimate_is_upper_bound", true},
                {"divergent", best.divergent},
                {"argmin_seed", best.argmin_seed},
                {"running_min", jreals(best.running_min)},
                {"first_path",
                 {{"partial_sum", jreal(first.partial_sums.back())},
                  {"fitted_rate", jreal(first.fitted_rate)},
                  {"certified", first.certified},
                  {"tail_bound", jreal(first.tail_bound)},
                  {"total", jreal(first.total)},
                  {"divergent", first.divergent}}}};
    o.series = csv.str();
    o.steps = (2 * std::max<std::size_t>(trials, 30) + 1) * n;
    return o;
  };
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read config file " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << data;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

bool needs_driver(const std::string& sub, const Node* params) {
  if (sub == "counterexample") return false;
  if (sub == "stability" && params && params->has("mode") && params->raw()["mode"] == "equivalence") {
    return false;
  }
  return true;
}

}  // namespace

int run(const Invocation& inv, std::ostream& err) {
  if (std::find(kSubcommands.begin(), kSubcommands.end(), inv.subcommand) == kSubcommands.end()) {
    err << "error: unknown subcommand " << inv.subcommand << '\n';
    return kValidationFailure;
  }
  const auto started = std::chrono::steady_clock::now();
  std::optional<Document> doc;
  std::optional<Node> root;
  Context ctx;
  ctx.subcommand = inv.subcommand;
  ctx.generation = inv.generation;
  std::optional<Node> params;
  std::filesystem::path out_dir;
  json effective;
  Job job;

  try {
    if (inv.generation && inv.subcommand != "counterexample") {
      throw ValidationError("--generation applies to the counterexample subcommand only");
    }
    if (inv.config) {
      const std::string source = inv.config->string();
      const std::string text = read_file(*inv.config);
      json parsed;
      try {
        parsed = json::parse(text);
      } catch (const json::parse_error& e) {
        const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        const std::size_t line = 1 + static_cast<std::size_t>(
                                         std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
        throw ConfigError(source, line, std::string("malformed JSON: ") + e.what());
      }
      doc.emplace(Document{source, std::move(parsed), LineIndex(text)});
      root.emplace(*doc, doc->root, "");
      root->allow_only({"schema_version", "subcommand", "generator", "driver", "seed", "params", "output_dir"});
      const Node version = root->at("schema_version");
      if (version.u64() != static_cast<std::uint64_t>(kSchemaVersion)) {
        version.fail("unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");
      }
      if (auto s = root->find("subcommand"); s && s->string() != inv.subcommand) {
        s->fail("config is for \"" + s->string() + "\", not \"" + inv.subcommand + "\"");
      }
      if (auto pp = root->find("params")) {
        pp->require_object();
        params = pp;
      }
      const bool want_driver = needs_driver(inv.subcommand, params ? &*params : nullptr);
      if (want_driver) {
        ctx.driver = parse_driver(root->at("driver"));
        ctx.gen = parse_generator(root->at("generator"), *ctx.driver);
        ctx.seed = root->at("seed").u64();
        if (!params) root->fail("missing required key \"params\"");
      } else {
        for (const char* k : {"driver", "generator"}) {
          if (root->has(k)) root->child(k).fail("not used by this subcommand");
        }
        if (auto s = root->find("seed")) ctx.seed = s->u64();
        if (inv.subcommand == "stability" && !root->has("seed")) root->fail("missing required key \"seed\"");
      }
      if (auto o = root->find("output_dir")) out_dir = o->string();
      effective = doc->root;
      effective.erase("output_dir");
    } else if (inv.subcommand != "counterexample") {
      throw ValidationError("--config is required for " + inv.subcommand);
    }
    if (inv.out) out_dir = *inv.out;
    if (out_dir.empty()) throw ValidationError("no output directory: pass --out or set output_dir");

    ctx.params = params ? &*params : nullptr;
    if (inv.subcommand == "spectrum") job = plan_spectrum(ctx);
    if (inv.subcommand == "filtration") job = plan_filtration(ctx);
    if (inv.subcommand == "verify-met") job = plan_verify_met(ctx);
    if (inv.subcommand == "subadditive") job = plan_subadditive(ctx);
    if (inv.subcommand == "counterexample") job = plan_counterexample(ctx);
    if (inv.subcommand == "stability") job = plan_stability(ctx);
    if (inv.subcommand == "cost") job = plan_cost(ctx);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  }

  effective["subcommand"] = inv.subcommand;
  if (inv.generation) effective["generation"] = *inv.generation;

  Outcome outcome;
  try {
    outcome = job();
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const std::logic_error& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const NonUniqueStationary& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const ResourceError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const std::exception& e) {
    err << "check failed: " << e.what() << '\n';
    return kCheckFailure;
  }

  json report = outcome.report;
  report["subcommand"] = inv.subcommand;
  report["artifact_version"] = std::string(kVersion);
  const std::string report_text = report.dump(2) + "\n";
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json manifest = {{"artifact_version", std::string(kVersion)},
                   {"schema_version", kSchemaVersion},
                   {"subcommand", inv.subcommand},
                   {"config_sha256", sha256_hex(effective.dump())},
                   {"rng_algorithm", std::string(Rng::kAlgorithm)},
                   {"seed", ctx.seed},
                   {"wall_clock_seconds", seconds},
                   {"steps", outcome.steps},
                   {"exit_status", outcome.status},
                   {"outputs",
                    {{"report.json", sha256_hex(report_text)}, {"series.csv", sha256_hex(outcome.series)}}}};
  try {
    std::filesystem::create_directories(out_dir);
    write_file(out_dir / "report.json", report_text);
    write_file(out_dir / "series.csv", outcome.series);
    write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  }
  if (outcome.status == kCheckFailure) err << "check failed: see " << (out_dir / "report.json").string() << '\n';
  return outcome.status;
}

int main_entry(int argc, char** argv) {
  CLI::App app{"cocylab: random matrix cocycle laboratory"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Invocation inv;
  std::string config, out;
  std::size_t generation = 0;
  for (const auto& name : kSubcommands) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config, "JSON experiment config");
    sub->add_option("-o,--out", out, "output directory (overrides output_dir)");
    if (name == "counterexample") {
      sub->add_option("-g,--generation", generation, "word generation, 1 to 5");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidationFailure;
  }
  inv.subcommand = app.get_subcommands().front()->get_name();
  if (!config.empty()) inv.config = config;
  if (!out.empty()) inv.out = out;
  const auto* chosen = app.get_subcommands().front();
  if (inv.subcommand == "counterexample" && chosen->count("--generation") > 0) inv.generation = generation;
  return run(inv, std::cerr);
}

}  // namespace cocylab::cli
