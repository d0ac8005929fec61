#pragma once

// Command-line front end. `run` does all the work so tests can drive it
// without spawning a process.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cocylab::cli {

inline constexpr std::string_view kVersion = "1.0.0";
inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kOk = 0, kValidationFailure = 1, kCheckFailure = 2 };

inline const std::vector<std::string> kSubcommands = {
    "spectrum", "filtration", "verify-met", "subadditive", "counterexample", "stability", "cost"};

// A configuration problem anchored to a line of the config document.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& source, std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// JSON pointer -> 1-based line where the value (or its key) starts.
class LineIndex {
 public:
  explicit LineIndex(std::string_view text);
  // Falls back to the nearest recorded ancestor, then to line 1.
  std::size_t line(const std::string& pointer) const;

 private:
  std::map<std::string, std::size_t> lines_;
};

struct Invocation {
  std::string subcommand;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  std::optional<std::size_t> generation;  // counterexample only
};

// Validates, computes, then writes report.json, series.csv and
// manifest.json. Nothing is written unless validation succeeds.
int run(const Invocation& inv, std::ostream& err);

// argv front end over `run`.
int main_entry(int argc, char** argv);

std::string sha256_hex(std::string_view data);

}  // namespace cocylab::cli
