#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dicke/model.hpp"

namespace dicke {

enum class ExperimentKind { Spectrum, LyapunovMap, Fotoc, Twa, Renyi, Thermalize };

std::string kind_tag(ExperimentKind k);
ExperimentKind parse_kind(const std::string& tag);

/// Invalid configuration, reported with the offending section.key.
class ConfigError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

struct DecoherenceSpec {
  double gamma_per_s = 0.0;  // single-particle dephasing rate
  double enhancement = 1.0;  // multiplies g, delta and B
};

/// Parsed experiment description. Section-specific settings are kept as
/// validated strings and interpreted by the pipeline of the chosen kind.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Fotoc;
  ModelParams params;
  bool auto_cutoff = false;  // n_max = auto
  std::string state = "critical";
  double t_end = 12.0;
  std::size_t points = 601;
  std::uint64_t seed = 1;
  int threads = 1;
  std::filesystem::path output = "results";
  DecoherenceSpec decoherence;
  Eigen::Index max_dim = 8192;
  std::size_t max_trajectories = 1'000'000;
  /// Every key that was read, as section.key -> raw value (config echo).
  std::map<std::string, std::string> echo;
  /// Kind-specific settings (section.key -> value), validated at parse time.
  std::map<std::string, std::string> extra;

  double get(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const;
};

/// Reads the line-based `key = value` format with [section] headers.
/// Unknown sections or keys, duplicates and malformed values are rejected.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::filesystem::path> output;
  std::optional<ExperimentKind> expected_kind;  // subcommand; must match the file
  bool allow_large = false;                     // lift D and R ceilings
};

struct OutputFile {
  std::string stage;
  std::filesystem::path path;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunResult {
  std::vector<OutputFile> files;
  std::filesystem::path manifest;
};

/// Runs one experiment, writing CSV files plus manifest.json into the output
/// directory. Outputs are byte-identical for identical config and seed.
RunResult run(ExperimentConfig config, const RunOptions& options = {});

/// Process exit code for an exception escaping run(): 2 for configuration or
/// parameter errors, 3 for numerical-contract violations.
int exit_code_for(const std::exception& e);

/// I_0 -> I_0 exp(-Gamma N t), t in ms and Gamma in 1/s. Enhancement of the
/// coherent couplings does not rescale Gamma.
std::vector<double> apply_dephasing_decay(std::span<const double> i0, std::span<const double> times_ms,
                                          double gamma_per_s, int n_spins);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double x);
/// Lower-case hex SHA-256 of a file.
std::string sha256_file(const std::filesystem::path& path);

std::string code_version();

}  // namespace dicke
