#pragma once

// Run configuration as flat `key = value` text with dotted keys, e.g.
//
//   algorithm.kind = eps_n_saga
//   algorithm.q    = 20
//   algorithm.eps  = 1e-2
//
// Precedence is defaults < file < overrides. Unknown keys are errors.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "memvr/memory.hpp"
#include "memvr/problem.hpp"
#include "memvr/sampler.hpp"

namespace memvr {

enum class GammaRule {
  q_over_mun,        // q / (mu n)
  explicit_value,    // gamma.value
  theory_star,       // gamma*(K)
  theory_universal,  // (2 - sqrt 2) / (4L)
  theory_tilde,      // min(mu, gamma~(K)) for inexact memory
  sgd_decay,         // gamma.value / t
};

std::string_view to_string(GammaRule rule);
GammaRule parse_gamma_rule(std::string_view text);

enum class XAxis { datapoint_evals, gradient_evals };

struct RunConfig {
  // Dataset.
  std::string source = "synthetic";  // synthetic | libsvm
  std::filesystem::path path;
  SyntheticSpec synthetic;
  std::size_t subsample = 0;  // 0 keeps every row
  std::uint64_t subsample_seed = 0;
  bool standardize_targets = false;
  double label_positive = 1.0;  // libsvm logistic: this raw label maps to +1, others to -1

  // Problem.
  LossKind loss = LossKind::ridge;
  double mu = 0.1;

  // Algorithm.
  SamplerKind kind = SamplerKind::saga;
  std::size_t q = 1;
  double eps = 0.0;
  StorageMode storage = StorageMode::glm_scalars;
  bool growing_n = true;

  GammaRule gamma_rule = GammaRule::q_over_mun;
  double gamma_value = 0.0;

  double epochs = 10.0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t trace_every = 0;  // 0 means n / 10
  std::string label;            // empty means derived from the algorithm
  bool wall_clock = false;

  std::filesystem::path graph_cache_dir;
  XAxis x_axis = XAxis::datapoint_evals;
};

/// Ordered key -> value text, holding every known key.
class ConfigMap {
 public:
  /// All keys at their defaults.
  ConfigMap();

  /// Applies `key = value` lines. `#` starts a comment. `origin` names the
  /// source in error messages.
  void merge_text(std::string_view text, std::string_view origin = "<text>");
  void merge_file(const std::filesystem::path& path);
  /// One `key=value` override.
  void set(std::string_view assignment);
  void set(std::string_view key, std::string_view value);

  const std::string& get(std::string_view key) const;
  const std::map<std::string, std::string, std::less<>>& entries() const { return values_; }

  /// Canonical text: one `key = value` per line, keys sorted.
  std::string to_text() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

/// Parses and validates every key. Throws ConfigError naming the key.
RunConfig to_run_config(const ConfigMap& map);
/// Inverse of to_run_config.
ConfigMap to_config_map(const RunConfig& config);

/// Curve name used in traces when `label` is empty, e.g. `q_saga_q20`.
std::string default_label(const RunConfig& config);

}  // namespace memvr
