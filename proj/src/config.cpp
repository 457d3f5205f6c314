#include "memvr/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "memvr/errors.hpp"

namespace memvr {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError(fmt::format("{}: expected a nonnegative integer, got '{}'", key, text));
  return v;
}

double parse_real(std::string_view key, std::string_view text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
    throw ConfigError(fmt::format("{}: expected a finite number, got '{}'", key, text));
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, text));
}

template <class F>
auto with_key(std::string_view key, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", key, e.what()));
  }
}

const char* kDefaults[][2] = {
    {"dataset.source", "synthetic"},
    {"dataset.path", ""},
    {"dataset.n", "1000"},
    {"dataset.d", "20"},
    {"dataset.noise", "0.1"},
    {"dataset.seed", "0"},
    {"dataset.clusters", "0"},
    {"dataset.cluster_spread", "0.1"},
    {"dataset.scale", "1"},
    {"dataset.subsample", "0"},
    {"dataset.subsample_seed", "0"},
    {"dataset.standardize_targets", "false"},
    {"dataset.label_positive", "1"},
    {"problem.loss", "ridge"},
    {"problem.mu", "0.1"},
    {"algorithm.kind", "saga"},
    {"algorithm.q", "1"},
    {"algorithm.eps", "0"},
    {"algorithm.storage", "glm"},
    {"algorithm.growing_n", "true"},
    {"gamma.rule", "q_over_mun"},
    {"gamma.value", "0"},
    {"run.epochs", "10"},
    {"run.seeds", "0,1,2,3,4"},
    {"run.trace_every", "0"},
    {"run.label", ""},
    {"run.wall_clock", "false"},
    {"graph.cache_dir", ""},
    {"output.x_axis", "datapoint"},
};

}  // namespace

std::string_view to_string(GammaRule rule) {
  switch (rule) {
    case GammaRule::q_over_mun: return "q_over_mun";
    case GammaRule::explicit_value: return "explicit";
    case GammaRule::theory_star: return "theory_star";
    case GammaRule::theory_universal: return "theory_universal";
    case GammaRule::theory_tilde: return "theory_tilde";
    case GammaRule::sgd_decay: return "sgd_decay";
  }
  return "?";
}

GammaRule parse_gamma_rule(std::string_view text) {
  for (GammaRule r : {GammaRule::q_over_mun, GammaRule::explicit_value, GammaRule::theory_star,
                      GammaRule::theory_universal, GammaRule::theory_tilde, GammaRule::sgd_decay})
    if (to_string(r) == text) return r;
  throw ConfigError(fmt::format("unknown gamma rule '{}'", text));
}

ConfigMap::ConfigMap() {
  for (const auto& kv : kDefaults) values_.emplace(kv[0], kv[1]);
}

void ConfigMap::set(std::string_view key, std::string_view value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(fmt::format("unknown config key '{}'", key));
  it->second = std::string(value);
}

void ConfigMap::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError(fmt::format("override '{}' is not of the form key=value", assignment));
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void ConfigMap::merge_text(std::string_view text, std::string_view origin) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.find('=') == std::string_view::npos)
      throw ConfigError(fmt::format("{}:{}: expected 'key = value', got '{}'", origin, line_no, line));
    try {
      set(line);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}:{}: {}", origin, line_no, e.what()));
    }
  }
}

void ConfigMap::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config file '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  merge_text(buf.str(), path.string());
}

const std::string& ConfigMap::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(fmt::format("unknown config key '{}'", key));
  return it->second;
}

std::string ConfigMap::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += fmt::format("{} = {}\n", k, v);
  return out;
}

RunConfig to_run_config(const ConfigMap& m) {
  RunConfig c;
  auto u = [&](const char* key) { return parse_uint(key, m.get(key)); };
  auto r = [&](const char* key) { return parse_real(key, m.get(key)); };
  auto b = [&](const char* key) { return parse_bool(key, m.get(key)); };

  c.source = m.get("dataset.source");
  if (c.source != "synthetic" && c.source != "libsvm")
    throw ConfigError(fmt::format("dataset.source: expected synthetic or libsvm, got '{}'", c.source));
  c.path = m.get("dataset.path");
  if (c.source == "libsvm" && c.path.empty()) throw ConfigError("dataset.path: required when dataset.source = libsvm");

  c.loss = with_key("problem.loss", [&] { return parse_loss_kind(m.get("problem.loss")); });
  c.mu = r("problem.mu");
  if (c.mu < 0) throw ConfigError("problem.mu: must be >= 0");

  c.synthetic.n = u("dataset.n");
  c.synthetic.d = u("dataset.d");
  c.synthetic.noise = r("dataset.noise");
  c.synthetic.seed = u("dataset.seed");
  c.synthetic.clusters = u("dataset.clusters");
  c.synthetic.cluster_spread = r("dataset.cluster_spread");
  c.synthetic.feature_scale = r("dataset.scale");
  c.synthetic.loss = c.loss;
  c.synthetic.mu = c.mu;
  if (c.source == "synthetic" && (c.synthetic.n == 0 || c.synthetic.d == 0))
    throw ConfigError("dataset.n and dataset.d must be positive");
  if (c.synthetic.feature_scale <= 0) throw ConfigError("dataset.scale: must be positive");
  c.subsample = u("dataset.subsample");
  c.subsample_seed = u("dataset.subsample_seed");
  c.standardize_targets = b("dataset.standardize_targets");
  c.label_positive = r("dataset.label_positive");

  c.kind = with_key("algorithm.kind", [&] { return parse_sampler_kind(m.get("algorithm.kind")); });
  c.q = u("algorithm.q");
  c.eps = r("algorithm.eps");
  if (c.eps < 0) throw ConfigError("algorithm.eps: must be >= 0");
  c.storage = with_key("algorithm.storage", [&] { return parse_storage_mode(m.get("algorithm.storage")); });
  c.growing_n = b("algorithm.growing_n");
  if (c.kind == SamplerKind::saga) c.q = 1;
  if (c.kind == SamplerKind::sgd) c.q = 0;
  if (c.kind != SamplerKind::sgd && c.q == 0) throw ConfigError("algorithm.q: must be >= 1");

  c.gamma_rule = with_key("gamma.rule", [&] { return parse_gamma_rule(m.get("gamma.rule")); });
  c.gamma_value = r("gamma.value");
  if ((c.gamma_rule == GammaRule::explicit_value || c.gamma_rule == GammaRule::sgd_decay) && !(c.gamma_value > 0))
    throw ConfigError(fmt::format("gamma.value: must be positive for gamma.rule = {}", to_string(c.gamma_rule)));
  if (c.gamma_rule == GammaRule::q_over_mun && c.kind == SamplerKind::sgd)
    throw ConfigError("gamma.rule: q_over_mun is undefined for plain SGD (q = 0); use explicit or sgd_decay");
  if (c.gamma_rule == GammaRule::sgd_decay && c.kind != SamplerKind::sgd)
    throw ConfigError("gamma.rule: sgd_decay requires algorithm.kind = sgd");

  c.epochs = r("run.epochs");
  if (!(c.epochs > 0)) throw ConfigError("run.epochs: must be positive");
  c.seeds.clear();
  std::string_view seeds = m.get("run.seeds");
  while (!seeds.empty()) {
    const auto comma = seeds.find(',');
    const auto tok = trim(seeds.substr(0, comma));
    if (!tok.empty()) c.seeds.push_back(parse_uint("run.seeds", tok));
    seeds.remove_prefix(comma == std::string_view::npos ? seeds.size() : comma + 1);
  }
  if (c.seeds.empty()) throw ConfigError("run.seeds: at least one seed is required");
  c.trace_every = u("run.trace_every");
  c.label = m.get("run.label");
  if (c.label.find_first_of(",\n\"") != std::string::npos)
    throw ConfigError("run.label: must not contain commas, quotes or newlines");
  c.wall_clock = b("run.wall_clock");
  c.graph_cache_dir = m.get("graph.cache_dir");

  const auto& axis = m.get("output.x_axis");
  if (axis == "datapoint") c.x_axis = XAxis::datapoint_evals;
  else if (axis == "gradient") c.x_axis = XAxis::gradient_evals;
  else throw ConfigError(fmt::format("output.x_axis: expected datapoint or gradient, got '{}'", axis));
  return c;
}

ConfigMap to_config_map(const RunConfig& c) {
  ConfigMap m;
  m.set("dataset.source", c.source);
  m.set("dataset.path", c.path.string());
  m.set("dataset.n", fmt::format("{}", c.synthetic.n));
  m.set("dataset.d", fmt::format("{}", c.synthetic.d));
  m.set("dataset.noise", fmt::format("{}", c.synthetic.noise));
  m.set("dataset.seed", fmt::format("{}", c.synthetic.seed));
  m.set("dataset.clusters", fmt::format("{}", c.synthetic.clusters));
  m.set("dataset.cluster_spread", fmt::format("{}", c.synthetic.cluster_spread));
  m.set("dataset.scale", fmt::format("{}", c.synthetic.feature_scale));
  m.set("dataset.subsample", fmt::format("{}", c.subsample));
  m.set("dataset.subsample_seed", fmt::format("{}", c.subsample_seed));
  m.set("dataset.standardize_targets", c.standardize_targets ? "true" : "false");
  m.set("dataset.label_positive", fmt::format("{}", c.label_positive));
  m.set("problem.loss", to_string(c.loss));
  m.set("problem.mu", fmt::format("{}", c.mu));
  m.set("algorithm.kind", to_string(c.kind));
  m.set("algorithm.q", fmt::format("{}", c.q));
  m.set("algorithm.eps", fmt::format("{}", c.eps));
  m.set("algorithm.storage", to_string(c.storage));
  m.set("algorithm.growing_n", c.growing_n ? "true" : "false");
  m.set("gamma.rule", to_string(c.gamma_rule));
  m.set("gamma.value", fmt::format("{}", c.gamma_value));
  m.set("run.epochs", fmt::format("{}", c.epochs));
  m.set("run.seeds", fmt::format("{}", fmt::join(c.seeds, ",")));
  m.set("run.trace_every", fmt::format("{}", c.trace_every));
  m.set("run.label", c.label);
  m.set("run.wall_clock", c.wall_clock ? "true" : "false");
  m.set("graph.cache_dir", c.graph_cache_dir.string());
  m.set("output.x_axis", c.x_axis == XAxis::datapoint_evals ? "datapoint" : "gradient");
  return m;
}

std::string default_label(const RunConfig& c) {
  switch (c.kind) {
    case SamplerKind::saga: return "saga";
    case SamplerKind::q_saga: return fmt::format("q_saga_q{}", c.q);
    case SamplerKind::svrg: return fmt::format("svrg_q{}", c.q);
    case SamplerKind::n_saga: return fmt::format("n_saga_q{}", c.q);
    case SamplerKind::eps_n_saga: return fmt::format("eps_n_saga_q{}_eps{:g}", c.q, c.eps);
    case SamplerKind::sgd: return c.gamma_rule == GammaRule::sgd_decay ? "sgd_decay" : "sgd_const";
  }
  return "?";
}

}  // namespace memvr
