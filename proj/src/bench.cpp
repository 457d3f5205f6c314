#include "memvr/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <map>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "memvr/engine.hpp"
#include "memvr/errors.hpp"
#include "memvr/sampler.hpp"
#include "memvr/theory.hpp"

namespace memvr {

void MetricsTrace::sort() {
  std::stable_sort(rows.begin(), rows.end(), [](const TraceRow& a, const TraceRow& b) {
    if (a.seed != b.seed) return a.seed < b.seed;
    if (a.datapoint_evals != b.datapoint_evals) return a.datapoint_evals < b.datapoint_evals;
    return a.algorithm < b.algorithm;
  });
}

void MetricsTrace::append(const MetricsTrace& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  if (other.diverged) {
    if (diverged) divergence_message += "; ";
    diverged = true;
    divergence_message += other.divergence_message;
  }
}

std::vector<std::string> MetricsTrace::algorithms() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : rows)
    if (seen.insert(r.algorithm).second) out.push_back(r.algorithm);
  return out;
}

std::vector<AggregatePoint> MetricsTrace::aggregate(const std::string& algorithm) const {
  std::map<std::uint64_t, AggregatePoint> acc;
  for (const auto& r : rows) {
    if (r.algorithm != algorithm) continue;
    auto [it, fresh] = acc.try_emplace(r.datapoint_evals);
    AggregatePoint& p = it->second;
    if (fresh) {
      p.datapoint_evals = r.datapoint_evals;
      p.min = p.max = r.suboptimality;
    }
    p.gradient_evals += static_cast<double>(r.gradient_evals);
    p.mean += r.suboptimality;
    p.min = std::min(p.min, r.suboptimality);
    p.max = std::max(p.max, r.suboptimality);
    ++p.count;
  }
  std::vector<AggregatePoint> out;
  out.reserve(acc.size());
  for (auto& [k, p] : acc) {
    p.gradient_evals /= static_cast<double>(p.count);
    p.mean /= static_cast<double>(p.count);
    out.push_back(p);
  }
  return out;
}

ProblemInstance load_problem(const RunConfig& config) {
  std::optional<ProblemInstance> inst;
  if (config.source == "synthetic") {
    SyntheticSpec spec = config.synthetic;
    spec.loss = config.loss;
    spec.mu = config.mu;
    inst = synthesize_problem(spec).instance;
  } else {
    // Read with unrestricted labels, then binarize for logistic loss.
    ProblemInstance raw = load_libsvm(config.path, LossKind::ridge, config.mu);
    if (config.loss == LossKind::logistic) {
      Vector y = raw.labels();
      for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = y[i] == config.label_positive ? 1.0 : -1.0;
      inst = ProblemInstance(raw.features(), y, LossKind::logistic, config.mu);
    } else {
      inst = raw;
    }
  }
  if (config.subsample > 0) {
    if (config.subsample > inst->n())
      throw ConfigError(fmt::format("dataset.subsample: {} exceeds the dataset size {}", config.subsample, inst->n()));
    if (config.subsample < inst->n()) inst = subsample(*inst, config.subsample, config.subsample_seed);
  }
  if (config.standardize_targets) {
    if (config.loss != LossKind::ridge) throw ConfigError("dataset.standardize_targets: only valid for ridge loss");
    inst = standardize_targets(*inst);
  }
  return *inst;
}

PreparedProblem prepare_problem(const RunConfig& config) {
  PreparedProblem p;
  p.model = std::make_shared<const LossModel>(load_problem(config));
  p.reference = reference_optimum(*p.model);
  if (config.kind == SamplerKind::n_saga || config.kind == SamplerKind::eps_n_saga)
    ensure_graph(p, config.q, config.graph_cache_dir);
  return p;
}

PreparedProblem with_mu(const PreparedProblem& prepared, double mu) {
  PreparedProblem p;
  p.model = std::make_shared<const LossModel>(prepared.model->instance().with_mu(mu));
  p.reference = reference_optimum(*p.model);
  p.graph = prepared.graph;
  p.graph_q = prepared.graph_q;
  return p;
}

void ensure_graph(PreparedProblem& prepared, std::size_t q, const std::filesystem::path& cache_dir) {
  if (prepared.graph && prepared.graph_q == q) return;
  const auto& inst = prepared.model->instance();
  NeighborGraph g = cache_dir.empty() ? build_knn_graph(inst, q, worker_count()) : cached_knn_graph(inst, q, cache_dir);
  prepared.graph = std::make_shared<const NeighborGraph>(std::move(g));
  prepared.graph_q = q;
}

double suboptimality(const LossModel& model, const Vector& w, const ReferenceOptimum& reference) {
  if (reference.fingerprint != model.instance().fingerprint())
    throw ConfigError("reference optimum belongs to a different problem");
  const double gap = objective(model, w) - reference.f_star;
  if (gap < -1e-12) throw NumericalError(fmt::format("f(w) is {} below the reference optimum", -gap));
  return std::max(gap, 0.0);
}

double resolve_gamma(const RunConfig& c, const LossModel& model) {
  const double n = static_cast<double>(model.n());
  const double l = model.lipschitz();
  switch (c.gamma_rule) {
    case GammaRule::q_over_mun:
      if (!(c.mu > 0)) throw ConfigError("gamma.rule: q_over_mun needs problem.mu > 0");
      return static_cast<double>(c.q) / (c.mu * n);
    case GammaRule::explicit_value:
    case GammaRule::sgd_decay:
      return c.gamma_value;
    case GammaRule::theory_star:
      return theory::gamma_star(theory::regime_k(model.mu(), l, model.n(), std::max<std::size_t>(c.q, 1)), l);
    case GammaRule::theory_universal:
      return theory::universal_gamma(l);
    case GammaRule::theory_tilde:
      return std::min(model.mu(),
                      theory::gamma_tilde(theory::regime_k(model.mu(), l, model.n(), std::max<std::size_t>(c.q, 1)), l));
  }
  throw ConfigError("gamma.rule: unhandled rule");
}

MetricsTrace run_seed(const PreparedProblem& prepared, const RunConfig& config, std::uint64_t seed) {
  const LossModel& model = *prepared.model;
  const std::size_t n = model.n();
  std::shared_ptr<const NeighborGraph> graph;
  if (config.kind == SamplerKind::n_saga || config.kind == SamplerKind::eps_n_saga) {
    if (!prepared.graph || prepared.graph_q != config.q)
      throw ConfigError(fmt::format("algorithm.q: no neighbor graph prepared for q = {}", config.q));
    graph = prepared.graph;
  }
  const SamplerSpec sampler = make_sampler(config.kind, n, config.q, graph, config.eps);
  OptState st = make_state(model, sampler, {config.storage, config.growing_n}, seed);

  const double gamma = resolve_gamma(config, model);
  const bool decay = config.gamma_rule == GammaRule::sgd_decay;
  const auto total = static_cast<std::uint64_t>(std::llround(config.epochs * static_cast<double>(n)));
  const std::uint64_t every = config.trace_every > 0 ? config.trace_every : std::max<std::uint64_t>(1, n / 10);
  const std::string label = config.label.empty() ? default_label(config) : config.label;

  MetricsTrace trace;
  const auto start = std::chrono::steady_clock::now();
  auto record = [&] {
    const double sub = suboptimality(model, st.w, prepared.reference);
    const double wall =
        config.wall_clock ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() : 0.0;
    trace.rows.push_back({seed, label, st.counters.datapoint_evals, st.counters.gradient_evals, sub, wall});
  };

  record();
  try {
    for (std::uint64_t t = 0; t < total; ++t) {
      step(st, model, sampler, decay ? gamma / static_cast<double>(t + 1) : gamma);
      if ((t + 1) % every == 0 || t + 1 == total) {
        const double f = objective(model, st.w);
        if (!std::isfinite(f)) throw NumericalError(fmt::format("objective became non-finite at step {}", t + 1));
        record();
      }
    }
  } catch (const NumericalError& e) {
    trace.diverged = true;
    trace.divergence_message = fmt::format("{} seed {}: {}", label, seed, e.what());
  }
  return trace;
}

unsigned worker_count() {
  if (const char* env = std::getenv("MEMVR_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    throw ConfigError(fmt::format("MEMVR_WORKERS must be a positive integer, got '{}'", env));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

MetricsTrace run_experiment(const PreparedProblem& prepared, const RunConfig& config) {
  if (config.seeds.empty()) throw ConfigError("run.seeds: at least one seed is required");
  const std::size_t runs = config.seeds.size();
  std::vector<MetricsTrace> results(runs);
  std::vector<std::exception_ptr> errors(runs);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < runs; k = next++) {
      try {
        results[k] = run_seed(prepared, config, config.seeds[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const unsigned slots = static_cast<unsigned>(std::min<std::size_t>(worker_count(), runs));
  if (slots <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < slots; ++k) pool.emplace_back(work);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  MetricsTrace out;
  for (const auto& r : results) out.append(r);
  out.sort();
  return out;
}

MetricsTrace run_experiment(const RunConfig& config) {
  return run_experiment(prepare_problem(config), config);
}

namespace {

// Runs each candidate and keeps the finite one with the lowest final mean.
MetricsTrace best_sgd(const PreparedProblem& prepared, RunConfig config, const std::vector<double>& scales,
                      std::vector<std::string>& notes) {
  std::optional<MetricsTrace> best;
  double best_final = std::numeric_limits<double>::infinity();
  double best_scale = 0;
  const double l = prepared.model->lipschitz();
  for (double scale : scales) {
    config.gamma_value = scale / l;
    MetricsTrace t = run_experiment(prepared, config);
    const auto agg = t.aggregate(config.label);
    if (t.diverged || agg.empty() || agg.back().count != config.seeds.size()) {
      notes.push_back(fmt::format("{}: gamma = {}/L diverged, dropped", config.label, scale));
      continue;
    }
    if (agg.back().mean < best_final) {
      best_final = agg.back().mean;
      best = std::move(t);
      best_scale = scale;
    }
  }
  if (!best) throw NumericalError(fmt::format("{}: every step size candidate diverged", config.label));
  notes.push_back(fmt::format("{}: selected gamma = {}/L", config.label, best_scale));
  return *best;
}

}  // namespace

std::vector<ReplicatePanel> replicate(const ReplicateOptions& options) {
  if (options.mus.empty()) throw ConfigError("replicate needs at least one mu");
  RunConfig base = options.base;
  base.label.clear();
  base.kind = SamplerKind::saga;
  base.q = 1;
  base.mu = options.mus.front();
  base.synthetic.mu = base.mu;
  PreparedProblem first = prepare_problem(base);
  if (!options.eps.empty()) ensure_graph(first, options.q, base.graph_cache_dir);

  std::vector<ReplicatePanel> panels;
  for (double mu : options.mus) {
    PreparedProblem prepared = mu == base.mu ? first : with_mu(first, mu);
    ReplicatePanel panel;
    panel.mu = mu;
    panel.n = prepared.model->n();

    RunConfig c = base;
    c.mu = mu;
    c.synthetic.mu = mu;
    c.gamma_rule = GammaRule::q_over_mun;
    c.label = default_label(c);
    panel.trace.append(run_experiment(prepared, c));

    c.kind = SamplerKind::q_saga;
    c.q = options.q;
    c.label = default_label(c);
    panel.trace.append(run_experiment(prepared, c));

    c.kind = SamplerKind::eps_n_saga;
    for (double eps : options.eps) {
      c.eps = eps;
      c.label = default_label(c);
      panel.trace.append(run_experiment(prepared, c));
    }

    c.kind = SamplerKind::sgd;
    c.q = 0;
    c.eps = 0;
    c.gamma_rule = GammaRule::explicit_value;
    c.label = "sgd_const";
    panel.trace.append(best_sgd(prepared, c, options.sgd_scales, panel.notes));
    c.gamma_rule = GammaRule::sgd_decay;
    c.label = "sgd_decay";
    panel.trace.append(best_sgd(prepared, c, options.sgd_scales, panel.notes));

    panel.trace.sort();
    panels.push_back(std::move(panel));
  }
  return panels;
}

}  // namespace memvr
