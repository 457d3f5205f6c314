#include "memvr/sampler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>

#include "memvr/errors.hpp"

namespace memvr {

namespace {

std::int64_t binomial(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return 0;
  std::int64_t r = 1;
  for (std::int64_t j = 1; j <= k; ++j) r = r * (n - k + j) / j;
  return r;
}

// Floyd's algorithm: m distinct values from [0, range), skipping `skip`.
void floyd_sample(Rng& rng, std::size_t range, std::size_t m, std::size_t skip, std::vector<std::size_t>& out) {
  auto remap = [skip](std::size_t v) { return v >= skip ? v + 1 : v; };
  const std::size_t first = out.size();
  auto contains = [&](std::size_t v) { return std::find(out.begin() + first, out.end(), v) != out.end(); };
  if (m <= 64) {
    for (std::size_t j = range - m; j < range; ++j) {
      const std::size_t t = remap(rng.index(j + 1));
      out.push_back(contains(t) ? remap(j) : t);
    }
    return;
  }
  std::unordered_set<std::size_t> chosen;
  chosen.reserve(m * 2);
  for (std::size_t j = range - m; j < range; ++j) {
    const std::size_t t = remap(rng.index(j + 1));
    const std::size_t v = chosen.count(t) ? remap(j) : t;
    chosen.insert(v);
    out.push_back(v);
  }
}

void require_enumerable(const SamplerSpec& s) {
  if (s.n > kMaxEnumerationSize)
    throw ConfigError(fmt::format("exact enumeration supports n <= {}, got {}", kMaxEnumerationSize, s.n));
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

std::string_view to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::saga: return "saga";
    case SamplerKind::q_saga: return "q_saga";
    case SamplerKind::svrg: return "svrg";
    case SamplerKind::n_saga: return "n_saga";
    case SamplerKind::eps_n_saga: return "eps_n_saga";
    case SamplerKind::sgd: return "sgd";
  }
  return "?";
}

SamplerKind parse_sampler_kind(std::string_view text) {
  for (auto k : {SamplerKind::saga, SamplerKind::q_saga, SamplerKind::svrg, SamplerKind::n_saga,
                 SamplerKind::eps_n_saga, SamplerKind::sgd})
    if (to_string(k) == text) return k;
  throw ConfigError(fmt::format("unknown algorithm kind '{}'", text));
}

SamplerSpec make_sampler(SamplerKind kind, std::size_t n, std::size_t q, std::shared_ptr<const NeighborGraph> graph,
                         double eps) {
  if (n < 1) throw ConfigError("sampler needs n >= 1");
  SamplerSpec s;
  s.kind = kind;
  s.n = n;
  switch (kind) {
    case SamplerKind::saga:
      s.q = 1;
      break;
    case SamplerKind::sgd:
      s.q = 0;
      break;
    case SamplerKind::q_saga:
    case SamplerKind::svrg:
      if (q < 1 || q > n) throw ConfigError(fmt::format("{} needs 1 <= q <= n, got q = {}, n = {}", to_string(kind), q, n));
      s.q = q;
      break;
    case SamplerKind::n_saga:
    case SamplerKind::eps_n_saga: {
      if (!graph) throw ConfigError(fmt::format("{} requires a neighbor graph", to_string(kind)));
      if (graph->n() != n) throw ConfigError(fmt::format("graph has {} nodes, problem has {}", graph->n(), n));
      if (q < 1 || q > n) throw ConfigError(fmt::format("{} needs 1 <= q <= n, got q = {}", to_string(kind), q));
      for (std::size_t j = 0; j < n; ++j) {
        if (graph->parents(j).size() != q)
          throw ConfigError(fmt::format("node {} has in-degree {}, expected q = {}", j, graph->parents(j).size(), q));
      }
      if (kind == SamplerKind::eps_n_saga && !(eps >= 0.0))
        throw ConfigError(fmt::format("eps must be >= 0, got {}", eps));
      s.q = q;
      s.graph = std::move(graph);
      s.eps = eps;
      break;
    }
  }
  return s;
}

void sample_update_set(const SamplerSpec& sampler, Rng& rng, std::size_t i, std::vector<std::size_t>& out) {
  out.clear();
  switch (sampler.kind) {
    case SamplerKind::saga:
      out.push_back(i);
      return;
    case SamplerKind::sgd:
      return;
    case SamplerKind::q_saga:
      if (sampler.q == sampler.n) {
        out = all_indices(sampler.n);
        return;
      }
      out.push_back(i);
      floyd_sample(rng, sampler.n - 1, sampler.q - 1, i, out);
      std::sort(out.begin(), out.end());
      return;
    case SamplerKind::svrg:
      if (rng.uniform() < static_cast<double>(sampler.q) / static_cast<double>(sampler.n)) out = all_indices(sampler.n);
      return;
    case SamplerKind::n_saga:
    case SamplerKind::eps_n_saga: {
      auto c = sampler.graph->children(i);
      out.assign(c.begin(), c.end());
      return;
    }
  }
}

std::vector<std::size_t> sample_update_set(const SamplerSpec& sampler, Rng& rng, std::size_t i) {
  std::vector<std::size_t> out;
  sample_update_set(sampler, rng, i, out);
  return out;
}

std::vector<StepOutcome> enumerate_step_outcomes(const SamplerSpec& s) {
  require_enumerable(s);
  const auto n = static_cast<std::int64_t>(s.n);
  const Rational pick(1, n);
  std::vector<StepOutcome> out;
  for (std::size_t i = 0; i < s.n; ++i) {
    switch (s.kind) {
      case SamplerKind::saga:
        out.push_back({i, {i}, pick});
        break;
      case SamplerKind::sgd:
        out.push_back({i, {}, pick});
        break;
      case SamplerKind::q_saga: {
        const Rational cond(1, binomial(n - 1, static_cast<std::int64_t>(s.q) - 1));
        for (std::uint32_t mask = 0; mask < (1u << s.n); ++mask) {
          if (static_cast<std::size_t>(std::popcount(mask)) != s.q || !(mask & (1u << i))) continue;
          std::vector<std::size_t> set;
          for (std::size_t j = 0; j < s.n; ++j)
            if (mask & (1u << j)) set.push_back(j);
          out.push_back({i, std::move(set), pick * cond});
        }
        break;
      }
      case SamplerKind::svrg: {
        const Rational full(static_cast<std::int64_t>(s.q), n);
        if (full < Rational(1)) out.push_back({i, {}, pick * (Rational(1) - full)});
        out.push_back({i, all_indices(s.n), pick * full});
        break;
      }
      case SamplerKind::n_saga:
      case SamplerKind::eps_n_saga: {
        auto c = s.graph->children(i);
        out.push_back({i, std::vector<std::size_t>(c.begin(), c.end()), pick});
        break;
      }
    }
  }
  return out;
}

std::vector<UpdateSetProbability> enumerate_update_distribution(const SamplerSpec& s) {
  std::map<std::vector<std::size_t>, Rational> law;
  for (auto& o : enumerate_step_outcomes(s)) law[o.set] += o.probability;
  std::vector<UpdateSetProbability> out;
  out.reserve(law.size());
  for (auto& [set, p] : law) out.push_back({set, p});
  return out;
}

}  // namespace memvr
