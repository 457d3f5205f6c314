#include "memvr/engine.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "memvr/errors.hpp"

namespace memvr {

namespace {

void write_exact(OptState& st, const LossModel& model, std::size_t j, double s, const Vector& w, bool shared,
                 double bound) {
  const auto& inst = model.instance();
  const std::uint64_t t = st.counters.datapoint_evals;
  if (st.memory.mode() == StorageMode::glm_scalars) {
    st.memory.write_scalar(j, s, inst.row(j), t);
  } else {
    st.memory.write(j, s * inst.row(j).transpose() + model.mu() * w, t);
  }
  st.writes.push_back({j, shared, bound});
}

}  // namespace

OptState make_state(const LossModel& model, const SamplerSpec& sampler, const EngineOptions& options,
                    std::uint64_t seed, const std::optional<Vector>& w0) {
  if (sampler.n != model.n())
    throw ConfigError(fmt::format("sampler built for n = {}, problem has n = {}", sampler.n, model.n()));
  const StorageMode mode = sampler.kind == SamplerKind::sgd ? StorageMode::glm_scalars : options.storage;
  OptState st{w0.value_or(Vector::Zero(static_cast<Eigen::Index>(model.d()))),
              MemoryState(mode, model.n(), model.d(), options.growing_n), {}, Rng(seed)};
  if (static_cast<std::size_t>(st.w.size()) != model.d()) throw ConfigError("initial iterate has the wrong dimension");
  st.growing = options.growing_n;
  if (st.growing) {
    st.order.resize(model.n());
    std::iota(st.order.begin(), st.order.end(), std::size_t{0});
    Rng shuffle = st.rng.split(1);
    for (std::size_t k = model.n(); k > 1; --k) std::swap(st.order[k - 1], st.order[shuffle.index(k)]);
  }
  if (sampler.kind == SamplerKind::eps_n_saga)
    st.eps_table = std::make_shared<const EpsBoundTable>(model.instance(), *sampler.graph);
  st.direction = Vector::Zero(static_cast<Eigen::Index>(model.d()));
  return st;
}

Vector update_direction(const OptState& st, const LossModel& model, std::size_t i) {
  const auto& inst = model.instance();
  const double s = model.xi_prime(i, st.w);
  Vector g = s * inst.row(i).transpose() + model.mu() * st.w;
  if (st.memory.mode() == StorageMode::full_vectors)
    g -= st.memory.slot(i).transpose();
  else
    g -= st.memory.scalar(i) * inst.row(i).transpose();
  g += st.memory.mean();
  return g;
}

std::size_t apply_shared_update(OptState& st, const LossModel& model, std::size_t i, const SamplerSpec& sampler,
                                const Vector& w) {
  if (sampler.kind != SamplerKind::eps_n_saga || !st.eps_table)
    throw ConfigError("apply_shared_update needs an eps_n_saga sampler and state");
  const EpsBoundTable& table = *st.eps_table;
  if (i >= table.n()) throw std::out_of_range(fmt::format("node {} outside the neighbor graph", i));
  const double margin_i = model.margin(i, w);
  const double s_i = model.scalar_from_margin(i, margin_i);
  const double w_norm = w.norm();
  std::size_t fresh = 0;
  const std::size_t deg = table.out_degree(i);
  for (std::size_t k = 0; k < deg; ++k) {
    const std::size_t j = table.child(i, k);
    const double bound = table.edge_bound(i, k, w_norm, margin_i);
    if (std::isnan(bound))
      throw NumericalError(fmt::format("eps bound for edge ({}, {}) is not a number", i, j));
    if (bound <= sampler.eps) {
      write_exact(st, model, j, s_i, w, j != i, bound);
    } else {
      write_exact(st, model, j, model.xi_prime(j, w), w, false, bound);
      ++fresh;
    }
  }
  return fresh;
}

StepInfo step(OptState& st, const LossModel& model, const SamplerSpec& sampler, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError(fmt::format("step size must be positive, got {}", gamma));
  const std::size_t n = model.n();
  const std::uint64_t t = st.counters.datapoint_evals;
  if (st.growing && t >= n) {
    st.growing = false;
    st.memory.stop_normalizing_by_seen();
  }
  const std::size_t i = st.growing ? st.order[st.rng.index(static_cast<std::size_t>(t) + 1)] : st.rng.index(n);

  const auto& inst = model.instance();
  const auto x_i = inst.row(i);
  const double margin_i = x_i.dot(st.w);
  const double s_i = model.scalar_from_margin(i, margin_i);
  std::size_t fresh = 1;

  Vector& g = st.direction;
  if (sampler.kind == SamplerKind::sgd) {
    g.noalias() = s_i * x_i.transpose() + model.mu() * st.w;
  } else if (st.memory.mode() == StorageMode::full_vectors) {
    g.noalias() = s_i * x_i.transpose() + model.mu() * st.w - st.memory.slot(i).transpose();
    g += st.memory.sum() / st.memory.denominator();
  } else {
    g.noalias() = (s_i - st.memory.scalar(i)) * x_i.transpose() + model.mu() * st.w;
    g += st.memory.sum() / st.memory.denominator();
  }

  sample_update_set(sampler, st.rng, i, st.update_set);
  st.writes.clear();
  if (sampler.kind == SamplerKind::eps_n_saga) {
    fresh += apply_shared_update(st, model, i, sampler, st.w);
  } else {
    for (std::size_t j : st.update_set) {
      if (j == i) {
        write_exact(st, model, j, s_i, st.w, false, 0.0);
      } else {
        write_exact(st, model, j, model.xi_prime(j, st.w), st.w, false, 0.0);
        ++fresh;
      }
    }
  }

  st.w -= gamma * g;
  if (!st.w.allFinite())
    throw NumericalError(fmt::format("iterate became non-finite at step {} (index {}, gamma {})", t, i, gamma));
  st.counters.datapoint_evals += 1;
  st.counters.gradient_evals += fresh;
  return {i, fresh};
}

}  // namespace memvr
