#pragma once

// Memorization update engine: w+ = w - gamma * (f_i'(w) - alpha_i + mean(alpha)),
// followed by refreshing the memory slots in the sampled update set J with
// gradients taken at the same (pre-step) iterate.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "memvr/memory.hpp"
#include "memvr/neighbors.hpp"
#include "memvr/problem.hpp"
#include "memvr/rng.hpp"
#include "memvr/sampler.hpp"

namespace memvr {

struct EngineOptions {
  StorageMode storage = StorageMode::glm_scalars;
  /// First pass introduces datapoints one at a time: step t samples uniformly
  /// among the first t+1 points of a fixed shuffled order, and the memory
  /// mean is normalized by the number of slots written so far.
  bool growing_n = true;
};

struct StepCounters {
  std::uint64_t datapoint_evals = 0;  // stochastic update steps
  std::uint64_t gradient_evals = 0;   // individual f_j' computations
};

struct MemoryWrite {
  std::size_t slot;
  bool shared;   // slot received the sampled point's scalar instead of its own
  double bound;  // eps_ij(w) for neighbor-sharing samplers, 0 otherwise
};

struct StepInfo {
  std::size_t index;
  std::size_t fresh_gradients;
};

struct OptState {
  Vector w;
  MemoryState memory;
  StepCounters counters;
  Rng rng;
  bool growing = false;
  std::vector<std::size_t> order{};
  std::shared_ptr<const EpsBoundTable> eps_table{};
  /// Update set and writes of the most recent step.
  std::vector<std::size_t> update_set{};
  std::vector<MemoryWrite> writes{};
  Vector direction{};
};

/// Fresh optimizer state: w = w0 (or 0), all memory slots zero.
OptState make_state(const LossModel& model, const SamplerSpec& sampler, const EngineOptions& options,
                    std::uint64_t seed, const std::optional<Vector>& w0 = std::nullopt);

/// g_i(w) for the current iterate and memory, without changing anything.
Vector update_direction(const OptState& state, const LossModel& model, std::size_t i);

/// One stochastic step. Throws NumericalError when the iterate stops being finite.
StepInfo step(OptState& state, const LossModel& model, const SamplerSpec& sampler, double gamma);

/// Memory refresh of N_i for neighbor samplers. A child j whose bound
/// eps_ij(w) <= eps receives the sampled point's scalar xi_i'(w) along x_j;
/// otherwise its exact gradient is computed. Must be called with the
/// pre-step iterate. Returns the number of fresh gradient computations.
std::size_t apply_shared_update(OptState& state, const LossModel& model, std::size_t i, const SamplerSpec& sampler,
                                 const Vector& w);

}  // namespace memvr
