#pragma once

// Distributions over the memory update set J that define each variance
// reduced method. Every method here except plain SGD refreshes each memory
// slot with the same marginal probability q/n per step.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include <boost/rational.hpp>

#include "memvr/neighbors.hpp"
#include "memvr/rng.hpp"

namespace memvr {

enum class SamplerKind { saga, q_saga, svrg, n_saga, eps_n_saga, sgd };

std::string_view to_string(SamplerKind kind);
SamplerKind parse_sampler_kind(std::string_view text);

struct SamplerSpec {
  SamplerKind kind = SamplerKind::saga;
  std::size_t n = 0;
  /// Expected number of refreshed slots per step (0 for plain SGD).
  std::size_t q = 1;
  std::shared_ptr<const NeighborGraph> graph;
  double eps = 0.0;
};

/// Validates and builds a sampler. SAGA forces q = 1 and SGD forces q = 0.
SamplerSpec make_sampler(SamplerKind kind, std::size_t n, std::size_t q = 1,
                         std::shared_ptr<const NeighborGraph> graph = nullptr, double eps = 0.0);

/// Draws J for a step whose datapoint index i was already drawn. The result
/// is sorted ascending.
///  saga        {i}
///  q_saga      {i} plus q-1 further indices uniform without replacement
///  svrg        empty, or all of [0, n) with probability q/n
///  n_saga      N_i (also eps_n_saga; pruning happens at write time)
///  sgd         empty
void sample_update_set(const SamplerSpec& sampler, Rng& rng, std::size_t i, std::vector<std::size_t>& out);
std::vector<std::size_t> sample_update_set(const SamplerSpec& sampler, Rng& rng, std::size_t i);

using Rational = boost::rational<std::int64_t>;

struct UpdateSetProbability {
  std::vector<std::size_t> set;
  Rational probability;
};

/// Joint law of the sampled index and the update set.
struct StepOutcome {
  std::size_t index;
  std::vector<std::size_t> set;
  Rational probability;
};

inline constexpr std::size_t kMaxEnumerationSize = 12;

/// Exact support of P{J} (marginal over the sampled index). n <= 12.
std::vector<UpdateSetProbability> enumerate_update_distribution(const SamplerSpec& sampler);
/// Exact support of P{i, J}. n <= 12.
std::vector<StepOutcome> enumerate_step_outcomes(const SamplerSpec& sampler);

}  // namespace memvr
