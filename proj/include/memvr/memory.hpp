#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "memvr/problem.hpp"

namespace memvr {

enum class StorageMode {
  /// alpha_j stored as the full gradient f_j'(w_tau) including mu * w_tau.
  full_vectors,
  /// Only the loss-part scalar is stored; the slot represents s_j * x_j and
  /// the regularizer term is applied exactly at the current iterate.
  glm_scalars,
};

std::string_view to_string(StorageMode mode);
StorageMode parse_storage_mode(std::string_view text);

/// Per-datapoint gradient memory with an incrementally maintained sum.
///
/// The mean is sum / denominator(), where the denominator is the number of
/// distinct slots written so far while normalize_by_seen() holds (first pass
/// of the growing-n protocol) and n afterwards.
class MemoryState {
 public:
  MemoryState(StorageMode mode, std::size_t n, std::size_t d, bool normalize_by_seen = false);

  StorageMode mode() const { return mode_; }
  std::size_t n() const { return n_; }
  std::size_t d() const { return d_; }
  std::size_t seen() const { return seen_; }
  bool normalize_by_seen() const { return normalize_by_seen_; }
  void stop_normalizing_by_seen() { normalize_by_seen_ = false; }
  double denominator() const;

  /// Full-vector write.
  void write(std::size_t j, const Vector& alpha, std::uint64_t step);
  /// Scalar write; `row` is x_j, needed to keep the running sum.
  void write_scalar(std::size_t j, double scalar, const Eigen::Ref<const Eigen::RowVectorXd>& row, std::uint64_t step);

  /// Stored vector of slot j (full mode), or its scalar (GLM mode).
  auto slot(std::size_t j) const { return alpha_.row(static_cast<Eigen::Index>(j)); }
  double scalar(std::size_t j) const { return scalars_[j]; }
  /// Slot j as a vector in either mode (GLM: scalar * x_j).
  Vector slot_vector(std::size_t j, const ProblemInstance& instance) const;

  const Vector& sum() const { return sum_; }
  Vector mean() const { return sum_ / denominator(); }

  bool written(std::size_t j) const { return written_[j] != 0; }
  std::uint64_t last_update(std::size_t j) const { return last_update_[j]; }

 private:
  StorageMode mode_;
  std::size_t n_;
  std::size_t d_;
  Matrix alpha_;
  std::vector<double> scalars_;
  Vector sum_;
  std::vector<char> written_;
  std::vector<std::uint64_t> last_update_;
  std::size_t seen_ = 0;
  bool normalize_by_seen_;
};

/// Recomputes the memory mean from the stored slots (drift audit).
Vector memory_mean_rebuild(const MemoryState& memory, const ProblemInstance& instance);

}  // namespace memvr
