#include "memvr/memory.hpp"

#include <stdexcept>

#include <fmt/format.h>

#include "memvr/errors.hpp"

namespace memvr {

std::string_view to_string(StorageMode mode) {
  return mode == StorageMode::full_vectors ? "full" : "glm";
}

StorageMode parse_storage_mode(std::string_view text) {
  if (text == "full") return StorageMode::full_vectors;
  if (text == "glm") return StorageMode::glm_scalars;
  throw ConfigError(fmt::format("unknown storage mode '{}' (expected full or glm)", text));
}

MemoryState::MemoryState(StorageMode mode, std::size_t n, std::size_t d, bool normalize_by_seen)
    : mode_(mode),
      n_(n),
      d_(d),
      sum_(Vector::Zero(static_cast<Eigen::Index>(d))),
      written_(n, 0),
      last_update_(n, 0),
      normalize_by_seen_(normalize_by_seen) {
  if (mode_ == StorageMode::full_vectors)
    alpha_ = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  else
    scalars_.assign(n, 0.0);
}

double MemoryState::denominator() const {
  if (normalize_by_seen_) return seen_ > 0 ? static_cast<double>(seen_) : 1.0;
  return static_cast<double>(n_);
}

void MemoryState::write(std::size_t j, const Vector& alpha, std::uint64_t step) {
  if (j >= n_) throw std::out_of_range(fmt::format("memory slot {} out of range [0, {})", j, n_));
  if (mode_ != StorageMode::full_vectors) throw std::logic_error("vector write into scalar memory");
  auto row = alpha_.row(static_cast<Eigen::Index>(j));
  sum_ += alpha - row.transpose();
  row = alpha.transpose();
  if (!written_[j]) {
    written_[j] = 1;
    ++seen_;
  }
  last_update_[j] = step;
}

void MemoryState::write_scalar(std::size_t j, double scalar, const Eigen::Ref<const Eigen::RowVectorXd>& row,
                               std::uint64_t step) {
  if (j >= n_) throw std::out_of_range(fmt::format("memory slot {} out of range [0, {})", j, n_));
  if (mode_ != StorageMode::glm_scalars) throw std::logic_error("scalar write into vector memory");
  sum_ += (scalar - scalars_[j]) * row.transpose();
  scalars_[j] = scalar;
  if (!written_[j]) {
    written_[j] = 1;
    ++seen_;
  }
  last_update_[j] = step;
}

Vector MemoryState::slot_vector(std::size_t j, const ProblemInstance& instance) const {
  if (mode_ == StorageMode::full_vectors) return alpha_.row(static_cast<Eigen::Index>(j)).transpose();
  return scalars_[j] * instance.row(j).transpose();
}

Vector memory_mean_rebuild(const MemoryState& memory, const ProblemInstance& instance) {
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(memory.d()));
  for (std::size_t j = 0; j < memory.n(); ++j) {
    if (memory.mode() == StorageMode::full_vectors)
      sum += memory.slot(j).transpose();
    else
      sum += memory.scalar(j) * instance.row(j).transpose();
  }
  return sum / memory.denominator();
}

}  // namespace memvr
