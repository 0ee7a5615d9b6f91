#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "isd/tensor.hpp"

namespace isd {

/// Fixed-capacity FIFO of unit-norm teacher embeddings used as anchors.
///
/// Rows are stored in a ring buffer; `snapshot()` returns them oldest first
/// as a detached copy, so later enqueues never alter a snapshot already
/// handed to a loss.
class AnchorBank {
 public:
  /// Row norms must be within this of 1 when `check_norms` is on.
  static constexpr double kNormTolerance = 1e-6;

  AnchorBank(std::size_t capacity, std::size_t dim, bool check_norms = true);

  /// Appends the rows of `batch` ([b x d] or a single row), evicting the oldest rows when full.
  void enqueue(const Tensor& batch);
  /// Detached [count x d] copy of the valid rows, oldest first.
  Tensor snapshot() const;

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t count() const { return count_; }
  std::size_t head() const { return head_; }
  bool full() const { return count_ == capacity_; }
  /// Number of rows ever enqueued.
  std::uint64_t total_enqueued() const { return total_; }

  // Raw ring-buffer state for checkpointing.
  const std::vector<double>& storage() const { return storage_; }
  static AnchorBank restore(std::size_t capacity, std::size_t dim, std::size_t head, std::size_t count,
                            std::uint64_t total, std::vector<double> storage);

 private:
  std::size_t capacity_;
  std::size_t dim_;
  bool check_norms_;
  std::vector<double> storage_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
  std::uint64_t total_ = 0;
};

}  // namespace isd
