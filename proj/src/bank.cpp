#include "isd/bank.hpp"

#include <algorithm>
#include <cmath>

#include "isd/errors.hpp"

namespace isd {

AnchorBank::AnchorBank(std::size_t capacity, std::size_t dim, bool check_norms)
    : capacity_(capacity), dim_(dim), check_norms_(check_norms), storage_(capacity * dim, 0.0) {
  if (capacity == 0 || dim == 0) throw ContractError("anchor bank capacity and dimension must be positive");
}

void AnchorBank::enqueue(const Tensor& batch) {
  if (batch.cols() != dim_) {
    throw DimensionError("enqueue: rows of width " + std::to_string(batch.cols()) + " into a bank of width " +
                         std::to_string(dim_));
  }
  const auto rows = batch.rows();
  if (rows > capacity_) {
    throw ContractError("enqueue: batch of " + std::to_string(rows) + " rows exceeds capacity " +
                        std::to_string(capacity_));
  }
  const auto values = batch.values();
  if (check_norms_) {
    for (std::size_t r = 0; r < rows; ++r) {
      double sq = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) sq += values[r * dim_ + j] * values[r * dim_ + j];
      if (std::abs(std::sqrt(sq) - 1.0) > kNormTolerance) {
        throw ContractError("enqueue: row " + std::to_string(r) + " is not unit-norm");
      }
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(r * dim_), dim_,
                storage_.begin() + static_cast<std::ptrdiff_t>(head_ * dim_));
    head_ = (head_ + 1) % capacity_;
  }
  count_ = std::min(capacity_, count_ + rows);
  total_ += rows;
}

Tensor AnchorBank::snapshot() const {
  if (count_ == 0) throw EmptyBankError("anchor bank is empty; pre-fill it before computing the loss");
  std::vector<double> out(count_ * dim_);
  // The oldest valid row sits at head_ once the ring has wrapped, at 0 before.
  const std::size_t oldest = full() ? head_ : 0;
  for (std::size_t i = 0; i < count_; ++i) {
    const auto src = ((oldest + i) % capacity_) * dim_;
    std::copy_n(storage_.begin() + static_cast<std::ptrdiff_t>(src), dim_,
                out.begin() + static_cast<std::ptrdiff_t>(i * dim_));
  }
  return Tensor::from({count_, dim_}, std::move(out), false);
}

AnchorBank AnchorBank::restore(std::size_t capacity, std::size_t dim, std::size_t head, std::size_t count,
                               std::uint64_t total, std::vector<double> storage) {
  AnchorBank bank(capacity, dim);
  if (storage.size() != capacity * dim || head >= capacity || count > capacity) {
    throw CheckpointError("inconsistent anchor bank state");
  }
  bank.storage_ = std::move(storage);
  bank.head_ = head;
  bank.count_ = count;
  bank.total_ = total;
  return bank;
}

}  // namespace isd
