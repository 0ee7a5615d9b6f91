#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "isd/augment.hpp"
#include "isd/tensor.hpp"

namespace isd {

enum class Split : std::uint8_t { train = 0, eval = 1 };

/// Samples as rows of a row-major [N x dim] matrix. Images are stored
/// flattened, with `image` recording their height and width.
struct LabeledDataset {
  std::vector<double> samples;
  std::size_t dim = 0;
  std::vector<int> labels;
  int num_classes = 0;
  std::optional<ImageDims> image;
  Split split = Split::train;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return std::span<const double>(samples).subspan(i * dim, dim); }
  std::vector<std::size_t> class_counts() const;
  /// Throws DataError when the invariants (lengths, label range) are broken.
  void validate() const;
  /// Rows `indices` as an [n x dim] tensor.
  Tensor gather(std::span<const std::size_t> indices) const;
  Tensor all_rows() const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

struct MixtureParams {
  int classes = 3;
  std::size_t per_class = 200;
  std::size_t dim = 32;
  double sep = 6.0;
  bool operator==(const MixtureParams&) const = default;
};

/// Class means on the sphere of radius `sep`, unit-variance isotropic
/// clusters around them. The means depend on `seed` only, so the train and
/// eval splits of one seed share them while drawing different samples.
LabeledDataset gen_gaussian_mixture(const MixtureParams& params, std::uint64_t seed, Split split = Split::train);

/// IDX image file (unsigned-byte payload, pixels scaled to [0,1]) plus its
/// label file. Three-dimensional image files keep their height and width.
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Keeps every sample of `large_classes` and a seeded uniform subsample of
/// `small_count` samples from each other class; original order is kept.
LabeledDataset make_unbalanced(const LabeledDataset& ds, std::span<const int> large_classes, std::size_t small_count,
                               std::uint64_t seed);

/// Indices that make_unbalanced retains, ascending.
std::vector<std::size_t> unbalanced_indices(const LabeledDataset& ds, std::span<const int> large_classes,
                                            std::size_t small_count, std::uint64_t seed);

/// Binary container: "ISDDSET1", u32 version, u64 N, u64 dim, i32 classes,
/// u32 height, u32 width, u8 split, i32 labels[N], f64 samples[N*dim];
/// little-endian throughout.
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace isd
