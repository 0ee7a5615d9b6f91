#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "isd/rng.hpp"

namespace isd {

struct ImageDims {
  std::size_t height = 0;
  std::size_t width = 0;
  bool operator==(const ImageDims&) const = default;
};

/// Stochastic view generator. Feature-vector transforms: rotation in a random
/// coordinate plane, global scaling, coordinate masking, additive noise.
/// Image-only transforms: random crop resized back, horizontal flip.
struct AugmentPolicy {
  std::string name = "none";
  double noise_std = 0.0;
  double mask_prob = 0.0;
  double scale_min = 1.0;
  double scale_max = 1.0;
  /// Radians; the angle is drawn from [-rotation_max, rotation_max].
  double rotation_max = 0.0;
  /// Side of the crop window as a fraction of the image side.
  double crop_min = 1.0;
  double crop_max = 1.0;
  double flip_prob = 0.0;

  static AugmentPolicy none();
  static AugmentPolicy mild();
  static AugmentPolicy aggressive();
  /// Preset by name: none, mild or aggressive.
  static AugmentPolicy preset(const std::string& name);

  void validate() const;
  bool is_identity() const;
  bool operator==(const AugmentPolicy&) const = default;
};

/// One augmented view of `sample`. Deterministic given the generator state;
/// the identity policy returns the input unchanged and draws nothing.
std::vector<double> augment(std::span<const double> sample, const AugmentPolicy& policy, Rng& rng,
                            std::optional<ImageDims> image = std::nullopt);

/// Mean squared L2 distance between samples and their augmented views,
/// averaged over `draws` passes of the corpus (rows of length `dim`).
double mean_distortion(std::span<const double> corpus, std::size_t dim, const AugmentPolicy& policy, Rng& rng,
                       std::size_t draws, std::optional<ImageDims> image = std::nullopt);

}  // namespace isd
