#include "isd/augment.hpp"

#include <algorithm>
#include <cmath>

#include "isd/errors.hpp"

namespace isd {

AugmentPolicy AugmentPolicy::none() { return {}; }

AugmentPolicy AugmentPolicy::mild() {
  AugmentPolicy p;
  p.name = "mild";
  p.noise_std = 0.05;
  p.flip_prob = 0.5;
  return p;
}

AugmentPolicy AugmentPolicy::aggressive() {
  AugmentPolicy p;
  p.name = "aggressive";
  p.noise_std = 0.25;
  p.mask_prob = 0.2;
  p.scale_min = 0.5;
  p.scale_max = 1.5;
  p.crop_min = 0.6;
  p.crop_max = 1.0;
  p.flip_prob = 0.5;
  return p;
}

AugmentPolicy AugmentPolicy::preset(const std::string& name) {
  if (name == "none") return none();
  if (name == "mild") return mild();
  if (name == "aggressive") return aggressive();
  throw ConfigError("unknown augmentation policy '" + name + "' (expected none, mild or aggressive)");
}

void AugmentPolicy::validate() const {
  auto probability = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!probability(mask_prob) || !probability(flip_prob)) throw ConfigError("augmentation probabilities must lie in [0,1]");
  if (!(noise_std >= 0.0)) throw ConfigError("noise stddev must be non-negative");
  if (!(scale_min > 0.0) || scale_max < scale_min) throw ConfigError("scaling range must satisfy 0 < min <= max");
  if (!(rotation_max >= 0.0)) throw ConfigError("rotation range must be non-negative");
  if (!(crop_min > 0.0) || crop_max < crop_min || crop_max > 1.0) {
    throw ConfigError("crop fraction range must satisfy 0 < min <= max <= 1");
  }
}

bool AugmentPolicy::is_identity() const {
  return noise_std == 0.0 && mask_prob == 0.0 && scale_min == 1.0 && scale_max == 1.0 && rotation_max == 0.0 &&
         crop_min == 1.0 && crop_max == 1.0 && flip_prob == 0.0;
}

namespace {

// Bilinear resample of the window [top, top+ch) x [left, left+cw) back to h x w.
std::vector<double> crop_resize(const std::vector<double>& img, ImageDims dims, double top, double left, double ch,
                                double cw) {
  const auto h = dims.height, w = dims.width;
  std::vector<double> out(h * w);
  auto pixel = [&](std::size_t r, std::size_t c) { return img[r * w + c]; };
  for (std::size_t r = 0; r < h; ++r) {
    const double y = std::clamp(top + (static_cast<double>(r) + 0.5) * ch / static_cast<double>(h) - 0.5, 0.0,
                                static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(y);
    const auto y1 = std::min(y0 + 1, h - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < w; ++c) {
      const double x = std::clamp(left + (static_cast<double>(c) + 0.5) * cw / static_cast<double>(w) - 0.5, 0.0,
                                  static_cast<double>(w - 1));
      const auto x0 = static_cast<std::size_t>(x);
      const auto x1 = std::min(x0 + 1, w - 1);
      const double fx = x - static_cast<double>(x0);
      out[r * w + c] = (1 - fy) * ((1 - fx) * pixel(y0, x0) + fx * pixel(y0, x1)) +
                       fy * ((1 - fx) * pixel(y1, x0) + fx * pixel(y1, x1));
    }
  }
  return out;
}

}  // namespace

std::vector<double> augment(std::span<const double> sample, const AugmentPolicy& policy, Rng& rng,
                            std::optional<ImageDims> image) {
  std::vector<double> view(sample.begin(), sample.end());
  if (policy.is_identity()) return view;
  if (image && image->height * image->width != view.size()) {
    throw DimensionError("image dims do not match sample length");
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  if (image && (policy.crop_min < 1.0 || policy.crop_max < 1.0)) {
    const double frac = policy.crop_min + (policy.crop_max - policy.crop_min) * unit(rng);
    const double ch = frac * static_cast<double>(image->height);
    const double cw = frac * static_cast<double>(image->width);
    const double top = unit(rng) * (static_cast<double>(image->height) - ch);
    const double left = unit(rng) * (static_cast<double>(image->width) - cw);
    view = crop_resize(view, *image, top, left, ch, cw);
  }
  if (image && policy.flip_prob > 0.0 && unit(rng) < policy.flip_prob) {
    for (std::size_t r = 0; r < image->height; ++r) {
      std::reverse(view.begin() + static_cast<std::ptrdiff_t>(r * image->width),
                   view.begin() + static_cast<std::ptrdiff_t>((r + 1) * image->width));
    }
  }
  if (policy.rotation_max > 0.0 && view.size() >= 2) {
    const auto i = static_cast<std::size_t>(rng() % view.size());
    auto j = static_cast<std::size_t>(rng() % (view.size() - 1));
    if (j >= i) ++j;
    const double angle = policy.rotation_max * (2.0 * unit(rng) - 1.0);
    const double a = view[i], b = view[j];
    view[i] = std::cos(angle) * a - std::sin(angle) * b;
    view[j] = std::sin(angle) * a + std::cos(angle) * b;
  }
  if (policy.scale_min != 1.0 || policy.scale_max != 1.0) {
    const double s = policy.scale_min + (policy.scale_max - policy.scale_min) * unit(rng);
    for (auto& v : view) v *= s;
  }
  if (policy.mask_prob > 0.0) {
    for (auto& v : view) {
      if (unit(rng) < policy.mask_prob) v = 0.0;
    }
  }
  if (policy.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, policy.noise_std);
    for (auto& v : view) v += noise(rng);
  }
  return view;
}

double mean_distortion(std::span<const double> corpus, std::size_t dim, const AugmentPolicy& policy, Rng& rng,
                       std::size_t draws, std::optional<ImageDims> image) {
  if (dim == 0 || corpus.size() % dim != 0) throw DimensionError("corpus length is not a multiple of dim");
  const auto rows = corpus.size() / dim;
  double total = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    for (std::size_t r = 0; r < rows; ++r) {
      const auto sample = corpus.subspan(r * dim, dim);
      const auto view = augment(sample, policy, rng, image);
      for (std::size_t j = 0; j < dim; ++j) total += (view[j] - sample[j]) * (view[j] - sample[j]);
    }
  }
  return total / static_cast<double>(draws * rows);
}

}  // namespace isd
