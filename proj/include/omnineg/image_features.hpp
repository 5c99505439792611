#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "omnineg/numerics.hpp"

namespace omnineg {

/// Frozen symbolic image encoder: an image is the normalized sum of seeded
/// per-object feature vectors plus seeded per-image noise.
class ImageFeatureTable {
 public:
  ImageFeatureTable(const std::vector<std::string>& objects, std::size_t dim, std::uint64_t seed,
                    double noise_scale);

  UnitVector<double> encode(const std::vector<std::string>& objects, std::uint64_t image_seed) const;

  /// Stable per-image seed derived from the image id (FNV-1a) and the table seed.
  std::uint64_t image_seed(const std::string& image_id) const;

  const VectorXr& feature(const std::string& object) const;
  std::size_t dim() const noexcept { return dim_; }
  double noise_scale() const noexcept { return noise_scale_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  double noise_scale_;
  std::map<std::string, VectorXr> features_;
};

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash = 14695981039346656037ull);
std::uint64_t fnv1a64(const std::string& text, std::uint64_t hash = 14695981039346656037ull);

}  // namespace omnineg
