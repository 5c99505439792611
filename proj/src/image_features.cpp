#include "omnineg/image_features.hpp"

#include <random>

namespace omnineg {

namespace {

VectorXr gaussian(std::size_t dim, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  VectorXr v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = dist(rng);
  return v;
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 1099511628211ull;
  }
  return hash;
}

std::uint64_t fnv1a64(const std::string& text, std::uint64_t hash) {
  return fnv1a64(text.data(), text.size(), hash);
}

ImageFeatureTable::ImageFeatureTable(const std::vector<std::string>& objects, std::size_t dim,
                                     std::uint64_t seed, double noise_scale)
    : dim_(dim), seed_(seed), noise_scale_(noise_scale) {
  if (dim < 2) throw Error(ErrorCode::InvalidConfig, "image feature dimension must be >= 2");
  if (noise_scale < 0) throw Error(ErrorCode::InvalidConfig, "image noise scale must be >= 0");
  std::mt19937_64 rng(seed);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(dim));
  for (const auto& object : objects) {
    if (!features_.emplace(object, gaussian(dim, rng, stddev)).second) {
      throw Error(ErrorCode::InvalidConfig, "duplicate object '" + object + "' in feature table");
    }
  }
}

std::uint64_t ImageFeatureTable::image_seed(const std::string& image_id) const {
  return fnv1a64(&seed_, sizeof seed_, fnv1a64(image_id));
}

const VectorXr& ImageFeatureTable::feature(const std::string& object) const {
  auto it = features_.find(object);
  if (it == features_.end()) throw Error(ErrorCode::UnknownObject, "no feature for '" + object + "'");
  return it->second;
}

UnitVector<double> ImageFeatureTable::encode(const std::vector<std::string>& objects,
                                             std::uint64_t image_seed) const {
  VectorXr sum = VectorXr::Zero(static_cast<Eigen::Index>(dim_));
  for (const auto& object : objects) sum += feature(object);
  std::mt19937_64 rng(image_seed);
  sum += noise_scale_ * gaussian(dim_, rng, 1.0 / std::sqrt(static_cast<double>(dim_)));
  return normalize(sum);
}

}  // namespace omnineg
