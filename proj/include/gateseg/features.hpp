#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "gateseg/error.hpp"

namespace gateseg {

/// Fused prompt features for one query, shape tokens x frames x dim, C-order.
class FeatureTensor {
public:
  FeatureTensor(std::size_t tokens, std::size_t frames, std::size_t dim, std::vector<double> values)
      : tokens_(tokens), frames_(frames), dim_(dim), values_(std::move(values)) {
    if (tokens == 0 || frames == 0 || dim == 0) {
      throw InputError("feature tensor extents must be positive");
    }
    if (values_.size() != tokens * frames * dim) {
      throw InputError("feature tensor holds " + std::to_string(values_.size()) + " values, expected " +
                       std::to_string(tokens * frames * dim));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) {
        throw InputError("feature tensor value " + std::to_string(i) + " is not finite");
      }
    }
  }

  std::size_t tokens() const noexcept { return tokens_; }
  std::size_t frames() const noexcept { return frames_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<double>& values() const noexcept { return values_; }

  double at(std::size_t n, std::size_t t, std::size_t d) const {
    return values_[(n * frames_ + t) * dim_ + d];
  }

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;

private:
  std::size_t tokens_;
  std::size_t frames_;
  std::size_t dim_;
  std::vector<double> values_;
};

} // namespace gateseg
