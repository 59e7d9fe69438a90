#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace gateseg {

/// Exact accumulator for finite doubles. The stored value is the exact sum of
/// everything added or subtracted, so the result does not depend on the order
/// of operations and removals cancel additions bit for bit.
class ExactSum {
public:
  ExactSum& add(double x) {
    if (!std::isfinite(x)) throw std::domain_error("ExactSum: non-finite term");
    if (x == 0.0) return *this;
    int exp = 0;
    const double frac = std::frexp(x, &exp);
    const auto mant = static_cast<std::int64_t>(std::ldexp(frac, kMantBits));
    const int pos = exp - kMantBits - kLowExp;
    const int idx = pos / kLimbBits;
    const int shift = pos % kLimbBits;
    __int128 v = static_cast<__int128>(mant) * (static_cast<__int128>(1) << shift);
    for (int k = 0; k < 3; ++k) {
      const auto low = static_cast<std::int64_t>(v & kLimbMask);
      limbs_[static_cast<std::size_t>(idx + k)] += low;
      v >>= kLimbBits;
    }
    limbs_[static_cast<std::size_t>(idx + 3)] += static_cast<std::int64_t>(v);
    if (++pending_ >= kRenormEvery) normalize();
    return *this;
  }

  ExactSum& subtract(double x) { return add(-x); }

  ExactSum& operator+=(const ExactSum& other) {
    ExactSum o = other;
    o.normalize();
    normalize();
    for (std::size_t i = 0; i < kLimbs; ++i) limbs_[i] += o.limbs_[i];
    normalize();
    return *this;
  }

  /// Rounded to nearest from the exact value; a pure function of that value.
  double value() const {
    ExactSum copy = *this;
    copy.normalize();
    if (copy.limbs_[kLimbs - 1] < 0) {
      for (auto& l : copy.limbs_) l = -l;
      copy.normalize();
      return -copy.magnitude();
    }
    return copy.magnitude();
  }

  friend bool operator==(const ExactSum& a, const ExactSum& b) {
    ExactSum x = a, y = b;
    x.normalize();
    y.normalize();
    return x.limbs_ == y.limbs_;
  }

private:
  static constexpr int kLimbBits = 32;
  static constexpr int kMantBits = 53;
  static constexpr int kLowExp = -1152;
  static constexpr std::size_t kLimbs = 72;
  static constexpr std::int64_t kLimbMask = (std::int64_t{1} << kLimbBits) - 1;
  static constexpr int kRenormEvery = 1 << 20;

  void normalize() {
    for (std::size_t i = 0; i + 1 < kLimbs; ++i) {
      const std::int64_t carry = limbs_[i] >> kLimbBits;
      limbs_[i] -= carry * (std::int64_t{1} << kLimbBits);
      limbs_[i + 1] += carry;
    }
    pending_ = 0;
  }

  // Requires a normalized non-negative state.
  double magnitude() const {
    int top = -1;
    for (int i = static_cast<int>(kLimbs) - 1; i >= 0; --i) {
      if (limbs_[static_cast<std::size_t>(i)] != 0) {
        top = i;
        break;
      }
    }
    if (top < 0) return 0.0;
    unsigned __int128 acc = 0;
    for (int k = 0; k < 4; ++k) {
      const int i = top - k;
      acc <<= kLimbBits;
      if (i >= 0) acc |= static_cast<std::uint64_t>(limbs_[static_cast<std::size_t>(i)]);
    }
    for (int i = top - 4; i >= 0; --i) {
      if (limbs_[static_cast<std::size_t>(i)] != 0) {
        acc |= 1;
        break;
      }
    }
    return std::ldexp(static_cast<double>(acc), (top - 3) * kLimbBits + kLowExp);
  }

  std::array<std::int64_t, kLimbs> limbs_{};
  int pending_ = 0;
};

} // namespace gateseg
