#pragma once

// Binary masks, mask sequences, union composition, presence indicator and the
// row-major run-length codec.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gateseg/error.hpp"

namespace gateseg {

/// Binary pixel grid, row-major, one byte per pixel holding 0 or 1.
class Mask {
public:
  Mask(std::size_t width, std::size_t height) : width_(width), height_(height) {
    if (width == 0 || height == 0) {
      throw InputError("mask dimensions must be positive, got " + std::to_string(width) + "x" +
                       std::to_string(height));
    }
    bits_.assign(width * height, 0);
  }

  /// Any nonzero byte in `bits` is treated as foreground.
  Mask(std::size_t width, std::size_t height, std::vector<std::uint8_t> bits)
      : width_(width), height_(height), bits_(std::move(bits)) {
    if (width == 0 || height == 0) {
      throw InputError("mask dimensions must be positive");
    }
    if (bits_.size() != width * height) {
      throw InputError("mask storage holds " + std::to_string(bits_.size()) + " pixels, expected " +
                       std::to_string(width * height));
    }
    for (auto& b : bits_) b = b ? 1 : 0;
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool at(std::size_t x, std::size_t y) const { return bits_[y * width_ + x] != 0; }
  void set(std::size_t x, std::size_t y, bool on = true) { bits_[y * width_ + x] = on ? 1 : 0; }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::span<std::uint8_t> bits() noexcept { return bits_; }
  std::span<const std::uint8_t> row(std::size_t y) const noexcept {
    return std::span<const std::uint8_t>(bits_).subspan(y * width_, width_);
  }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  bool empty() const noexcept {
    return std::none_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b != 0; });
  }

  bool same_shape(const Mask& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Mask&, const Mask&) = default;

private:
  std::size_t width_;
  std::size_t height_;
  std::vector<std::uint8_t> bits_;
};

/// Grayscale ingestion rule shared by every image reader.
constexpr bool is_foreground_gray(std::uint8_t value) noexcept { return value > 127; }

/// Ordered frames of identical dimensions; at least one frame.
class MaskSequence {
public:
  explicit MaskSequence(std::vector<Mask> frames) : frames_(std::move(frames)) {
    if (frames_.empty()) throw InputError("mask sequence needs at least one frame");
    for (std::size_t t = 1; t < frames_.size(); ++t) {
      if (!frames_[t].same_shape(frames_[0])) {
        throw InputError("frame " + std::to_string(t) + " has dimensions " +
                         std::to_string(frames_[t].width()) + "x" + std::to_string(frames_[t].height()) +
                         ", expected " + std::to_string(frames_[0].width()) + "x" +
                         std::to_string(frames_[0].height()));
      }
    }
  }

  static MaskSequence zeros(std::size_t width, std::size_t height, std::size_t frames) {
    if (frames == 0) throw InputError("mask sequence needs at least one frame");
    return MaskSequence(std::vector<Mask>(frames, Mask(width, height)));
  }

  std::size_t width() const noexcept { return frames_.front().width(); }
  std::size_t height() const noexcept { return frames_.front().height(); }
  std::size_t length() const noexcept { return frames_.size(); }

  const Mask& operator[](std::size_t t) const { return frames_[t]; }
  const std::vector<Mask>& frames() const noexcept { return frames_; }

  bool same_shape(const MaskSequence& other) const noexcept {
    return length() == other.length() && frames_.front().same_shape(other.frames_.front());
  }

  friend bool operator==(const MaskSequence&, const MaskSequence&) = default;

private:
  std::vector<Mask> frames_;
};

inline Mask union_masks(std::span<const Mask> masks) {
  if (masks.empty()) throw InputError("union_masks: empty input list");
  Mask out(masks[0].width(), masks[0].height());
  auto dst = out.bits();
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (!masks[i].same_shape(out)) {
      throw InputError("union_masks: mask " + std::to_string(i) + " dimension mismatch");
    }
    auto src = masks[i].bits();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] |= src[k];
  }
  return out;
}

/// Frame-wise union: the target mask of a query referring to several objects.
inline MaskSequence union_sequences(std::span<const MaskSequence> seqs) {
  if (seqs.empty()) throw InputError("union_sequences: empty input list");
  for (std::size_t i = 1; i < seqs.size(); ++i) {
    if (!seqs[i].same_shape(seqs[0])) {
      throw InputError("union_sequences: sequence " + std::to_string(i) + " shape mismatch");
    }
  }
  std::vector<Mask> frames;
  frames.reserve(seqs[0].length());
  std::vector<Mask> slice;
  slice.reserve(seqs.size());
  for (std::size_t t = 0; t < seqs[0].length(); ++t) {
    slice.clear();
    for (const auto& s : seqs) slice.push_back(s[t]);
    frames.push_back(union_masks(slice));
  }
  return MaskSequence(std::move(frames));
}

/// True iff some frame has a foreground pixel.
inline bool indicator(const MaskSequence& seq) noexcept {
  return std::any_of(seq.frames().begin(), seq.frames().end(),
                     [](const Mask& m) { return !m.empty(); });
}

/// Row-major run lengths, alternating background/foreground, starting with
/// background. A leading 0 marks a scan that starts on foreground.
struct RleMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint64_t> counts;

  friend bool operator==(const RleMask&, const RleMask&) = default;
};

inline RleMask rle_encode(const Mask& mask) {
  RleMask rle{mask.width(), mask.height(), {}};
  auto bits = mask.bits();
  std::uint8_t current = 0;
  std::uint64_t run = 0;
  for (auto b : bits) {
    if (b != current) {
      rle.counts.push_back(run);
      run = 0;
      current = b;
    }
    ++run;
  }
  rle.counts.push_back(run);
  return rle;
}

inline Mask rle_decode(const RleMask& rle) {
  if (rle.width == 0 || rle.height == 0) throw FormatError("rle: non-positive dimensions");
  const std::uint64_t total = static_cast<std::uint64_t>(rle.width) * rle.height;
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < rle.counts.size(); ++i) {
    if (rle.counts[i] == 0 && i != 0) {
      throw FormatError("rle: zero-length run at position " + std::to_string(i));
    }
    sum += rle.counts[i];
    if (sum > total) break;
  }
  if (sum != total) {
    throw FormatError("rle: run lengths sum to " + std::to_string(sum) + ", expected " +
                      std::to_string(total));
  }
  Mask mask(rle.width, rle.height);
  auto dst = mask.bits();
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (auto run : rle.counts) {
    if (value) std::fill_n(dst.begin() + static_cast<std::ptrdiff_t>(pos), run, std::uint8_t{1});
    pos += run;
    value ^= 1;
  }
  return mask;
}

} // namespace gateseg
