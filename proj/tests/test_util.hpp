#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gateseg/mask.hpp"
#include "gateseg/random.hpp"

namespace gateseg::test {

/// Mask from rows of '0'/'1' characters.
inline Mask mask_from(const std::vector<std::string>& rows) {
  const std::size_t h = rows.size(), w = rows.front().size();
  Mask m(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) m.set(x, y, rows[y][x] == '1');
  }
  return m;
}

/// Foreground density varies per mask so both sparse and dense cases appear.
inline Mask random_mask(Rng& rng, std::size_t w, std::size_t h) {
  Mask m(w, h);
  const double density = rng.uniform(0.0, 1.0);
  for (auto& b : m.bits()) b = rng.bernoulli(density) ? 1 : 0;
  return m;
}

/// Blobby random mask: union of a few rectangles.
inline Mask random_blobs(Rng& rng, std::size_t w, std::size_t h) {
  Mask m(w, h);
  const long n = rng.uniform_int(0, 3);
  for (long k = 0; k < n; ++k) {
    const auto x0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(w) - 1));
    const auto y0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(h) - 1));
    const auto x1 = static_cast<std::size_t>(rng.uniform_int(static_cast<long>(x0), static_cast<long>(w) - 1));
    const auto y1 = static_cast<std::size_t>(rng.uniform_int(static_cast<long>(y0), static_cast<long>(h) - 1));
    for (std::size_t y = y0; y <= y1; ++y) {
      for (std::size_t x = x0; x <= x1; ++x) m.set(x, y);
    }
  }
  return m;
}

/// Scratch directory removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("gateseg_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }

private:
  std::filesystem::path path_;
};

} // namespace gateseg::test
