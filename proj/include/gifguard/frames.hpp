#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace gifguard {

/// A clip of 8-bit RGB frames stored contiguously as (t, y, x, channel).
struct Frames {
  std::int64_t frames = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> rgb;

  Frames() = default;
  Frames(std::int64_t t, std::int64_t h, std::int64_t w, std::uint8_t fill = 0)
      : frames(t), height(h), width(w),
        rgb(static_cast<std::size_t>(t * h * w * 3), fill) {}

  bool empty() const noexcept { return rgb.empty(); }
  std::size_t pixels_per_frame() const noexcept {
    return static_cast<std::size_t>(height * width);
  }
  std::size_t offset(std::int64_t t, std::int64_t y, std::int64_t x) const noexcept {
    return static_cast<std::size_t>(((t * height + y) * width + x) * 3);
  }
  std::uint8_t* at(std::int64_t t, std::int64_t y, std::int64_t x) noexcept {
    return rgb.data() + offset(t, y, x);
  }
  const std::uint8_t* at(std::int64_t t, std::int64_t y, std::int64_t x) const noexcept {
    return rgb.data() + offset(t, y, x);
  }
  std::span<const std::uint8_t> frame(std::int64_t t) const noexcept {
    return {rgb.data() + offset(t, 0, 0), pixels_per_frame() * 3};
  }
  std::span<std::uint8_t> frame(std::int64_t t) noexcept {
    return {rgb.data() + offset(t, 0, 0), pixels_per_frame() * 3};
  }

  bool operator==(const Frames&) const = default;
};

}  // namespace gifguard
