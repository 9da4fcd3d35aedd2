#pragma once

#include <cstdint>
#include <vector>

#include "wastesite/core/error.hpp"

namespace wastesite {

struct Components {
  /// 0 for background, 1..count for foreground.
  std::vector<std::uint32_t> labels;
  std::size_t count = 0;
  /// sizes[k] is the pixel count of label k + 1.
  std::vector<std::size_t> sizes;
};

/// Flood-fill labelling of nonzero pixels with 4- or 8-connectivity.
inline Components label_components(const std::vector<std::uint8_t>& mask, std::size_t w, std::size_t h,
                                   int connectivity = 8) {
  if (mask.size() != w * h) throw ShapeError("mask size does not match its dimensions");
  if (connectivity != 4 && connectivity != 8) throw ShapeError("connectivity must be 4 or 8");
  Components c;
  c.labels.assign(w * h, 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < w * h; ++start) {
    if (!mask[start] || c.labels[start]) continue;
    const auto label = static_cast<std::uint32_t>(++c.count);
    std::size_t size = 0;
    stack.push_back(start);
    c.labels[start] = label;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++size;
      const long x = static_cast<long>(i % w), y = static_cast<long>(i / w);
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          if ((!dx && !dy) || (connectivity == 4 && dx && dy)) continue;
          const long nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= long(w) || ny >= long(h)) continue;
          const std::size_t j = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
          if (mask[j] && !c.labels[j]) {
            c.labels[j] = label;
            stack.push_back(j);
          }
        }
    }
    c.sizes.push_back(size);
  }
  return c;
}

}  // namespace wastesite
