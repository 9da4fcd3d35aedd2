#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "wastesite/core/error.hpp"
#include "wastesite/core/geometry.hpp"
#include "wastesite/detect/heatmap.hpp"

namespace wastesite::monitor {

// Boundaries run along pixel edges (cracks), so a region of n pixels has polygon area
// exactly n. Foreground is 4-connected: at a vertex where two foreground pixels touch only
// diagonally the trace turns tightly around the pixel it came from, keeping them apart.
// A ring that still revisits a vertex (an inlet pinched shut at one corner) is split there,
// which yields one outer ring plus a hole for the inlet.

namespace detail {

struct Crack {
  std::size_t from, to;
  int dx, dy;
};

inline Ring drop_collinear(const Ring& r) {
  Ring out;
  const std::size_t n = r.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = r[(i + n - 1) % n];
    const Point& b = r[i];
    const Point& c = r[(i + 1) % n];
    if ((b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x) != 0.0) out.push_back(b);
  }
  return out;
}

/// Splits a closed vertex sequence wherever a vertex repeats.
inline void split_loops(const std::vector<std::size_t>& seq, std::vector<std::vector<std::size_t>>& out) {
  std::vector<std::size_t> stack;
  std::unordered_map<std::size_t, std::size_t> pos;
  for (std::size_t v : seq) {
    const auto it = pos.find(v);
    if (it == pos.end()) {
      pos.emplace(v, stack.size());
      stack.push_back(v);
      continue;
    }
    const std::size_t p = it->second;
    out.emplace_back(stack.begin() + static_cast<std::ptrdiff_t>(p), stack.end());
    for (std::size_t k = p + 1; k < stack.size(); ++k) pos.erase(stack[k]);
    stack.resize(p + 1);
  }
  if (stack.size() >= 3) out.push_back(std::move(stack));
}

}  // namespace detail

/// Pixel-boundary polygons of the nonzero region of a w x h mask, one per 4-connected
/// component, with holes. Coordinates are pixel corners offset by (x0, y0).
inline std::vector<Polygon> trace_regions(const std::vector<std::uint8_t>& mask, std::size_t w, std::size_t h,
                                          double x0 = 0.0, double y0 = 0.0) {
  if (mask.size() != w * h) throw ShapeError("contour mask size does not match its dimensions");
  const std::size_t stride = w + 1;
  auto fg = [&](long x, long y) { return x >= 0 && y >= 0 && x < long(w) && y < long(h) && mask[std::size_t(y) * w + std::size_t(x)]; };
  auto vid = [&](std::size_t x, std::size_t y) { return y * stride + x; };

  std::vector<detail::Crack> cracks;
  std::unordered_map<std::size_t, std::array<int, 2>> out_of;
  auto add = [&](std::size_t ax, std::size_t ay, std::size_t bx, std::size_t by) {
    const int id = static_cast<int>(cracks.size());
    cracks.push_back({vid(ax, ay), vid(bx, by), int(bx) - int(ax), int(by) - int(ay)});
    auto [it, fresh] = out_of.try_emplace(vid(ax, ay), std::array<int, 2>{id, -1});
    if (!fresh) it->second[1] = id;
  };
  // foreground on the same side of every crack
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (!mask[y * w + x]) continue;
      const long X = long(x), Y = long(y);
      if (!fg(X, Y - 1)) add(x + 1, y, x, y);
      if (!fg(X - 1, Y)) add(x, y, x, y + 1);
      if (!fg(X, Y + 1)) add(x, y + 1, x + 1, y + 1);
      if (!fg(X + 1, Y)) add(x + 1, y + 1, x + 1, y);
    }

  auto next = [&](int e) {
    const auto& c = cracks[std::size_t(e)];
    const auto& outs = out_of.at(c.to);
    if (outs[1] < 0) return outs[0];
    const auto& a = cracks[std::size_t(outs[0])];
    return c.dx * a.dy - c.dy * a.dx < 0 ? outs[0] : outs[1];
  };

  std::vector<std::vector<std::size_t>> loops;
  std::vector<char> used(cracks.size(), 0);
  std::vector<std::size_t> seq;
  for (std::size_t start = 0; start < cracks.size(); ++start) {
    if (used[start]) continue;
    seq.clear();
    int e = static_cast<int>(start);
    do {
      used[std::size_t(e)] = 1;
      seq.push_back(cracks[std::size_t(e)].from);
      e = next(e);
    } while (e != static_cast<int>(start));
    detail::split_loops(seq, loops);
  }

  std::vector<Ring> outers, holes;
  for (const auto& l : loops) {
    Ring r;
    for (std::size_t v : l) r.push_back({double(v % stride), double(v / stride)});
    r = detail::drop_collinear(r);
    if (r.size() < 3) continue;
    (signed_area(r) < 0.0 ? outers : holes).push_back(std::move(r));
  }

  std::vector<Polygon> polys;
  std::vector<double> areas;
  for (auto& r : outers) {
    areas.push_back(std::abs(signed_area(r)));
    polys.push_back({std::move(r), {}});
  }
  for (auto& r : holes) {
    // centre of the background pixel beside the hole's first step
    const double len = std::hypot(r[1].x - r[0].x, r[1].y - r[0].y);
    const double dx = (r[1].x - r[0].x) / len, dy = (r[1].y - r[0].y) / len;
    const Point probe{r[0].x + 0.5 * dx - 0.5 * dy, r[0].y + 0.5 * dy + 0.5 * dx};
    std::size_t best = polys.size();
    for (std::size_t k = 0; k < polys.size(); ++k)
      if (contains(polys[k].outer, probe) && (best == polys.size() || areas[k] < areas[best])) best = k;
    if (best == polys.size()) throw Error("contour tracing left a hole without an enclosing boundary");
    polys[best].holes.push_back(std::move(r));
  }
  for (auto& p : polys) {
    for (auto& v : p.outer) v = {v.x + x0, v.y + y0};
    for (auto& hr : p.holes)
      for (auto& v : hr) v = {v.x + x0, v.y + y0};
  }
  return polys;
}

/// Polygons around heatmap pixels that are valid and score at least `threshold`,
/// in scene pixel coordinates.
inline std::vector<Polygon> extract_contours(const detect::Heatmap& h, double threshold) {
  std::vector<std::uint8_t> mask(h.pixels());
  for (std::size_t i = 0; i < h.pixels(); ++i) mask[i] = h.valid[i] && h.scores[i] >= static_cast<float>(threshold);
  return trace_regions(mask, h.width, h.height, double(h.x0), double(h.y0));
}

/// Pixel area (outer minus holes) of a polygon set.
inline double pixel_area(const std::vector<Polygon>& ps) {
  double a = 0.0;
  for (const auto& p : ps) a += area(p);
  return a;
}

}  // namespace wastesite::monitor
