#pragma once

// Samples, synthetic road scenes, orientation ground truth, tiling,
// augmentation and multi-scale target preparation.

#include <spin/losses.hpp>

#include <cstdint>
#include <numbers>

namespace spin {

template <typename V>
struct Raster {
  int channels = 1, height = 0, width = 0;
  std::vector<V> data;

  Raster() = default;
  Raster(int c, int h, int w, V fill = V{}) : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  V& at(int c, int r, int col) { return data[(static_cast<std::size_t>(c) * height + r) * width + col]; }
  const V& at(int c, int r, int col) const { return data[(static_cast<std::size_t>(c) * height + r) * width + col]; }
  V& at(int r, int col) { return at(0, r, col); }
  const V& at(int r, int col) const { return at(0, r, col); }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }

  bool operator==(const Raster&) const = default;
};

using Image = Raster<float>;        // channels x H x W in [0, 1]
using Mask = Raster<std::uint8_t>;  // 1 x H x W

struct Point {
  double row = 0, col = 0;
  bool operator==(const Point&) const = default;
};
using Polyline = std::vector<Point>;

struct Sample {
  std::string name;
  Image image;               // 3 x H x W
  Mask mask;                 // {0, 1}
  Mask orient;               // {0..36}
  std::vector<Polyline> centerlines;
};

// ---------------------------------------------------------------------------
// Orientation ground truth

constexpr double kOrientationBinDegrees = 5.0;

// Undirected angle in [0, 180) of the direction (drow, dcol), measured
// counter-clockwise from the +column axis with rows pointing down.
inline double undirected_angle_deg(double drow, double dcol) {
  double a = std::atan2(-drow, dcol) * 180.0 / std::numbers::pi;
  a = std::fmod(a, 180.0);
  if (a < 0) a += 180.0;
  if (a >= 180.0) a -= 180.0;
  return a;
}

// Class 1 + floor(theta / 5) in 1..36; 0 is background.
inline int orientation_class(double angle_deg) {
  int b = static_cast<int>(std::floor(angle_deg / kOrientationBinDegrees + 1e-9));
  return 1 + std::clamp(b, 0, 35);
}

inline double point_segment_distance(Point p, Point a, Point b) {
  const double dr = b.row - a.row, dc = b.col - a.col;
  const double len2 = dr * dr + dc * dc;
  double t = len2 > 0 ? ((p.row - a.row) * dr + (p.col - a.col) * dc) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double r = a.row + t * dr - p.row, c = a.col + t * dc - p.col;
  return std::sqrt(r * r + c * c);
}

// Pixels within `radius` of a centerline get the quantized tangent angle of
// the nearest segment; everything else is background.
inline Mask orientation_gt(const std::vector<Polyline>& lines, int h, int w, double radius = 3.0) {
  Mask out(1, h, w, 0);
  for (const auto& line : lines)
    for (const auto& p : line)
      if (p.row < -0.5 || p.col < -0.5 || p.row > h - 0.5 || p.col > w - 0.5)
        throw std::out_of_range("orientation_gt: centerline point outside the raster");
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double best = radius;
      int cls = 0;
      bool found = false;
      for (const auto& line : lines)
        for (std::size_t i = 0; i + 1 < line.size(); ++i) {
          const double dist = point_segment_distance({double(r), double(c)}, line[i], line[i + 1]);
          if (dist < best || (!found && dist <= best)) {
            best = dist;
            found = true;
            cls = orientation_class(undirected_angle_deg(line[i + 1].row - line[i].row, line[i + 1].col - line[i].col));
          }
        }
      out.at(r, c) = static_cast<std::uint8_t>(cls);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic road scenes

struct SynthOptions {
  int divisor = 16;            // size must be a multiple of this
  bool occluders = false;      // draw tree-like strips across roads (imagery only)
  double orient_radius = 0;    // 0: 3 px scaled by size / 64
};

namespace detail {

inline double rand_uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}
inline int rand_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline Point border_point(Rng& rng, int size) {
  const double t = rand_uniform(rng, 0.1, 0.9) * (size - 1);
  switch (rand_int(rng, 0, 3)) {
    case 0: return {0.0, t};
    case 1: return {double(size - 1), t};
    case 2: return {t, 0.0};
    default: return {t, double(size - 1)};
  }
}

inline void paint_segment(Image& img, Mask* mask, Point a, Point b, double half_width, const float rgb[3]) {
  const int r0 = std::max(0, static_cast<int>(std::floor(std::min(a.row, b.row) - half_width - 1)));
  const int r1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(a.row, b.row) + half_width + 1)));
  const int c0 = std::max(0, static_cast<int>(std::floor(std::min(a.col, b.col) - half_width - 1)));
  const int c1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(a.col, b.col) + half_width + 1)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c)
      if (point_segment_distance({double(r), double(c)}, a, b) <= half_width) {
        for (int ch = 0; ch < 3; ++ch) img.at(ch, r, c) = rgb[ch];
        if (mask) mask->at(r, c) = 1;
      }
}

inline Sample synth_one(Rng& rng, Rng& occ_rng, int size, const SynthOptions& opt) {
  const double unit = size / 64.0;
  Sample s;
  s.image = Image(3, size, size);
  s.mask = Mask(1, size, size, 0);

  // Textured ground: base tint, two low-frequency waves, per-pixel noise.
  const float base[3] = {static_cast<float>(rand_uniform(rng, 0.20, 0.35)), static_cast<float>(rand_uniform(rng, 0.30, 0.45)),
                         static_cast<float>(rand_uniform(rng, 0.15, 0.25))};
  double fr[2], fc[2], ph[2];
  for (int k = 0; k < 2; ++k) {
    fr[k] = rand_uniform(rng, 0.02, 0.12) / unit;
    fc[k] = rand_uniform(rng, 0.02, 0.12) / unit;
    ph[k] = rand_uniform(rng, 0, 6.283);
  }
  std::normal_distribution<double> noise(0.0, 0.03);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double wave = 0.06 * std::sin(fr[0] * r + fc[0] * c + ph[0]) + 0.04 * std::sin(fr[1] * r - fc[1] * c + ph[1]);
      for (int ch = 0; ch < 3; ++ch)
        s.image.at(ch, r, c) = static_cast<float>(std::clamp(base[ch] + wave + noise(rng), 0.0, 1.0));
    }

  // Building-like distractor rectangles.
  const int buildings = rand_int(rng, 2, 6);
  for (int b = 0; b < buildings; ++b) {
    const int bh = rand_int(rng, static_cast<int>(3 * unit), static_cast<int>(10 * unit));
    const int bw = rand_int(rng, static_cast<int>(3 * unit), static_cast<int>(10 * unit));
    const int br = rand_int(rng, 0, size - bh), bc = rand_int(rng, 0, size - bw);
    const float tone = static_cast<float>(rand_uniform(rng, 0.35, 0.8));
    const float col[3] = {tone, static_cast<float>(tone * rand_uniform(rng, 0.5, 0.9)),
                          static_cast<float>(tone * rand_uniform(rng, 0.4, 0.8))};
    for (int r = br; r < br + bh; ++r)
      for (int c = bc; c < bc + bw; ++c)
        for (int ch = 0; ch < 3; ++ch) s.image.at(ch, r, c) = col[ch];
  }

  // Road graph: polylines from the border through random waypoints to the
  // border or onto an earlier road.
  const int roads = rand_int(rng, 2, 4);
  for (int k = 0; k < roads; ++k) {
    Polyline line;
    line.push_back(border_point(rng, size));
    const int waypoints = rand_int(rng, 1, 2);
    for (int i = 0; i < waypoints; ++i)
      line.push_back({rand_uniform(rng, 0.15, 0.85) * (size - 1), rand_uniform(rng, 0.15, 0.85) * (size - 1)});
    if (!s.centerlines.empty() && rand_int(rng, 0, 2) == 0) {
      const Polyline& prev = s.centerlines[static_cast<std::size_t>(rand_int(rng, 0, static_cast<int>(s.centerlines.size()) - 1))];
      const std::size_t seg = static_cast<std::size_t>(rand_int(rng, 0, static_cast<int>(prev.size()) - 2));
      const double t = rand_uniform(rng, 0.2, 0.8);
      line.push_back({prev[seg].row + t * (prev[seg + 1].row - prev[seg].row),
                      prev[seg].col + t * (prev[seg + 1].col - prev[seg].col)});
    } else {
      line.push_back(border_point(rng, size));
    }
    const double width = rand_int(rng, 1, 4) * unit;
    const float tone = static_cast<float>(rand_uniform(rng, 0.6, 0.8));
    const float col[3] = {tone, tone, static_cast<float>(tone * 0.97)};
    for (std::size_t i = 0; i + 1 < line.size(); ++i) paint_segment(s.image, &s.mask, line[i], line[i + 1], width / 2.0, col);
    s.centerlines.push_back(std::move(line));
  }
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      if (s.mask.at(r, c))
        for (int ch = 0; ch < 3; ++ch)
          s.image.at(ch, r, c) = static_cast<float>(std::clamp(s.image.at(ch, r, c) + noise(rng) * 0.5, 0.0, 1.0));

  // Occluders alter only the imagery; drawn from an independent stream so the
  // rest of the scene is identical with and without them.
  if (opt.occluders) {
    const int strips = rand_int(occ_rng, 1, 3);
    const float tree[3] = {0.08f, 0.22f, 0.07f};
    for (int k = 0; k < strips; ++k) {
      const Polyline& line = s.centerlines[static_cast<std::size_t>(rand_int(occ_rng, 0, static_cast<int>(s.centerlines.size()) - 1))];
      const double t = rand_uniform(occ_rng, 0.2, 0.8);
      const Point c{line[0].row + t * (line[1].row - line[0].row), line[0].col + t * (line[1].col - line[0].col)};
      const double dr = line[1].row - line[0].row, dc = line[1].col - line[0].col;
      const double len = std::max(1e-9, std::sqrt(dr * dr + dc * dc));
      const double half = rand_uniform(occ_rng, 4, 8) * unit;
      const Point a{c.row - dc / len * half, c.col + dr / len * half};
      const Point b{c.row + dc / len * half, c.col - dr / len * half};
      paint_segment(s.image, nullptr, a, b, rand_uniform(occ_rng, 1.5, 3.0) * unit, tree);
    }
  }

  const double radius = opt.orient_radius > 0 ? opt.orient_radius : 3.0 * unit;
  s.orient = orientation_gt(s.centerlines, size, size, radius);
  return s;
}

}  // namespace detail

// Deterministic per (seed, index). Every sample has at least one road pixel
// and at least 30% background.
inline std::vector<Sample> generate_synthetic(std::uint64_t seed, int count, int size, const SynthOptions& opt = {}) {
  if (count < 0) throw std::invalid_argument("generate_synthetic: negative count");
  if (size < 16 || opt.divisor < 1 || size % opt.divisor != 0)
    throw std::invalid_argument("generate_synthetic: size " + std::to_string(size) + " must be >= 16 and divisible by " +
                                std::to_string(opt.divisor));
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(i)};
    Rng rng(seq);
    Rng occ_rng(rng() ^ 0x0cc1de5ULL);
    for (;;) {
      Sample s = detail::synth_one(rng, occ_rng, size, opt);
      std::size_t road = 0;
      for (auto v : s.mask.data) road += v;
      if (road >= 1 && static_cast<double>(road) <= 0.7 * static_cast<double>(s.mask.data.size())) {
        char name[32];
        std::snprintf(name, sizeof name, "synth_%05d", i);
        s.name = name;
        out.push_back(std::move(s));
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tiling

struct TileSpec {
  int patch = 512;
  int overlap = 256;

  int stride() const { return patch - overlap; }
  void validate() const {
    if (patch <= 0 || overlap < 0 || overlap >= patch)
      throw std::invalid_argument("TileSpec: need 0 <= overlap < patch, got patch " + std::to_string(patch) +
                                  " overlap " + std::to_string(overlap));
  }
};

// Patch origins along one axis; the last patch is flush with the far edge.
inline std::vector<int> tile_positions(int extent, const TileSpec& spec) {
  spec.validate();
  if (extent < spec.patch)
    throw std::invalid_argument("tile: extent " + std::to_string(extent) + " smaller than patch " + std::to_string(spec.patch));
  std::vector<int> pos;
  for (int p = 0; p + spec.patch <= extent; p += spec.stride()) pos.push_back(p);
  if (pos.back() + spec.patch < extent) pos.push_back(extent - spec.patch);
  return pos;
}

template <typename V>
struct Patch {
  int row = 0, col = 0;
  Raster<V> raster;
};

template <typename V>
Raster<V> crop(const Raster<V>& src, int row, int col, int h, int w) {
  Raster<V> out(src.channels, h, w);
  for (int c = 0; c < src.channels; ++c)
    for (int r = 0; r < h; ++r)
      std::copy_n(&src.at(c, row + r, col), w, &out.at(c, r, 0));
  return out;
}

template <typename V>
std::vector<Patch<V>> tile(const Raster<V>& src, const TileSpec& spec) {
  const auto rows = tile_positions(src.height, spec);
  const auto cols = tile_positions(src.width, spec);
  std::vector<Patch<V>> out;
  for (int r : rows)
    for (int c : cols) out.push_back({r, c, crop(src, r, c, spec.patch, spec.patch)});
  return out;
}

// Zero-fills to size x size (bottom/right padding).
template <typename V>
Raster<V> pad_to(const Raster<V>& src, int size) {
  if (size < src.height || size < src.width)
    throw std::invalid_argument("pad_to: target " + std::to_string(size) + " smaller than raster");
  Raster<V> out(src.channels, size, size, V{});
  for (int c = 0; c < src.channels; ++c)
    for (int r = 0; r < src.height; ++r) std::copy_n(&src.at(c, r, 0), src.width, &out.at(c, r, 0));
  return out;
}

namespace detail {
// Owned interval [lo, hi) of each patch along an axis: split at the middle
// of every overlap.
inline std::vector<std::pair<int, int>> owned_ranges(const std::vector<int>& pos, int patch, int extent) {
  std::vector<std::pair<int, int>> out(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const int lo = i == 0 ? 0 : (pos[i] + pos[i - 1] + patch) / 2;
    const int hi = i + 1 == pos.size() ? extent : (pos[i + 1] + pos[i] + patch) / 2;
    out[i] = {lo, hi};
  }
  return out;
}
}  // namespace detail

// Crop-center reassembly of patches produced by tile() on a height x width raster.
template <typename V>
Raster<V> stitch(const std::vector<Patch<V>>& patches, const TileSpec& spec, int height, int width) {
  if (patches.empty()) throw std::invalid_argument("stitch: no patches");
  const auto rows = tile_positions(height, spec);
  const auto cols = tile_positions(width, spec);
  if (patches.size() != rows.size() * cols.size()) throw std::invalid_argument("stitch: patch count does not match layout");
  const auto ro = detail::owned_ranges(rows, spec.patch, height);
  const auto co = detail::owned_ranges(cols, spec.patch, width);
  Raster<V> out(patches.front().raster.channels, height, width);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto& p = patches[i * cols.size() + j];
      for (int c = 0; c < out.channels; ++c)
        for (int r = ro[i].first; r < ro[i].second; ++r)
          for (int q = co[j].first; q < co[j].second; ++q) out.at(c, r, q) = p.raster.at(c, r - p.row, q - p.col);
    }
  return out;
}

// Tiles a whole sample with shared patch positions.
inline std::vector<Sample> tile_sample(const Sample& s, const TileSpec& spec) {
  auto imgs = tile(s.image, spec);
  auto masks = tile(s.mask, spec);
  auto orients = tile(s.orient.data.empty() ? Mask(1, s.mask.height, s.mask.width, 0) : s.orient, spec);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    Sample t;
    t.name = s.name + "_r" + std::to_string(imgs[i].row) + "_c" + std::to_string(imgs[i].col);
    t.image = std::move(imgs[i].raster);
    t.mask = std::move(masks[i].raster);
    t.orient = std::move(orients[i].raster);
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

struct Transform {
  int rot90 = 0;  // counter-clockwise quarter turns
  bool hflip = false;
  bool vflip = false;

  bool identity() const { return rot90 % 4 == 0 && !hflip && !vflip; }
};

inline Transform draw_transform(std::uint64_t seed) {
  Rng rng(seed);
  Transform t;
  t.rot90 = detail::rand_int(rng, 0, 3);
  t.hflip = detail::rand_int(rng, 0, 1) == 1;
  t.vflip = detail::rand_int(rng, 0, 1) == 1;
  return t;
}

// Class remaps: a quarter turn adds 90 degrees (18 bins); a mirror maps
// theta to 180 - theta, i.e. bin b to (36 - b) mod 36.
inline int rotate_orientation_class(int cls, int quarter_turns) {
  if (cls == 0) return 0;
  return 1 + ((cls - 1 + 18 * (quarter_turns & 1)) % 36);
}
inline int mirror_orientation_class(int cls) {
  if (cls == 0) return 0;
  return 1 + ((36 - (cls - 1)) % 36);
}

namespace detail {
template <typename V>
Raster<V> rot90_ccw(const Raster<V>& src) {
  Raster<V> out(src.channels, src.width, src.height);
  for (int c = 0; c < src.channels; ++c)
    for (int r = 0; r < src.height; ++r)
      for (int q = 0; q < src.width; ++q) out.at(c, src.width - 1 - q, r) = src.at(c, r, q);
  return out;
}
template <typename V>
Raster<V> flip_h(const Raster<V>& src) {
  Raster<V> out(src.channels, src.height, src.width);
  for (int c = 0; c < src.channels; ++c)
    for (int r = 0; r < src.height; ++r)
      for (int q = 0; q < src.width; ++q) out.at(c, r, src.width - 1 - q) = src.at(c, r, q);
  return out;
}
template <typename V>
Raster<V> flip_v(const Raster<V>& src) {
  Raster<V> out(src.channels, src.height, src.width);
  for (int c = 0; c < src.channels; ++c)
    for (int r = 0; r < src.height; ++r)
      for (int q = 0; q < src.width; ++q) out.at(c, src.height - 1 - r, q) = src.at(c, r, q);
  return out;
}
}  // namespace detail

// Rotation, then horizontal flip, then vertical flip, applied consistently to
// image, mask, orientation classes and centerlines.
inline Sample augment(const Sample& in, const Transform& t) {
  Sample s = in;
  for (int k = 0; k < ((t.rot90 % 4) + 4) % 4; ++k) {
    const int w = s.image.width;
    s.image = detail::rot90_ccw(s.image);
    s.mask = detail::rot90_ccw(s.mask);
    s.orient = detail::rot90_ccw(s.orient);
    for (auto& v : s.orient.data) v = static_cast<std::uint8_t>(rotate_orientation_class(v, 1));
    for (auto& line : s.centerlines)
      for (auto& p : line) p = {w - 1 - p.col, p.row};
  }
  if (t.hflip) {
    const int w = s.image.width;
    s.image = detail::flip_h(s.image);
    s.mask = detail::flip_h(s.mask);
    s.orient = detail::flip_h(s.orient);
    for (auto& v : s.orient.data) v = static_cast<std::uint8_t>(mirror_orientation_class(v));
    for (auto& line : s.centerlines)
      for (auto& p : line) p.col = w - 1 - p.col;
  }
  if (t.vflip) {
    const int h = s.image.height;
    s.image = detail::flip_v(s.image);
    s.mask = detail::flip_v(s.mask);
    s.orient = detail::flip_v(s.orient);
    for (auto& v : s.orient.data) v = static_cast<std::uint8_t>(mirror_orientation_class(v));
    for (auto& line : s.centerlines)
      for (auto& p : line) p.row = h - 1 - p.row;
  }
  return s;
}

inline Sample augment(const Sample& in, std::uint64_t seed) { return augment(in, draw_transform(seed)); }

// ---------------------------------------------------------------------------
// Multi-scale targets

// Mask downscale by an integer factor via max pooling (roads survive).
inline Mask downscale_mask(const Mask& m, int factor) {
  if (factor < 1 || m.height % factor != 0 || m.width % factor != 0)
    throw std::invalid_argument("downscale_mask: extents not divisible by " + std::to_string(factor));
  Mask out(1, m.height / factor, m.width / factor, 0);
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c)
      if (m.at(r, c)) out.at(r / factor, c / factor) = 1;
  return out;
}

// Nearest-neighbour downscale (top-left sample of each cell).
inline Mask downscale_classes(const Mask& m, int factor) {
  if (factor < 1 || m.height % factor != 0 || m.width % factor != 0)
    throw std::invalid_argument("downscale_classes: extents not divisible by " + std::to_string(factor));
  Mask out(1, m.height / factor, m.width / factor, 0);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c) out.at(r, c) = m.at(r * factor, c * factor);
  return out;
}

// Stacks samples into an N x 3 x H x W input and multi-scale targets.
template <typename T>
std::pair<Tensor<T>, Targets<T>> make_batch(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw std::invalid_argument("make_batch: empty batch");
  const int h = samples.front()->image.height, w = samples.front()->image.width;
  const int n = static_cast<int>(samples.size());
  std::vector<T> img;
  img.reserve(static_cast<std::size_t>(n) * 3 * h * w);
  Targets<T> tgt;
  for (const Sample* s : samples) {
    if (s->image.height != h || s->image.width != w || s->image.channels != 3)
      throw ShapeError("make_batch: samples must share a 3 x H x W shape");
    img.insert(img.end(), s->image.data.begin(), s->image.data.end());
    for (int k = 0; k < 3; ++k) {
      const int f = 1 << k;
      const Mask m = k == 0 ? s->mask : downscale_mask(s->mask, f);
      const Mask o = k == 0 ? s->orient : downscale_classes(s->orient, f);
      for (auto v : m.data) tgt.mask[static_cast<std::size_t>(k)].push_back(static_cast<T>(v));
      for (auto v : o.data) tgt.orient[static_cast<std::size_t>(k)].push_back(static_cast<int>(v));
    }
  }
  return {Tensor<T>({n, 3, h, w}, std::move(img)), std::move(tgt)};
}

}  // namespace spin
