#pragma once

// Pixel metrics, relaxed IoU, mask -> road graph extraction and APLS.

#include <spin/data.hpp>

#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <queue>

namespace spin {

struct PixelCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  PixelCounts& operator+=(const PixelCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

struct PixelScores {
  double precision = 0, recall = 0, f1 = 0, iou = 0, accuracy = 0;
};

inline Mask threshold_mask(const std::vector<float>& probs, int h, int w, double threshold = 0.5) {
  if (probs.size() != static_cast<std::size_t>(h) * w) throw ShapeError("threshold_mask: size mismatch");
  Mask m(1, h, w, 0);
  for (std::size_t i = 0; i < probs.size(); ++i) m.data[i] = probs[i] >= threshold ? 1 : 0;
  return m;
}

inline PixelCounts pixel_counts(const Mask& pred, const Mask& gt) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw ShapeError("pixel_counts: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                     " vs ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  PixelCounts c;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

// Empty prediction and empty ground truth score 1 everywhere; otherwise an
// undefined ratio is 0.
inline PixelScores pixel_scores(const PixelCounts& c) {
  PixelScores s;
  const std::size_t total = c.tp + c.fp + c.fn + c.tn;
  s.accuracy = total ? static_cast<double>(c.tp + c.tn) / static_cast<double>(total) : 1.0;
  if (c.tp + c.fp + c.fn == 0) {
    s.precision = s.recall = s.f1 = s.iou = 1.0;
    return s;
  }
  s.precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  s.recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  s.iou = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp + c.fn);
  return s;
}

inline PixelScores pixel_metrics(const std::vector<float>& probs, const Mask& gt, double threshold = 0.5) {
  return pixel_scores(pixel_counts(threshold_mask(probs, gt.height, gt.width, threshold), gt));
}

// Dilation by a (2b+1) x (2b+1) square: Chebyshev disk of radius b.
inline Mask dilate(const Mask& m, int radius) {
  if (radius < 0) throw std::invalid_argument("dilate: negative radius");
  Mask rows(1, m.height, m.width, 0), out(1, m.height, m.width, 0);
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c) {
      std::uint8_t v = 0;
      for (int k = std::max(0, c - radius); k <= std::min(m.width - 1, c + radius) && !v; ++k) v = m.at(r, k) ? 1 : 0;
      rows.at(r, c) = v;
    }
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c) {
      std::uint8_t v = 0;
      for (int k = std::max(0, r - radius); k <= std::min(m.height - 1, r + radius) && !v; ++k) v = rows.at(k, c);
      out.at(r, c) = v;
    }
  return out;
}

struct RelaxedCounts {
  std::size_t pred_hits = 0, gt_hits = 0, pred_total = 0, gt_total = 0;

  RelaxedCounts& operator+=(const RelaxedCounts& o) {
    pred_hits += o.pred_hits;
    gt_hits += o.gt_hits;
    pred_total += o.pred_total;
    gt_total += o.gt_total;
    return *this;
  }
  double score() const {
    if (pred_total + gt_total == 0) return 1.0;
    return static_cast<double>(pred_hits + gt_hits) / static_cast<double>(pred_total + gt_total);
  }
};

constexpr const char* kRelaxedIouFormula =
    "IoU_r = (|pred & dilate(gt,b)| + |gt & dilate(pred,b)|) / (|pred| + |gt|), Chebyshev dilation radius b";

inline RelaxedCounts relaxed_counts(const Mask& pred, const Mask& gt, int buffer = 4) {
  if (buffer < 0) throw std::invalid_argument("relaxed_iou: negative buffer " + std::to_string(buffer));
  if (pred.height != gt.height || pred.width != gt.width) throw ShapeError("relaxed_iou: mask size mismatch");
  const Mask dg = dilate(gt, buffer), dp = dilate(pred, buffer);
  RelaxedCounts c;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    if (pred.data[i]) {
      ++c.pred_total;
      if (dg.data[i]) ++c.pred_hits;
    }
    if (gt.data[i]) {
      ++c.gt_total;
      if (dp.data[i]) ++c.gt_hits;
    }
  }
  return c;
}

inline double relaxed_iou(const Mask& pred, const Mask& gt, int buffer = 4) {
  return relaxed_counts(pred, gt, buffer).score();
}

// ---------------------------------------------------------------------------
// Skeletons and road graphs

// Zhang-Suen thinning to a one-pixel-wide skeleton.
inline Mask zhang_suen_thin(const Mask& in) {
  Mask m(1, in.height, in.width, 0);
  for (std::size_t i = 0; i < in.data.size(); ++i) m.data[i] = in.data[i] ? 1 : 0;
  const auto px = [&](int r, int c) -> int {
    return (r < 0 || c < 0 || r >= m.height || c >= m.width) ? 0 : m.at(r, c);
  };
  bool changed = true;
  std::vector<std::pair<int, int>> kill;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      kill.clear();
      for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c) {
          if (!m.at(r, c)) continue;
          // P2..P9 clockwise from north.
          const int p[8] = {px(r - 1, c), px(r - 1, c + 1), px(r, c + 1), px(r + 1, c + 1),
                            px(r + 1, c), px(r + 1, c - 1), px(r, c - 1), px(r - 1, c - 1)};
          int b = 0, a = 0;
          for (int k = 0; k < 8; ++k) {
            b += p[k];
            if (p[k] == 0 && p[(k + 1) % 8] == 1) ++a;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          if (pass == 0 && (p[0] * p[2] * p[4] != 0 || p[2] * p[4] * p[6] != 0)) continue;
          if (pass == 1 && (p[0] * p[2] * p[6] != 0 || p[0] * p[4] * p[6] != 0)) continue;
          kill.emplace_back(r, c);
        }
      for (auto [r, c] : kill) m.at(r, c) = 0;
      changed = changed || !kill.empty();
    }
  }
  return m;
}

struct RoadGraph {
  struct Edge {
    int a, b;
    double length;
  };
  std::vector<Point> nodes;
  std::vector<Edge> edges;

  bool empty() const { return nodes.empty(); }
  double total_length() const {
    double s = 0;
    for (const auto& e : edges) s += e.length;
    return s;
  }
  int add_node(Point p) {
    nodes.push_back(p);
    return static_cast<int>(nodes.size()) - 1;
  }
  void add_edge(int a, int b, double length) {
    if (a == b) throw std::invalid_argument("RoadGraph: self-loop on node " + std::to_string(a));
    edges.push_back({a, b, length});
  }

  // Shortest path lengths from `src` (infinity when unreachable).
  std::vector<double> distances_from(int src) const {
    std::vector<std::vector<std::pair<int, double>>> adj(nodes.size());
    for (const auto& e : edges) {
      adj[static_cast<std::size_t>(e.a)].push_back({e.b, e.length});
      adj[static_cast<std::size_t>(e.b)].push_back({e.a, e.length});
    }
    std::vector<double> dist(nodes.size(), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[static_cast<std::size_t>(src)] = 0;
    pq.push({0.0, src});
    while (!pq.empty()) {
      auto [d, u] = pq.top();
      pq.pop();
      if (d > dist[static_cast<std::size_t>(u)]) continue;
      for (auto [v, w] : adj[static_cast<std::size_t>(u)])
        if (d + w < dist[static_cast<std::size_t>(v)]) {
          dist[static_cast<std::size_t>(v)] = d + w;
          pq.push({d + w, v});
        }
    }
    return dist;
  }
};

namespace detail {

// m-adjacency: 4-neighbours, plus diagonal neighbours that share no set
// 4-neighbour with the pixel. Keeps one-pixel skeletons free of triangles.
inline std::vector<std::pair<int, int>> m_neighbors(const Mask& m, int r, int c) {
  const auto on = [&](int y, int x) { return y >= 0 && x >= 0 && y < m.height && x < m.width && m.at(y, x) != 0; };
  std::vector<std::pair<int, int>> out;
  static constexpr int d4[4][2] = {{-1, 0}, {0, 1}, {1, 0}, {0, -1}};
  static constexpr int dd[4][2] = {{-1, -1}, {-1, 1}, {1, 1}, {1, -1}};
  for (const auto& d : d4)
    if (on(r + d[0], c + d[1])) out.emplace_back(r + d[0], c + d[1]);
  for (const auto& d : dd)
    if (on(r + d[0], c + d[1]) && !on(r + d[0], c) && !on(r, c + d[1])) out.emplace_back(r + d[0], c + d[1]);
  return out;
}

}  // namespace detail

// Thins the mask, places nodes at skeleton pixels whose degree is not 2
// (adjacent ones merged into one node) plus one node per isolated cycle, and
// traces degree-2 chains into edges weighted by step length (1 or sqrt 2).
inline RoadGraph mask_to_graph(const Mask& mask) {
  const Mask sk = zhang_suen_thin(mask);
  const int h = sk.height, w = sk.width;
  const auto idx = [w](int r, int c) { return static_cast<std::size_t>(r) * w + c; };

  std::vector<int> degree(sk.data.size(), -1);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (sk.at(r, c)) degree[idx(r, c)] = static_cast<int>(detail::m_neighbors(sk, r, c).size());

  RoadGraph g;
  std::vector<int> node_of(sk.data.size(), -1);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const std::size_t i = idx(r, c);
      if (degree[i] < 0 || degree[i] == 2 || node_of[i] >= 0) continue;
      // Flood-fill the cluster of adjacent non-chain pixels.
      std::vector<std::pair<int, int>> cluster{{r, c}}, todo{{r, c}};
      const int id = static_cast<int>(g.nodes.size());
      node_of[i] = id;
      while (!todo.empty()) {
        auto [y, x] = todo.back();
        todo.pop_back();
        for (auto [ny, nx] : detail::m_neighbors(sk, y, x)) {
          const std::size_t j = idx(ny, nx);
          if (degree[j] != 2 && node_of[j] < 0) {
            node_of[j] = id;
            cluster.emplace_back(ny, nx);
            todo.emplace_back(ny, nx);
          }
        }
      }
      double sr = 0, sc = 0;
      for (auto [y, x] : cluster) {
        sr += y;
        sc += x;
      }
      g.add_node({sr / static_cast<double>(cluster.size()), sc / static_cast<double>(cluster.size())});
    }

  std::vector<char> visited(sk.data.size(), 0);
  const auto step = [](int y0, int x0, int y1, int x1) { return (y0 != y1 && x0 != x1) ? std::sqrt(2.0) : 1.0; };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const int from = node_of[idx(r, c)];
      if (from < 0) continue;
      for (auto [ny, nx] : detail::m_neighbors(sk, r, c)) {
        const std::size_t j = idx(ny, nx);
        if (node_of[j] >= 0 || visited[j]) continue;
        double len = step(r, c, ny, nx);
        int py = r, px = c, cy = ny, cx = nx;
        int to = -1;
        for (;;) {
          visited[idx(cy, cx)] = 1;
          int next_y = -1, next_x = -1;
          for (auto [qy, qx] : detail::m_neighbors(sk, cy, cx)) {
            if (qy == py && qx == px) continue;
            const std::size_t q = idx(qy, qx);
            if (node_of[q] >= 0) {
              to = node_of[q];
              next_y = qy;
              next_x = qx;
              break;
            }
            if (!visited[q]) {
              next_y = qy;
              next_x = qx;
            }
          }
          if (next_y < 0) break;
          len += step(cy, cx, next_y, next_x);
          if (to >= 0) break;
          py = cy;
          px = cx;
          cy = next_y;
          cx = next_x;
        }
        if (to >= 0 && to != from) g.add_edge(from, to, len);
      }
    }

  // Pure cycles contain only degree-2 pixels and were never reached.
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const std::size_t i = idx(r, c);
      if (degree[i] != 2 || visited[i] || node_of[i] >= 0) continue;
      g.add_node({double(r), double(c)});
      std::vector<std::pair<int, int>> todo{{r, c}};
      visited[i] = 1;
      while (!todo.empty()) {
        auto [y, x] = todo.back();
        todo.pop_back();
        for (auto [ny, nx] : detail::m_neighbors(sk, y, x))
          if (!visited[idx(ny, nx)]) {
            visited[idx(ny, nx)] = 1;
            todo.emplace_back(ny, nx);
          }
      }
    }
  return g;
}

struct AplsOptions {
  double snap_radius = 4.0;
};

// Mean path-length similarity of `from` measured against `to`.
inline double apls_directional(const RoadGraph& from, const RoadGraph& to, const AplsOptions& opt = {}) {
  const std::size_t n = from.nodes.size();
  std::vector<int> snap(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < to.nodes.size(); ++j) {
      const double dr = from.nodes[i].row - to.nodes[j].row, dc = from.nodes[i].col - to.nodes[j].col;
      const double d = std::sqrt(dr * dr + dc * dc);
      if (d <= opt.snap_radius && d < best) {
        best = d;
        snap[i] = static_cast<int>(j);
      }
    }
  }
  std::map<int, std::vector<double>> to_dist;
  double total = 0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < n; ++a) {
    const auto da = from.distances_from(static_cast<int>(a));
    for (std::size_t b = a + 1; b < n; ++b) {
      const double la = da[b];
      if (!std::isfinite(la) || la <= 0) continue;
      ++pairs;
      if (snap[a] < 0 || snap[b] < 0) continue;
      auto it = to_dist.find(snap[a]);
      if (it == to_dist.end()) it = to_dist.emplace(snap[a], to.distances_from(snap[a])).first;
      const double lb = it->second[static_cast<std::size_t>(snap[b])];
      if (!std::isfinite(lb)) continue;
      total += 1.0 - std::min(1.0, std::abs(la - lb) / la);
    }
  }
  return pairs ? total / static_cast<double>(pairs) : 1.0;
}

// Harmonic mean of both directions. Both graphs empty: 1; exactly one empty: 0.
inline double apls(const RoadGraph& gt, const RoadGraph& prop, const AplsOptions& opt = {}) {
  if (opt.snap_radius < 0) throw std::invalid_argument("apls: negative snap radius");
  if (gt.empty() && prop.empty()) return 1.0;
  if (gt.empty() || prop.empty()) return 0.0;
  const double a = apls_directional(gt, prop, opt), b = apls_directional(prop, gt, opt);
  return a + b > 0 ? 2 * a * b / (a + b) : 0.0;
}

// ---------------------------------------------------------------------------
// Reports

struct MetricsReport {
  double precision = 0, recall = 0, f1 = 0, iou_a = 0, iou_r = 0, apls = 0;
  double accuracy = 0;
  std::size_t tiles = 0;

  static constexpr const char* kCsvHeader = "precision,recall,f1,iou_a,iou_r,apls";

  std::string csv() const {
    std::ostringstream os;
    os << std::setprecision(10) << kCsvHeader << '\n'
       << precision << ',' << recall << ',' << f1 << ',' << iou_a << ',' << iou_r << ',' << apls << '\n';
    return os.str();
  }

  std::string text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << "tiles      " << tiles << "\nprecision  " << precision << "\nrecall     "
       << recall << "\nF1         " << f1 << "\nIoU^a      " << iou_a << "\nIoU^r      " << iou_r << "\nAPLS       "
       << apls << "\n# " << kRelaxedIouFormula << "\n";
    return os.str();
  }
};

struct EvalOptions {
  double threshold = 0.5;
  int buffer = 4;
  AplsOptions apls;
  bool with_apls = true;
};

// Full-resolution road probabilities (H*W, row-major) for one sample.
using Predictor = std::function<std::vector<float>(const Sample&)>;

// Counts are pooled over tiles before forming ratios; APLS is the mean of
// per-tile scores in tile order.
inline MetricsReport evaluate(const Predictor& predict, const std::vector<Sample>& tiles, const EvalOptions& opt = {}) {
  if (tiles.empty()) throw std::invalid_argument("evaluate: empty dataset");
  PixelCounts pc;
  RelaxedCounts rc;
  double apls_sum = 0;
  for (const auto& s : tiles) {
    const Mask pred = threshold_mask(predict(s), s.mask.height, s.mask.width, opt.threshold);
    pc += pixel_counts(pred, s.mask);
    rc += relaxed_counts(pred, s.mask, opt.buffer);
    if (opt.with_apls) apls_sum += apls(mask_to_graph(s.mask), mask_to_graph(pred), opt.apls);
  }
  const PixelScores ps = pixel_scores(pc);
  MetricsReport r;
  r.precision = ps.precision;
  r.recall = ps.recall;
  r.f1 = ps.f1;
  r.iou_a = ps.iou;
  r.accuracy = ps.accuracy;
  r.iou_r = rc.score();
  r.apls = opt.with_apls ? apls_sum / static_cast<double>(tiles.size()) : 0.0;
  r.tiles = tiles.size();
  return r;
}

}  // namespace spin
