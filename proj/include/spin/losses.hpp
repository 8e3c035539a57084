#pragma once

// Multi-scale segmentation (SoftIoU) and orientation (cross-entropy) losses,
// plus the step learning-rate schedule.

#include <spin/network.hpp>

namespace spin {

// Per-batch ground truth at full, 1/2 and 1/4 resolution (same indexing as
// ModelOutput). Masks hold 0/1, orientation holds class indices 0..36.
template <typename T>
struct Targets {
  std::array<std::vector<T>, 3> mask;
  std::array<std::vector<int>, 3> orient;
};

struct LossReport {
  std::array<double, 3> seg{};
  std::array<double, 3> orient{};
  double l_seg = 0;
  double l_orient = 0;
  double l_final = 0;
};

enum class OrientWeighting { kUniform, kRoadOnly };

// sum over scales of mean over the batch of (1 - SoftIoU). `probs` are
// N x 1 x h x w probability maps.
template <typename T>
Tensor<T> seg_loss_from_probs(const std::array<Tensor<T>, 3>& probs, const std::array<std::vector<T>, 3>& gt,
                              std::array<double, 3>* per_scale = nullptr) {
  std::vector<Tensor<T>> scales;
  for (std::size_t s = 0; s < 3; ++s) {
    const Tensor<T>& p = probs[s];
    if (gt[s].size() != p.numel())
      throw ShapeError("seg_loss: ground truth at scale " + std::to_string(s) + " has " + std::to_string(gt[s].size()) +
                       " values for prediction " + to_string(p.shape()));
    const int n = p.rank() == 4 ? p.dim(0) : 1;
    const std::size_t per = p.numel() / static_cast<std::size_t>(n);
    std::vector<Tensor<T>> terms;
    for (int i = 0; i < n; ++i) {
      const Tensor<T> pi = p.rank() == 4 ? select(p, i) : p;
      std::vector<T> gi(gt[s].begin() + static_cast<std::ptrdiff_t>(per * i),
                        gt[s].begin() + static_cast<std::ptrdiff_t>(per * (i + 1)));
      terms.push_back(add_scalar(scale(soft_iou(pi, gi), T(-1)), T(1)));
    }
    Tensor<T> ls = scale(add_n(terms), T(1) / static_cast<T>(n));
    if (per_scale) (*per_scale)[s] = static_cast<double>(ls.item());
    scales.push_back(ls);
  }
  return add_n(scales);
}

template <typename T>
Tensor<T> seg_loss(const std::array<Tensor<T>, 3>& logits, const std::array<std::vector<T>, 3>& gt,
                   std::array<double, 3>* per_scale = nullptr) {
  return seg_loss_from_probs<T>({sigmoid(logits[0]), sigmoid(logits[1]), sigmoid(logits[2])}, gt, per_scale);
}

// sum over scales of the per-pixel mean cross-entropy over 37 classes.
template <typename T>
Tensor<T> orientation_loss(const std::array<Tensor<T>, 3>& logits, const std::array<std::vector<int>, 3>& gt,
                           OrientWeighting weighting = OrientWeighting::kUniform,
                           std::array<double, 3>* per_scale = nullptr) {
  std::vector<Tensor<T>> scales;
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<T> w;
    if (weighting == OrientWeighting::kRoadOnly) {
      w.resize(gt[s].size());
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = gt[s][i] > 0 ? T(1) : T(0);
    }
    Tensor<T> ls = cross_entropy_channels(logits[s], gt[s], w);
    if (per_scale) (*per_scale)[s] = static_cast<double>(ls.item());
    scales.push_back(ls);
  }
  return add_n(scales);
}

// L_final = L_seg + L_orient, with the scalar breakdown.
template <typename T>
std::pair<Tensor<T>, LossReport> total_loss(const ModelOutput<T>& out, const Targets<T>& tgt,
                                            OrientWeighting weighting = OrientWeighting::kUniform) {
  LossReport rep;
  const Tensor<T> ls = seg_loss(out.seg, tgt.mask, &rep.seg);
  const Tensor<T> lo = orientation_loss(out.orient, tgt.orient, weighting, &rep.orient);
  Tensor<T> total = add(ls, lo);
  rep.l_seg = static_cast<double>(ls.item());
  rep.l_orient = static_cast<double>(lo.item());
  rep.l_final = static_cast<double>(total.item());
  return {total, rep};
}

struct Schedule {
  double initial_lr = 0.01;
  std::vector<int> steps{50, 90, 110};
  double factor = 0.1;
  int epochs = 120;
};

// Initial rate multiplied by `factor` once per step boundary reached.
inline double lr_at(int epoch, const Schedule& s) {
  double lr = s.initial_lr;
  for (int step : s.steps)
    if (epoch >= step) lr *= s.factor;
  return lr;
}

}  // namespace spin
