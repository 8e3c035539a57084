#pragma once

// Inference helpers and the SGD training loop.

#include <spin/checkpoint.hpp>
#include <spin/metrics.hpp>

#include <cmath>
#include <fstream>
#include <limits>

namespace spin {

namespace detail {

inline int round_up(int v, int m) { return (v + m - 1) / m * m; }

template <typename T>
Tensor<T> image_tensor(const Image& img) {
  return Tensor<T>({img.channels, img.height, img.width}, std::vector<T>(img.data.begin(), img.data.end()));
}

}  // namespace detail

struct Prediction {
  Raster<float> road;    // 1 x H x W probabilities
  Mask orientation;      // argmax class per pixel
};

// Full-resolution outputs for an arbitrary-size image. Inputs larger than
// twice the configured input size are tiled with half-patch overlap; others
// are zero-padded up to a valid extent.
template <typename T>
Prediction predict(const RoadNetwork<T>& model, const Image& img) {
  if (img.channels != 3) throw ShapeError("predict: expected an RGB image, got " + std::to_string(img.channels) + " channels");
  const NetworkConfig& cfg = model.config();
  const int div = cfg.required_divisor();
  const int h = img.height, w = img.width;
  NoGradGuard no_grad;

  const auto run = [&](const Image& square) {
    const ModelOutput<T> out = model.forward(detail::image_tensor<T>(square), NormMode::kEval);
    const int n = square.height;
    Raster<float> prob(1, n, n);
    Raster<float> cls(1, n, n);
    const auto& seg = out.seg[0].data();
    const auto& ori = out.orient[0].data();
    const std::size_t plane = static_cast<std::size_t>(n) * n;
    for (std::size_t i = 0; i < plane; ++i) {
      prob.data[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(seg[i]))));
      int best = 0;
      for (int k = 1; k < cfg.n_orientation_classes; ++k)
        if (ori[k * plane + i] > ori[static_cast<std::size_t>(best) * plane + i]) best = k;
      cls.data[i] = static_cast<float>(best);
    }
    return std::pair{prob, cls};
  };

  Raster<float> prob, cls;
  const int limit = 2 * cfg.input_size;
  if (std::max(h, w) <= limit) {
    const int side = detail::round_up(std::max(h, w), div);
    auto [p, c] = run(pad_to(img, side));
    prob = crop(p, 0, 0, h, w);
    cls = crop(c, 0, 0, h, w);
  } else {
    const TileSpec spec{cfg.input_size, cfg.input_size / 2};
    const Image padded = pad_to(img, std::max({h, w, spec.patch}));
    std::vector<Patch<float>> pp, pc;
    for (auto& patch : tile(padded, spec)) {
      auto [p, c] = run(patch.raster);
      pp.push_back({patch.row, patch.col, std::move(p)});
      pc.push_back({patch.row, patch.col, std::move(c)});
    }
    prob = crop(stitch(pp, spec, padded.height, padded.width), 0, 0, h, w);
    cls = crop(stitch(pc, spec, padded.height, padded.width), 0, 0, h, w);
  }
  Prediction out;
  out.road = std::move(prob);
  out.orientation = Mask(1, h, w);
  for (std::size_t i = 0; i < cls.data.size(); ++i) out.orientation.data[i] = static_cast<std::uint8_t>(cls.data[i]);
  return out;
}

template <typename T>
Predictor model_predictor(const RoadNetwork<T>& model) {
  return [&model](const Sample& s) { return predict(model, s.image).road.data; };
}

template <typename T>
MetricsReport evaluate_model(const RoadNetwork<T>& model, const std::vector<Sample>& tiles, const EvalOptions& opt = {}) {
  return evaluate(model_predictor(model), tiles, opt);
}

// ---------------------------------------------------------------------------
// Training

struct LogRow {
  int epoch = 0;
  long iter = 0;
  double lr = 0, l_seg = 0, l_orient = 0, l_final = 0;
  double val_f1 = std::numeric_limits<double>::quiet_NaN();
  double val_iou = std::numeric_limits<double>::quiet_NaN();
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();
};

constexpr const char* kTrainLogHeader = "epoch,iter,lr,L_seg,L_orient,L_final,val_F1,val_IoU";

inline std::string log_line(const LogRow& r) {
  const auto num = [](double v) { return std::isnan(v) ? std::string() : detail::format_double(v); };
  return std::to_string(r.epoch) + ',' + std::to_string(r.iter) + ',' + detail::format_double(r.lr) + ',' +
         num(r.l_seg) + ',' + num(r.l_orient) + ',' + num(r.l_final) + ',' + num(r.val_f1) + ',' + num(r.val_iou);
}

struct FitOptions {
  Schedule schedule;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::string log_path;         // CSV log; empty disables
  std::string checkpoint_path;  // written at every epoch end; empty disables
  std::string config_text;      // echoed into checkpoints
  bool evaluate_val = true;
  // Called with each epoch-end row; returning true stops training.
  std::function<bool(const LogRow&)> on_epoch;
};

template <typename T>
struct FitResult {
  std::vector<LogRow> epochs;
  std::vector<double> iter_losses;
  TrainState<T> state;
};

// Runs epochs of shuffled mini-batches from `state` (fresh when null). The
// shuffle and augmentation stream is a single mt19937_64 saved with the state.
template <typename T>
FitResult<T> fit(RoadNetwork<T>& model, const std::vector<Sample>& train, const std::vector<Sample>& val,
                 const FitOptions& opt, const TrainState<T>* resume = nullptr) {
  if (train.empty()) throw std::invalid_argument("fit: empty training set");
  if (opt.train.batch_size < 1) throw std::invalid_argument("fit: batch_size must be >= 1");
  ParamSet<T> ps = model.parameters();
  std::vector<Tensor<T>> params = ps.tensors();
  const SgdHyper hyper{opt.schedule.initial_lr, opt.train.momentum, opt.train.weight_decay};

  FitResult<T> res;
  Rng rng(opt.seed);
  if (resume) {
    res.state = *resume;
    if (!res.state.rng_state.empty()) {
      std::istringstream ss(res.state.rng_state);
      ss >> rng;
      if (!ss) throw std::invalid_argument("fit: corrupt rng state in resume data");
    }
    if (res.state.optimizer.velocity.size() != params.size()) res.state.optimizer = OptimizerState<T>(params, hyper);
    res.state.optimizer.hyper.momentum = hyper.momentum;
    res.state.optimizer.hyper.weight_decay = hyper.weight_decay;
  } else {
    res.state.optimizer = OptimizerState<T>(params, hyper);
  }
  TrainState<T>& st = res.state;

  std::ofstream log;
  if (!opt.log_path.empty()) {
    const bool append = resume && std::filesystem::exists(opt.log_path);
    log.open(opt.log_path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("cannot open training log '" + opt.log_path + "'");
    if (!append) log << kTrainLogHeader << '\n';
  }

  std::vector<std::size_t> order(train.size());
  bool stop = false;
  while (!stop && st.epoch < opt.schedule.epochs) {
    st.optimizer.hyper.lr = lr_at(st.epoch, opt.schedule);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);

    double sum_seg = 0, sum_orient = 0, sum_final = 0;
    double win_seg = 0, win_orient = 0, win_final = 0;
    int batches = 0, window = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(opt.train.batch_size)) {
      std::vector<Sample> owned;
      std::vector<const Sample*> batch;
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(opt.train.batch_size));
      owned.reserve(end - b);
      for (std::size_t k = b; k < end; ++k) {
        const Sample& s = train[order[k]];
        if (opt.train.augment) owned.push_back(augment(s, rng()));
        else batch.push_back(&s);
      }
      for (const auto& s : owned) batch.push_back(&s);

      auto [input, targets] = make_batch<T>(batch);
      const ModelOutput<T> out = model.forward(input, NormMode::kTrain);
      auto [loss, rep] = total_loss(out, targets, opt.train.orient_weighting);
      zero_grad(params);
      backward(loss);
      sgd_step(params, st.optimizer);
      ++st.iter;
      ++batches;
      sum_seg += rep.l_seg;
      sum_orient += rep.l_orient;
      sum_final += rep.l_final;
      res.iter_losses.push_back(rep.l_final);

      if (opt.train.log_every > 0) {
        win_seg += rep.l_seg;
        win_orient += rep.l_orient;
        win_final += rep.l_final;
        if (++window == opt.train.log_every) {
          LogRow row{st.epoch, st.iter, st.optimizer.hyper.lr, win_seg / window, win_orient / window, win_final / window};
          if (log.is_open()) log << log_line(row) << '\n';
          win_seg = win_orient = win_final = 0;
          window = 0;
        }
      }
      if (opt.train.max_iters > 0 && st.iter >= opt.train.max_iters) {
        stop = true;
        break;
      }
    }

    LogRow row{st.epoch, st.iter, st.optimizer.hyper.lr, sum_seg / batches, sum_orient / batches, sum_final / batches};
    if (opt.evaluate_val && !val.empty()) {
      EvalOptions eo;
      eo.threshold = opt.train.threshold;
      eo.with_apls = false;
      const MetricsReport m = evaluate_model(model, val, eo);
      row.val_f1 = m.f1;
      row.val_iou = m.iou_a;
      row.val_accuracy = m.accuracy;
    }
    ++st.epoch;
    std::ostringstream rs;
    rs << rng;
    st.rng_state = rs.str();
    if (log.is_open()) log << log_line(row) << std::endl;
    if (!opt.checkpoint_path.empty()) save_checkpoint(opt.checkpoint_path, opt.config_text, ps, &st);
    res.epochs.push_back(row);
    if (opt.on_epoch && opt.on_epoch(row)) stop = true;
  }
  if (log.is_open()) log.flush();
  return res;
}

}  // namespace spin
