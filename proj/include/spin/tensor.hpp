#pragma once

// Dense row-major tensors with a tape-ordered reverse-mode autodiff graph.
//
// Every tensor produced by an op while gradient recording is enabled keeps
// shared references to its inputs and a backward closure. Nodes receive a
// monotonically increasing sequence number at creation, so sorting the nodes
// reachable from a loss by descending sequence number yields a valid reverse
// topological order (the tape).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace spin {

using Shape = std::vector<int>;

class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ShapeError("non-positive extent in shape " + to_string(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

namespace detail {
inline std::atomic<std::uint64_t>& sequence_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}

// Fingerprint of the branch decisions taken by piecewise ops (ReLU, max
// pooling) while a BranchProbe is alive on this thread.
inline std::uint64_t*& branch_hash() {
  thread_local std::uint64_t* h = nullptr;
  return h;
}
inline void record_branch(std::uint64_t v) {
  if (std::uint64_t* h = branch_hash()) *h = (*h ^ v) * 0x100000001b3ULL;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

// Disables graph recording for the lifetime of the guard.
class NoGradGuard {
public:
  NoGradGuard() : previous_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool previous_;
};

class BranchProbe {
public:
  BranchProbe() : previous_(detail::branch_hash()) { detail::branch_hash() = &hash_; }
  ~BranchProbe() { detail::branch_hash() = previous_; }
  BranchProbe(const BranchProbe&) = delete;
  BranchProbe& operator=(const BranchProbe&) = delete;
  std::uint64_t value() const { return hash_; }

private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
  std::uint64_t* previous_;
};

template <typename T>
class Tensor {
public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->data.assign(spin::numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
    node_->seq = detail::sequence_counter()++;
  }

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    if (spin::numel(shape) != data.size())
      throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                       to_string(shape));
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
    node_->seq = detail::sequence_counter()++;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), T(0), requires_grad);
  }

  template <typename Rng>
  static Tensor randn(Shape shape, Rng& rng, T stddev = T(1), bool requires_grad = false) {
    Tensor t(std::move(shape), T(0), requires_grad);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : t.data()) v = static_cast<T>(dist(rng) * static_cast<double>(stddev));
    return t;
  }

  template <typename Rng>
  static Tensor uniform(Shape shape, Rng& rng, T lo, T hi, bool requires_grad = false) {
    Tensor t(std::move(shape), T(0), requires_grad);
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const {
    const int r = rank();
    return node_->shape.at(static_cast<std::size_t>(i < 0 ? i + r : i));
  }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t numel() const { return node_->data.size(); }

  std::vector<T>& data() { return node_->data; }
  const std::vector<T>& data() const { return node_->data; }
  T* ptr() { return node_->data.data(); }
  const T* ptr() const { return node_->data.data(); }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->data[0];
  }
  T& operator[](std::size_t i) { return node_->data[i]; }
  const T& operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<T>& grad() const { return node_->grad; }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }
  void clear_grad() { node_->grad.clear(); }

  // Copy of the values without any graph history.
  Tensor detach() const { return Tensor(shape(), data(), false); }

  Tensor<double> to_double() const {
    return Tensor<double>(shape(), std::vector<double>(data().begin(), data().end()));
  }
  Tensor<float> to_float() const {
    return Tensor<float>(shape(), std::vector<float>(data().begin(), data().end()));
  }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  // Builds an op result. Records a backward closure only when gradient
  // recording is on and at least one input requires a gradient.
  static Tensor from_op(Shape shape, std::vector<T> data, std::vector<Tensor> inputs,
                        std::function<void(Node<T>&)> backward) {
    Tensor out(std::move(shape), std::move(data));
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    for (auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward = std::move(backward);
    return out;
  }

private:
  std::shared_ptr<Node<T>> node_;
};

// Reverse pass from a scalar loss. Gradients accumulate into existing
// buffers; callers zero parameter gradients between steps.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward() requires a scalar loss, got shape " + to_string(loss.shape()));
  if (!loss.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{loss.node()};
  seen.insert(loss.node());
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Node<T>* a, const Node<T>* b) { return a->seq > b->seq; });

  loss.node()->ensure_grad();
  loss.node()->grad[0] += T(1);
  for (Node<T>* n : order) {
    if (!n->backward) continue;
    n->ensure_grad();
    for (const auto& p : n->parents)
      if (p->requires_grad) p->ensure_grad();
    n->backward(*n);
  }
}

}  // namespace spin
