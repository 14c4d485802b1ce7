#pragma once

// Dense row-major tensor with reverse-mode automatic differentiation.
//
// Every differentiable primitive appends one node to the computation graph;
// a node records the op name, the operand nodes and a backward closure, so
// the graph doubles as the tape. backward() replays the tape in reverse
// topological order, visiting each node exactly once and *accumulating*
// gradients (a tensor reused by several ops receives the sum of all
// contributions). Training math is 64-bit throughout; 32-bit is a
// checkpoint storage format only.
//
// A graph and its tensors are confined to one thread. Independent graphs
// (one per masked view, say) may run on parallel threads; merging their
// gradients is an explicit summation step owned by the caller.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace asda {

namespace detail {

struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = nullptr;  // primitive name; nullptr for leaves
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Disables graph recording for the current thread while alive. Used for
// teacher forwards and finite-difference re-evaluations.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

inline std::size_t shape_numel(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0, bool requires_grad = false) {
    for (std::size_t d : shape)
      if (d == 0) throw std::invalid_argument("Tensor: zero dimension in shape " + shape_str(shape));
    node_ = std::make_shared<detail::TensorNode>();
    node_->shape = std::move(shape);
    node_->data.assign(shape_numel(node_->shape), fill);
    node_->requires_grad = requires_grad;
  }

  static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                          bool requires_grad = false) {
    if (data.size() != shape_numel(shape))
      throw std::invalid_argument("Tensor::from_data: " + std::to_string(data.size()) +
                                  " values do not fill shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode>();
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    return Tensor(std::move(shape), 0.0, requires_grad);
  }

  static Tensor scalar(double v) { return Tensor({1, 1}, v); }

  static Tensor randn(std::vector<std::size_t> shape, std::mt19937_64& rng, double stddev = 1.0,
                      bool requires_grad = false) {
    Tensor t(std::move(shape), 0.0, requires_grad);
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data()) v = dist(rng);
    return t;
  }

  static Tensor uniform(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo, double hi,
                        bool requires_grad = false) {
    Tensor t(std::move(shape), 0.0, requires_grad);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.data()) v = dist(rng);
    return t;
  }

  bool defined() const { return node_ != nullptr; }

  const std::vector<std::size_t>& shape() const { return check()->shape; }
  std::size_t ndim() const { return check()->shape.size(); }
  std::size_t numel() const { return check()->data.size(); }

  std::size_t rows() const {
    require_2d("rows");
    return node_->shape[0];
  }
  std::size_t cols() const {
    require_2d("cols");
    return node_->shape[1];
  }

  std::vector<double>& data() { return check()->data; }
  const std::vector<double>& data() const { return check()->data; }

  double& at(std::size_t r, std::size_t c) {
    require_2d("at");
    return node_->data[r * node_->shape[1] + c];
  }
  double at(std::size_t r, std::size_t c) const {
    require_2d("at");
    return node_->data[r * node_->shape[1] + c];
  }

  double value() const {
    if (numel() != 1)
      throw std::invalid_argument("Tensor::value: tensor " + shape_str(shape()) + " is not scalar");
    return node_->data[0];
  }

  bool requires_grad() const { return check()->requires_grad; }
  void set_requires_grad(bool b) { check()->requires_grad = b; }

  bool has_grad() const { return defined() && !node_->grad.empty(); }
  std::vector<double>& grad() {
    check()->ensure_grad();
    return node_->grad;
  }
  const std::vector<double>& grad() const {
    check()->ensure_grad();
    return node_->grad;
  }

  void zero_grad() {
    if (defined() && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  // Deep copy severed from the graph; carries no gradient.
  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode>();
    t.node_->shape = check()->shape;
    t.node_->data = node_->data;
    return t;
  }

  detail::TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

  static Tensor wrap(std::shared_ptr<detail::TensorNode> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  detail::TensorNode* check() const {
    if (!node_) throw std::logic_error("Tensor: use of undefined tensor");
    return node_.get();
  }
  void require_2d(const char* what) const {
    if (check()->shape.size() != 2)
      throw std::invalid_argument(std::string("Tensor::") + what + ": tensor " +
                                  shape_str(node_->shape) + " is not 2-D");
  }

  std::shared_ptr<detail::TensorNode> node_;
};

namespace detail {

// Appends one tape entry. Output requires grad iff any parent does and
// recording is enabled; otherwise the parents/backward links are dropped
// and the graph is pruned at this point.
inline Tensor make_result(const char* op, std::vector<std::size_t> shape, std::vector<double> data,
                          std::vector<std::shared_ptr<TensorNode>> parents,
                          std::function<void(TensorNode&)> backward_fn) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  bool track = false;
  if (grad_enabled())
    for (const auto& p : parents)
      if (p && p->requires_grad) track = true;
  if (track) {
    out.node()->requires_grad = true;
    out.node()->op = op;
    out.node()->parents = std::move(parents);
    out.node()->backward_fn = std::move(backward_fn);
  }
  return out;
}

// Accumulates into a node's grad buffer; no-op for nodes that do not
// require gradients (constants never grow grad buffers).
inline void accumulate(TensorNode& dst, const std::vector<double>& contribution) {
  if (!dst.requires_grad) return;
  dst.ensure_grad();
  for (std::size_t i = 0; i < contribution.size(); ++i) dst.grad[i] += contribution[i];
}

}  // namespace detail

// Reverse pass from a scalar loss. Builds the reverse topological order over
// the recorded tape and runs each backward closure exactly once, seeding
// d(loss)/d(loss) = 1 and accumulating into every reachable grad buffer.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss " + shape_str(loss.shape()) + " is not scalar");
  detail::TensorNode* root = loss.node();
  if (!root->requires_grad) return;  // constant graph, nothing to do

  // Iterative post-order DFS over parents.
  std::vector<detail::TensorNode*> order;
  std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
  std::unordered_set<detail::TensorNode*> seen;
  stack.push_back({root, 0});
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::TensorNode* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

}  // namespace asda
