#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lqt/array.hpp"
#include "lqt/error.hpp"

namespace lqt {

// Trainable array with persistent gradient storage of identical shape.
template <class S>
struct Parameter {
  std::string name;
  Array<S> value;
  Array<S> gradient;

  Parameter() = default;
  Parameter(std::string n, Array<S> v)
      : name(std::move(n)), value(std::move(v)), gradient(value.shape()) {}

  void zero_grad() { gradient.fill(S(0)); }
  std::size_t size() const { return value.size(); }
};

template <class S>
class Graph;

// Handle to a value flowing through a Graph. `node < 0` means the value is a
// constant for differentiation purposes (no tape entry).
template <class S>
struct Var {
  Graph<S>* graph = nullptr;
  std::shared_ptr<const Array<S>> value;
  int node = -1;

  const Array<S>& v() const { return *value; }
  bool tracked() const { return node >= 0; }
};

// Dynamic tape over whole-array operations. Nodes are recorded in application
// order; backward() replays them in exact reverse order, single-threaded, so
// two identical runs produce bit-identical gradients.
template <class S>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Array<S>& upstream)>;

  explicit Graph(bool recording = true) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }

  // Non-differentiable input (data, targets, masks).
  Var<S> constant(Array<S> x) {
    return Var<S>{this, std::make_shared<const Array<S>>(std::move(x)), -1};
  }

  Var<S> scalar(S v) {
    return constant(Array<S>::from({1}, {v}));
  }

  // Differentiable leaf bound to a Parameter. backward() accumulates into
  // p.gradient. The value is snapshotted so later optimizer updates cannot
  // alias into a live tape.
  Var<S> leaf(Parameter<S>& p) {
    Var<S> out{this, std::make_shared<const Array<S>>(p.value), -1};
    if (recording_) {
      Parameter<S>* pp = &p;
      out.node = record(p.value.shape(), [pp](Graph&, const Array<S>& up) {
        if (pp->gradient.size() != up.size()) {
          throw ShapeError("leaf backward: gradient shape drifted for '" + pp->name + "'");
        }
        S* g = pp->gradient.data();
        const S* u = up.data();
        for (std::size_t i = 0; i < up.size(); ++i) g[i] += u[i];
      });
    }
    return out;
  }

  // Used by op implementations: append a tape node and get its id.
  int record(std::vector<std::size_t> shape, BackwardFn fn) {
    nodes_.push_back(Node{std::move(shape), std::move(fn)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Gradient buffer for a node, zero-initialized on first touch during backward.
  Array<S>& grad(int id) {
    Array<S>& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty() && !nodes_[static_cast<std::size_t>(id)].shape.empty()) {
      g = Array<S>(nodes_[static_cast<std::size_t>(id)].shape);
    } else if (g.empty()) {
      g = Array<S>(std::vector<std::size_t>{1});
    }
    return g;
  }

  bool has_grad(int id) const { return !grads_[static_cast<std::size_t>(id)].empty(); }

  void backward(const Var<S>& loss) {
    if (!recording_) {
      throw std::logic_error("backward: graph was created in inference mode");
    }
    if (consumed_) {
      throw std::logic_error("backward: graph already consumed by a previous backward()");
    }
    if (!loss.tracked()) {
      throw std::logic_error("backward: loss does not depend on any tracked parameter");
    }
    if (loss.v().size() != 1) {
      throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.v().shape()));
    }
    consumed_ = true;
    grads_.assign(nodes_.size(), Array<S>{});
    grad(loss.node)[0] = S(1);
    for (int i = loss.node; i >= 0; --i) {
      if (!grads_[static_cast<std::size_t>(i)].empty()) {
        nodes_[static_cast<std::size_t>(i)].fn(*this, grads_[static_cast<std::size_t>(i)]);
      }
    }
  }

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<std::size_t> shape;
    BackwardFn fn;
  };

  std::vector<Node> nodes_;
  std::vector<Array<S>> grads_;
  bool recording_;
  bool consumed_ = false;
};

template <class S>
inline S scalar_value(const Var<S>& v) {
  if (v.v().size() != 1) {
    throw ShapeError("scalar_value: expected a single element, got " + shape_str(v.v().shape()));
  }
  return v.v()[0];
}

template <class S>
inline Graph<S>* require_same_graph(const Var<S>& a, const Var<S>& b) {
  if (a.graph != b.graph || a.graph == nullptr) {
    throw std::logic_error("operands belong to different graphs");
  }
  return a.graph;
}

}  // namespace lqt
