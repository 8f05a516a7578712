#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "sdr/engine/param_set.hpp"
#include "sdr/tensor.hpp"

namespace sdr::ad {

template <typename T>
class Tape;

template <typename T>
struct Node {
  std::string op;
  Tensor<T> value;
  Tensor<T> grad;  // empty until a gradient reaches this node
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  bool requires_grad = false;
  std::size_t index = 0;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  // Gradient accumulator for input i, or null when that input needs none.
  Tensor<T>* input_grad(std::size_t i) {
    return inputs[i]->requires_grad ? &inputs[i]->grad_buffer() : nullptr;
  }
};

/// Handle to a value on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::shared_ptr<Node<T>> node) : tape_(tape), node_(std::move(node)) {}

  explicit operator bool() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Tape<T>& tape() const { return *tape_; }
  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }
  bool requires_grad() const { return node_->requires_grad; }
  // Gradient after backward(); zeros if none flowed here.
  Tensor<T> grad() const { return node_->grad.empty() ? Tensor<T>(shape()) : node_->grad; }

 private:
  Tape<T>* tape_ = nullptr;
  std::shared_ptr<Node<T>> node_;
};

/// Records differentiable ops in creation order. With recording off the tape
/// keeps nothing and ops behave as plain tensor functions.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Node<T>&)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(Tensor<T> value, std::string name = "constant") {
    auto node = std::make_shared<Node<T>>();
    node->op = std::move(name);
    node->value = std::move(value);
    return Var<T>(this, std::move(node));
  }

  // Leaf bound to a named parameter; repeated calls return the same leaf.
  Var<T> param(const std::string& name, const Tensor<T>& value) {
    auto it = params_.find(name);
    if (it != params_.end()) return it->second;
    auto node = std::make_shared<Node<T>>();
    node->op = "param:" + name;
    node->value = value;
    node->requires_grad = recording_;
    Var<T> v(this, node);
    if (recording_) push(node);
    params_.emplace(name, v);
    return v;
  }
  Var<T> param(const ParamSet<T>& params, const std::string& name) { return param(name, params.at(name)); }

  // Creates an op node. Fails fast if the forward value is not finite.
  Var<T> make(std::string op, Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn backward) {
    if (!value.all_finite()) {
      throw NumericError("op '" + op + "' (node " + std::to_string(next_index_) + ") produced a non-finite value");
    }
    auto node = std::make_shared<Node<T>>();
    node->op = std::move(op);
    node->value = std::move(value);
    bool needs = false;
    if (recording_) {
      for (const auto& in : inputs) needs = needs || in.requires_grad();
    }
    node->requires_grad = needs;
    if (needs) {
      node->inputs.reserve(inputs.size());
      for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
      node->backward = std::move(backward);
      push(node);
    }
    return Var<T>(this, std::move(node));
  }

  void zero_grad() {
    for (auto& n : nodes_) n->grad = Tensor<T>();
  }

  // Propagates d(loss)/d(node) to every recorded node, visiting each once in
  // reverse creation order (a reverse topological order of the DAG).
  void backward(const Var<T>& loss) {
    if (loss.value().size() != 1) {
      throw ConfigError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    }
    zero_grad();
    if (!loss.requires_grad()) return;
    loss.node().grad_buffer()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& n = **it;
      if (n.grad.empty() || !n.backward) continue;
      n.backward(n);
      for (const auto& in : n.inputs) {
        if (in->requires_grad && !in->grad.empty() && !in->grad.all_finite()) {
          throw NumericError("non-finite gradient produced by backward of op '" + n.op + "' (node " +
                             std::to_string(n.index) + ")");
        }
      }
    }
  }

  // Gradient for every parameter in params (zeros for ones not on the tape).
  std::map<std::string, Tensor<T>> backward(const Var<T>& loss, const ParamSet<T>& params) {
    backward(loss);
    std::map<std::string, Tensor<T>> grads;
    for (const auto& [name, value] : params) {
      auto it = params_.find(name);
      grads.emplace(name, it == params_.end() ? Tensor<T>(value.shape()) : it->second.grad());
    }
    return grads;
  }

 private:
  void push(const std::shared_ptr<Node<T>>& node) {
    node->index = next_index_++;
    nodes_.push_back(node);
  }

  bool recording_;
  std::size_t next_index_ = 0;
  std::vector<std::shared_ptr<Node<T>>> nodes_;
  std::unordered_map<std::string, Var<T>> params_;
};

/// Resolves parameter names under a prefix ("mspn1." + "f_q.weight").
template <typename T>
struct ParamScope {
  const ParamSet<T>* set = nullptr;
  std::string prefix;

  Var<T> operator()(Tape<T>& tape, const std::string& name) const {
    return tape.param(prefix + name, set->at(prefix + name));
  }
  bool has(const std::string& name) const { return set->contains(prefix + name); }
  ParamScope sub(const std::string& name) const { return {set, prefix + name}; }
};

}  // namespace sdr::ad
