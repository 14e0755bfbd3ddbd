#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nac/sparse.hpp"

namespace nac {

class Tape;

// Handle to a value recorded on a Tape. Handles become stale once the tape
// is cleared (every backward pass clears it).
class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const;
  std::size_t node_id() const { return id_; }
  std::uint64_t generation() const { return generation_; }
  Tape& tape() const;
  bool valid() const;

  double item() const {
    const Matrix& v = value();
    if (v.size() != 1) throw ShapeError("item(): tensor is " + shape_string(v) + ", not scalar");
    return v(0, 0);
  }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
  std::uint64_t generation_ = 0;
};

class BackwardContext {
 public:
  const Matrix& grad_output() const { return *grad_out_; }
  const Matrix& output() const { return *output_; }
  const Matrix& input(std::size_t i) const { return *inputs_[i]; }
  bool needs_grad(std::size_t i) const { return grads_[i] != nullptr; }

  // Accumulation buffer for input i, zero-filled on first touch.
  Matrix& input_grad(std::size_t i) {
    Matrix& g = *grads_[i];
    if (g.size() == 0) g = Matrix::Zero(inputs_[i]->rows(), inputs_[i]->cols());
    return g;
  }

 private:
  friend class Tape;
  const Matrix* grad_out_ = nullptr;
  const Matrix* output_ = nullptr;
  std::vector<const Matrix*> inputs_;
  std::vector<Matrix*> grads_;
};

using BackwardRule = std::function<void(BackwardContext&)>;

class Gradients {
 public:
  bool contains(const Tensor& t) const {
    return t.generation() == generation_ && grads_.count(t.node_id()) > 0;
  }

  const Matrix& at(const Tensor& t) const {
    if (t.generation() != generation_) throw std::logic_error("Gradients: tensor from another pass");
    auto it = grads_.find(t.node_id());
    if (it == grads_.end()) throw std::out_of_range("Gradients: tensor does not require grad");
    return it->second;
  }

  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::uint64_t generation_ = 0;
  std::unordered_map<std::size_t, Matrix> grads_;
};

// Define-by-run reverse-mode tape. Nodes are appended in execution order, so
// every node's inputs precede it and a single reverse sweep is topological.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(Matrix value, bool requires_grad = false) {
    nodes_.push_back(Node{std::move(value), {}, {}, requires_grad, true});
    return Tensor(this, nodes_.size() - 1, generation_);
  }

  Tensor constant(Matrix value) { return leaf(std::move(value), false); }

  // Records an op result. When no input requires grad the rule is dropped and
  // the result behaves as a constant.
  Tensor record(Matrix value, std::span<const Tensor> inputs, BackwardRule rule) {
    Node node{std::move(value), {}, {}, false, false};
    node.inputs.reserve(inputs.size());
    for (const Tensor& in : inputs) {
      check_owned(in);
      node.inputs.push_back(in.node_id());
      node.requires_grad = node.requires_grad || nodes_[in.node_id()].requires_grad;
    }
    if (node.requires_grad) node.rule = std::move(rule);
    nodes_.push_back(std::move(node));
    return Tensor(this, nodes_.size() - 1, generation_);
  }

  Tensor record(Matrix value, std::initializer_list<Tensor> inputs, BackwardRule rule) {
    return record(std::move(value), std::span<const Tensor>(inputs.begin(), inputs.size()),
                  std::move(rule));
  }

  // Reverse sweep from a scalar loss. Returns gradients of every leaf that
  // requires grad, then clears the tape.
  Gradients backward(const Tensor& loss) {
    check_owned(loss);
    const Matrix& lv = nodes_[loss.node_id()].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + shape_string(lv));
    }
    Gradients result;
    result.generation_ = generation_;

    std::vector<Matrix> grads(nodes_.size());
    grads[loss.node_id()] = Matrix::Ones(1, 1);
    BackwardContext ctx;
    for (std::size_t id = loss.node_id() + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!node.requires_grad || grads[id].size() == 0) continue;
      if (node.leaf) {
        result.grads_.emplace(id, std::move(grads[id]));
        continue;
      }
      ctx.grad_out_ = &grads[id];
      ctx.output_ = &node.value;
      ctx.inputs_.clear();
      ctx.grads_.clear();
      for (std::size_t in : node.inputs) {
        ctx.inputs_.push_back(&nodes_[in].value);
        ctx.grads_.push_back(nodes_[in].requires_grad ? &grads[in] : nullptr);
      }
      node.rule(ctx);
      grads[id] = Matrix();
    }
    clear();
    return result;
  }

  void clear() {
    nodes_.clear();
    ++generation_;
  }

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t generation() const { return generation_; }

 private:
  friend class Tensor;

  struct Node {
    Matrix value;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
    bool requires_grad = false;
    bool leaf = false;
  };

  void check_owned(const Tensor& t) const {
    if (t.tape_ != this) throw std::logic_error("Tensor belongs to a different tape");
    if (t.generation_ != generation_ || t.id_ >= nodes_.size()) {
      throw std::logic_error("stale Tensor: tape was cleared after it was recorded");
    }
  }

  // deque: references to node values stay valid while the tape grows
  std::deque<Node> nodes_;
  std::uint64_t generation_ = 1;
};

inline const Matrix& Tensor::value() const {
  if (tape_ == nullptr) throw std::logic_error("empty Tensor handle");
  tape_->check_owned(*this);
  return tape_->nodes_[id_].value;
}

inline bool Tensor::requires_grad() const {
  if (tape_ == nullptr) throw std::logic_error("empty Tensor handle");
  tape_->check_owned(*this);
  return tape_->nodes_[id_].requires_grad;
}

inline Tape& Tensor::tape() const {
  if (tape_ == nullptr) throw std::logic_error("empty Tensor handle");
  return *tape_;
}

inline bool Tensor::valid() const {
  return tape_ != nullptr && tape_->generation_ == generation_ && id_ < tape_->nodes_.size();
}

}  // namespace nac
