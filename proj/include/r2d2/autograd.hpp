#pragma once

#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "r2d2/tensor.hpp"

namespace r2d2 {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Ordered collection of named parameters. Iteration order is insertion
/// order, which fixes checkpoint layout and optimizer traversal.
template <typename T>
class ParamSet {
 public:
  Parameter<T>& add(const std::string& name, Tensor<T> value);

  Parameter<T>& get(const std::string& name);
  const Parameter<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>());
    return out;
  }

  bool operator==(const ParamSet& o) const;

 private:
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Handle to a node in a Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
/// sweep visits every node after all of its consumers.
template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, Var self)>;

  Var constant(Tensor<T> value);
  /// Leaf bound to a parameter; gradients land in p.grad after backward().
  /// Non-trainable parameters behave as constants.
  Var param(Parameter<T>& p, bool trainable = true);
  Var emplace(Tensor<T> value, bool requires_grad, Backward backward);

  const Tensor<T>& value(Var v) const;
  /// Gradient buffer of v, zero-allocated on first access.
  Tensor<T>& grad(Var v);
  bool has_grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool any_requires_grad(std::initializer_list<Var> vs) const;

  /// Seeds d(loss)/d(loss) = 1 for a 1-element loss and sweeps the tape.
  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

enum class ProbSide { Real, Fake };

namespace ag {

/// 2-D cross-correlation with zero padding. w: [out, in, k, k]; b: [1, out, 1, 1]
/// or an invalid Var for no bias.
template <typename T>
Var conv2d(Graph<T>& g, Var x, Var w, Var b, int stride, int pad);

template <typename T>
Var pad_reflect(Graph<T>& g, Var x, int pad);

template <typename T>
Var upsample2x(Graph<T>& g, Var x);

template <typename T>
Var relu(Graph<T>& g, Var x);

template <typename T>
Var leaky_relu(Graph<T>& g, Var x, T slope);

template <typename T>
Var tanh(Graph<T>& g, Var x);

template <typename T>
Var add(Graph<T>& g, Var a, Var b);

template <typename T>
Var scale(Graph<T>& g, Var a, T s);

template <typename T>
Var add_scalar(Graph<T>& g, Var a, T s);

template <typename T>
Var concat_channels(Graph<T>& g, const std::vector<Var>& parts);

/// Per-sample, per-channel normalisation without affine terms.
template <typename T>
Var instance_norm(Graph<T>& g, Var x, T eps);

/// Copies `block` into `base` at per-sample offsets (y, x).
template <typename T>
Var replace_block(Graph<T>& g, Var base, Var block,
                  const std::vector<std::pair<int, int>>& offsets);

/// Mean over all spatial positions: [n, c, h, w] -> [n, c, 1, 1].
template <typename T>
Var global_avg_pool(Graph<T>& g, Var x);

/// mean |a - b| over all elements.
template <typename T>
Var l1_mean(Graph<T>& g, Var a, Var b);

/// Mean of -log p (Real) or -log(1 - p) (Fake) where p = clamp(sigmoid(logit),
/// eps, 1 - eps). Clamped entries pass no gradient.
template <typename T>
Var neg_log_prob_mean(Graph<T>& g, Var logits, ProbSide side, T eps);

/// Numerically stable binary cross-entropy on logits against 0/1 targets.
template <typename T>
Var bce_with_logits_mean(Graph<T>& g, Var logits, const std::vector<T>& targets);

}  // namespace ag

extern template class ParamSet<float>;
extern template class ParamSet<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace r2d2
