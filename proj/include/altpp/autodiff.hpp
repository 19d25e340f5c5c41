#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "altpp/tensor.hpp"

namespace altpp {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the node list
// is always topologically sorted. Leaves created with parameter() accumulate
// gradients that can be read back after backward().
class Tape {
 public:
  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(const Tensor& value);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  // Gradient of the last backward() loss with respect to v. Zero-filled when v
  // was unreachable from the loss.
  const Tensor& grad(Var v) const;

  void backward(Var loss);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Appends an op node. `backprop` receives the output gradient and must
  // accumulate into input gradients through accumulate().
  using Backprop = std::function<void(Tape&, const Tensor& out_grad)>;
  Var push(const char* op, Tensor value, std::vector<std::size_t> inputs, Backprop backprop);
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  Tensor& grad_slot(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    Backprop backprop;
    bool requires_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
};

namespace ops {

// out[b,j] = sum_i in[b,i] * w[i,j] + bias[j]
Var linear(Var input, Var weights, Var bias);
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var tanh(Var a);
// tanh-formulation GELU.
Var gelu(Var a);
// Concatenates two [B, n] and [B, m] matrices into [B, n + m].
Var concat_cols(Var a, Var b);
// Scalar sum of squared entries.
Var sum_squares(Var a);
Var sum(Var a);
// Scalar sum of scalar nodes, in order.
Var add_n(const std::vector<Var>& scalars);

// Single-head self-attention with residual, applied independently to each row
// of `input` viewed as `tokens` tokens of width d (input is [B, tokens * d];
// projections are [d, d]): out = X + softmax(X Wq (X Wk)^T / sqrt(d)) X Wv.
Var self_attention(Var input, std::size_t tokens, Var wq, Var wk, Var wv);

}  // namespace ops

// Row-stochastic attention weights for a single [T, d] sequence, computed with
// the same arithmetic as ops::self_attention.
Tensor attention_weights(const Tensor& input, const Tensor& wq, const Tensor& wk);

}  // namespace altpp
