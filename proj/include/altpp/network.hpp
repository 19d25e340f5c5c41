#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "altpp/autodiff.hpp"
#include "altpp/tensor.hpp"

namespace altpp {

enum class NetworkKind { kMlp, kSelfAttention };
enum class Activation { kTanh, kGelu };

std::string to_string(NetworkKind kind);
std::string to_string(Activation act);
NetworkKind parse_network_kind(const std::string& s);
Activation parse_activation(const std::string& s);

// Architecture of one of the four model networks.
//
// kMlp: `depth` hidden layers of width hidden_dim with the activation, then a
// linear readout. kSelfAttention: an activated input embedding of width
// hidden_dim split into `tokens` tokens, `depth` single-head self-attention
// layers (residual, then activation), and a linear readout.
struct NetworkSpec {
  NetworkKind kind = NetworkKind::kMlp;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 32;
  std::size_t output_dim = 1;
  std::size_t depth = 2;
  Activation activation = Activation::kTanh;
  std::size_t tokens = 4;

  void validate() const;
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

NetworkSpec mlp_spec(std::size_t in, std::size_t hidden, std::size_t out, std::size_t depth = 2,
                     Activation act = Activation::kTanh);
NetworkSpec attention_spec(std::size_t in, std::size_t hidden, std::size_t out, std::size_t tokens = 4);

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Parameters in declaration order.
struct ParameterSet {
  std::vector<NamedTensor> tensors;

  std::size_t count() const;
  Tensor& operator[](std::size_t i) { return tensors[i].value; }
  const Tensor& operator[](std::size_t i) const { return tensors[i].value; }
  std::size_t size() const { return tensors.size(); }
  friend bool operator==(const ParameterSet& a, const ParameterSet& b);
};

// Layout of the parameter set for a spec, all zeros.
ParameterSet zero_parameters(const NetworkSpec& spec);
// Weights ~ N(0, 1/fan_in), biases zero; deterministic per seed.
ParameterSet init_parameters(const NetworkSpec& spec, std::uint64_t seed);

struct Network {
  NetworkSpec spec;
  ParameterSet params;
};

// Parameters of one network bound to leaves of a tape. Binding once and
// reusing the handle across timesteps makes gradients accumulate in one place.
class BoundNetwork {
 public:
  BoundNetwork(Tape& tape, const Network& net);
  // Uses existing leaves (one per parameter tensor, in declaration order).
  BoundNetwork(const NetworkSpec& spec, std::vector<Var> leaves);

  // input: [B, input_dim] -> [B, output_dim]
  Var forward(Var input) const;
  const std::vector<Var>& leaves() const { return leaves_; }
  const NetworkSpec& spec() const { return spec_; }

 private:
  Var activate(Var v) const;

  NetworkSpec spec_;
  std::vector<Var> leaves_;
};

// Convenience: forward pass of a network on a fresh non-recording tape.
Tensor network_forward(const Network& net, const Tensor& input);

// Single attention layer on one [T, d] sequence: X + softmax(QK^T / sqrt(d)) V.
Tensor self_attention_forward(const Tensor& input, const Tensor& wq, const Tensor& wk, const Tensor& wv);

}  // namespace altpp
