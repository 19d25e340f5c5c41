#include "altpp/network.hpp"

#include <cmath>
#include <random>

#include "altpp/errors.hpp"
#include "altpp/rng.hpp"

namespace altpp {

std::string to_string(NetworkKind kind) { return kind == NetworkKind::kMlp ? "mlp" : "self_attention"; }
std::string to_string(Activation act) { return act == Activation::kTanh ? "tanh" : "gelu"; }

NetworkKind parse_network_kind(const std::string& s) {
  if (s == "mlp") return NetworkKind::kMlp;
  if (s == "self_attention" || s == "attention") return NetworkKind::kSelfAttention;
  throw ConfigError("unknown network kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "gelu") return Activation::kGelu;
  throw ConfigError("unknown activation '" + s + "'");
}

void NetworkSpec::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || output_dim == 0) throw DimensionError("network dims must be >= 1");
  if (depth == 0) throw ConfigError("network depth must be >= 1");
  if (kind == NetworkKind::kSelfAttention && (tokens == 0 || hidden_dim % tokens != 0)) {
    throw DimensionError("attention hidden_dim " + std::to_string(hidden_dim) + " not divisible by tokens " +
                         std::to_string(tokens));
  }
}

NetworkSpec mlp_spec(std::size_t in, std::size_t hidden, std::size_t out, std::size_t depth, Activation act) {
  return NetworkSpec{NetworkKind::kMlp, in, hidden, out, depth, act, 4};
}

NetworkSpec attention_spec(std::size_t in, std::size_t hidden, std::size_t out, std::size_t tokens) {
  return NetworkSpec{NetworkKind::kSelfAttention, in, hidden, out, 2, Activation::kTanh, tokens};
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.value.size();
  return n;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (a.tensors[i].name != b.tensors[i].name || !(a.tensors[i].value == b.tensors[i].value)) return false;
  }
  return true;
}

ParameterSet zero_parameters(const NetworkSpec& spec) {
  spec.validate();
  ParameterSet ps;
  auto add_linear = [&](const std::string& name, std::size_t in, std::size_t out) {
    ps.tensors.push_back({name + ".weight", Tensor(Shape{in, out})});
    ps.tensors.push_back({name + ".bias", Tensor(Shape{out})});
  };
  if (spec.kind == NetworkKind::kMlp) {
    add_linear("hidden0", spec.input_dim, spec.hidden_dim);
    for (std::size_t l = 1; l < spec.depth; ++l) add_linear("hidden" + std::to_string(l), spec.hidden_dim, spec.hidden_dim);
  } else {
    add_linear("embed", spec.input_dim, spec.hidden_dim);
    const std::size_t d = spec.hidden_dim / spec.tokens;
    for (std::size_t l = 0; l < spec.depth; ++l) {
      const std::string p = "attn" + std::to_string(l);
      ps.tensors.push_back({p + ".query", Tensor(Shape{d, d})});
      ps.tensors.push_back({p + ".key", Tensor(Shape{d, d})});
      ps.tensors.push_back({p + ".value", Tensor(Shape{d, d})});
    }
  }
  add_linear("readout", spec.hidden_dim, spec.output_dim);
  return ps;
}

ParameterSet init_parameters(const NetworkSpec& spec, std::uint64_t seed) {
  ParameterSet ps = zero_parameters(spec);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& [name, t] : ps.tensors) {
    if (t.rank() != 2) continue;
    const double scale = 1.0 / std::sqrt(static_cast<double>(t.dim(0)));
    for (auto& v : t.values()) v = scale * normal(rng);
  }
  return ps;
}

BoundNetwork::BoundNetwork(Tape& tape, const Network& net) : spec_(net.spec) {
  spec_.validate();
  const ParameterSet layout = zero_parameters(spec_);
  if (layout.size() != net.params.size()) throw DimensionError("parameter set does not match network spec");
  leaves_.reserve(net.params.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].shape() != net.params[i].shape()) {
      throw DimensionError("parameter " + layout.tensors[i].name + " has shape " + shape_str(net.params[i].shape()) +
                           ", expected " + shape_str(layout[i].shape()));
    }
    leaves_.push_back(tape.parameter(net.params[i]));
  }
}

BoundNetwork::BoundNetwork(const NetworkSpec& spec, std::vector<Var> leaves) : spec_(spec), leaves_(std::move(leaves)) {
  spec_.validate();
  const ParameterSet layout = zero_parameters(spec_);
  if (layout.size() != leaves_.size()) throw DimensionError("leaf count does not match network spec");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].shape() != leaves_[i].value().shape()) {
      throw DimensionError("leaf for " + layout.tensors[i].name + " has shape " + shape_str(leaves_[i].value().shape()));
    }
  }
}

Var BoundNetwork::activate(Var v) const {
  return spec_.activation == Activation::kTanh ? ops::tanh(v) : ops::gelu(v);
}

Var BoundNetwork::forward(Var input) const {
  const auto& in = input.value();
  if (in.rank() != 2 || in.dim(1) != spec_.input_dim) {
    throw DimensionError("network expects [B, " + std::to_string(spec_.input_dim) + "], got " + shape_str(in.shape()));
  }
  std::size_t p = 0;
  Var h = activate(ops::linear(input, leaves_[p], leaves_[p + 1]));
  p += 2;
  if (spec_.kind == NetworkKind::kMlp) {
    for (std::size_t l = 1; l < spec_.depth; ++l, p += 2) h = activate(ops::linear(h, leaves_[p], leaves_[p + 1]));
  } else {
    for (std::size_t l = 0; l < spec_.depth; ++l, p += 3) {
      h = activate(ops::self_attention(h, spec_.tokens, leaves_[p], leaves_[p + 1], leaves_[p + 2]));
    }
  }
  return ops::linear(h, leaves_[p], leaves_[p + 1]);
}

Tensor network_forward(const Network& net, const Tensor& input) {
  Tape tape(false);
  BoundNetwork bound(tape, net);
  const bool vector_input = input.rank() == 1;
  Var x = tape.constant(vector_input ? input.reshaped(Shape{1, input.size()}) : input);
  Tensor out = bound.forward(x).value();
  return vector_input ? out.reshaped(Shape{out.size()}) : out;
}

Tensor self_attention_forward(const Tensor& input, const Tensor& wq, const Tensor& wk, const Tensor& wv) {
  if (input.rank() != 2) throw DimensionError("attention input must be [T, d]");
  if (input.dim(1) == 0) throw DimensionError("attention: d = 0");
  Tape tape(false);
  const std::size_t tokens = input.dim(0), d = input.dim(1);
  Var x = tape.constant(input.reshaped(Shape{1, tokens * d}));
  Var out = ops::self_attention(x, tokens, tape.constant(wq), tape.constant(wk), tape.constant(wv));
  return out.value().reshaped(Shape{tokens, d});
}

}  // namespace altpp
