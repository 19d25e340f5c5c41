#include "altpp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "altpp/errors.hpp"

namespace altpp {

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), {}, nullptr, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(const Tensor& value) {
  nodes_.push_back(Node{value, Tensor(), {}, nullptr, record_});
  return Var{this, nodes_.size() - 1};
}

Var Tape::push(const char* op, Tensor value, std::vector<std::size_t> inputs, Backprop backprop) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  bool needs = false;
  if (record_) {
    for (auto i : inputs) needs = needs || nodes_[i].requires_grad;
  }
  if (!needs) {
    backprop = nullptr;
    inputs.clear();
  }
  nodes_.push_back(Node{std::move(value), Tensor(), std::move(inputs), std::move(backprop), needs});
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_slot(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

const Tensor& Tape::grad(Var v) const {
  auto& n = const_cast<Node&>(nodes_.at(v.id));
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("loss node belongs to another tape");
  if (nodes_.at(loss.id).value.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(nodes_[loss.id].value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  grad_slot(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.backprop || n.grad.shape() != n.value.shape()) continue;
    // Copy: backprop may grow grads of earlier nodes but never this one.
    const Tensor g = n.grad;
    n.backprop(*this, g);
  }
}

namespace ops {
namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
  return *a.tape;
}

void accumulate(Tape& tape, std::size_t id, const Tensor& g) {
  if (!tape.requires_grad(Var{&tape, id})) return;
  auto& slot = tape.grad_slot(id);
  auto dst = slot.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + " must be a matrix, got " + shape_str(t.shape()));
}

// c[n,m] += a[n,k] * b[k,m]
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t r = 0; r < n; ++r) {
    double* crow = c + r * m;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = a[r * k + i];
      const double* brow = b + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[n,k] += g[n,m] * b[k,m]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t n, std::size_t m, std::size_t k) {
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < k; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += g[r * m + j] * b[i * m + j];
      c[r * k + i] += s;
    }
  }
}

// c[k,m] += a[n,k]^T * g[n,m]
void gemm_tn(const double* a, const double* g, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < k; ++i) {
      const double av = a[r * k + i];
      double* crow = c + i * m;
      const double* grow = g + r * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * grow[j];
    }
  }
}

template <class F, class D>
Var unary(const char* name, Var a, F f, D df) {
  Tape& tape = *a.tape;
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const std::size_t aid = a.id;
  return tape.push(name, std::move(out), {aid}, [aid, df](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(Var{&t, aid});
    Tensor ga(xv.shape());
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] * df(xv[i]);
    accumulate(t, aid, ga);
  });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var linear(Var input, Var weights, Var bias) {
  Tape& tape = same_tape(input, weights);
  same_tape(input, bias);
  const Tensor& x = input.value();
  const Tensor& w = weights.value();
  const Tensor& b = bias.value();
  require_matrix(x, "linear input");
  require_matrix(w, "linear weights");
  const std::size_t batch = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weights " + shape_str(w.shape()));
  }
  if (b.rank() != 1 || b.dim(0) != out_dim) {
    throw DimensionError("linear: bias " + shape_str(b.shape()) + " incompatible with weights " + shape_str(w.shape()));
  }
  Tensor out(Shape{batch, out_dim});
  for (std::size_t r = 0; r < batch; ++r) std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(r * out_dim));
  gemm_nn(x.values().data(), w.values().data(), out.values().data(), batch, in, out_dim);
  const std::size_t xid = input.id, wid = weights.id, bid = bias.id;
  return tape.push("linear", std::move(out), {xid, wid, bid}, [=](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(Var{&t, xid});
    const Tensor& wv = t.value(Var{&t, wid});
    if (t.requires_grad(Var{&t, xid})) {
      Tensor gx(xv.shape());
      gemm_nt(g.values().data(), wv.values().data(), gx.values().data(), batch, out_dim, in);
      accumulate(t, xid, gx);
    }
    if (t.requires_grad(Var{&t, wid})) {
      Tensor gw(wv.shape());
      gemm_tn(xv.values().data(), g.values().data(), gw.values().data(), batch, in, out_dim);
      accumulate(t, wid, gw);
    }
    if (t.requires_grad(Var{&t, bid})) {
      Tensor gb(Shape{out_dim});
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[r * out_dim + j];
      accumulate(t, bid, gb);
    }
  });
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_matrix(x, "matmul lhs");
  require_matrix(y, "matmul rhs");
  const std::size_t n = x.dim(0), k = x.dim(1), m = y.dim(1);
  if (y.dim(0) != k) throw DimensionError("matmul: " + shape_str(x.shape()) + " x " + shape_str(y.shape()));
  Tensor out(Shape{n, m});
  gemm_nn(x.values().data(), y.values().data(), out.values().data(), n, k, m);
  const std::size_t aid = a.id, bid = b.id;
  return tape.push("matmul", std::move(out), {aid, bid}, [=](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(Var{&t, aid});
    const Tensor& yv = t.value(Var{&t, bid});
    if (t.requires_grad(Var{&t, aid})) {
      Tensor ga(xv.shape());
      gemm_nt(g.values().data(), yv.values().data(), ga.values().data(), n, m, k);
      accumulate(t, aid, ga);
    }
    if (t.requires_grad(Var{&t, bid})) {
      Tensor gb(yv.shape());
      gemm_tn(xv.values().data(), g.values().data(), gb.values().data(), n, k, m);
      accumulate(t, bid, gb);
    }
  });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t aid = a.id, bid = b.id;
  return tape.push("add", std::move(out), {aid, bid}, [=](Tape& t, const Tensor& g) {
    accumulate(t, aid, g);
    accumulate(t, bid, g);
  });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const std::size_t aid = a.id, bid = b.id;
  return tape.push("sub", std::move(out), {aid, bid}, [=](Tape& t, const Tensor& g) {
    accumulate(t, aid, g);
    Tensor neg = g;
    for (auto& v : neg.values()) v = -v;
    accumulate(t, bid, neg);
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t aid = a.id, bid = b.id;
  return tape.push("mul", std::move(out), {aid, bid}, [=](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(Var{&t, aid});
    const Tensor& bv = t.value(Var{&t, bid});
    Tensor ga(av.shape()), gb(bv.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] = g[i] * bv[i];
      gb[i] = g[i] * av[i];
    }
    accumulate(t, aid, ga);
    accumulate(t, bid, gb);
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= c;
  const std::size_t aid = a.id;
  return a.tape->push("scale", std::move(out), {aid}, [=](Tape& t, const Tensor& g) {
    Tensor ga = g;
    for (auto& v : ga.values()) v *= c;
    accumulate(t, aid, ga);
  });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double th = std::tanh(x);
        return 1.0 - th * th;
      });
}

Var gelu(Var a) {
  return unary(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); },
      [](double x) {
        const double u = kGeluC * (x + kGeluA * x * x * x);
        const double th = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
      });
}

Var concat_cols(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_matrix(x, "concat lhs");
  require_matrix(y, "concat rhs");
  if (x.dim(0) != y.dim(0)) throw DimensionError("concat_cols: row counts differ");
  const std::size_t rows = x.dim(0), n = x.dim(1), m = y.dim(1);
  Tensor out(Shape{rows, n + m});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * (n + m) + j] = x[r * n + j];
    for (std::size_t j = 0; j < m; ++j) out[r * (n + m) + n + j] = y[r * m + j];
  }
  const std::size_t aid = a.id, bid = b.id;
  return tape.push("concat_cols", std::move(out), {aid, bid}, [=](Tape& t, const Tensor& g) {
    Tensor ga(Shape{rows, n}), gb(Shape{rows, m});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < n; ++j) ga[r * n + j] = g[r * (n + m) + j];
      for (std::size_t j = 0; j < m; ++j) gb[r * m + j] = g[r * (n + m) + n + j];
    }
    accumulate(t, aid, ga);
    accumulate(t, bid, gb);
  });
}

Var sum_squares(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  const std::size_t aid = a.id;
  return a.tape->push("sum_squares", Tensor::scalar(s), {aid}, [=](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(Var{&t, aid});
    Tensor ga(av.shape());
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = 2.0 * av[i] * g[0];
    accumulate(t, aid, ga);
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t aid = a.id;
  return a.tape->push("sum", Tensor::scalar(s), {aid}, [=](Tape& t, const Tensor& g) {
    accumulate(t, aid, Tensor(t.value(Var{&t, aid}).shape(), g[0]));
  });
}

Var add_n(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw ContractError("add_n of nothing");
  Tape& tape = *scalars.front().tape;
  double s = 0.0;
  std::vector<std::size_t> ids;
  ids.reserve(scalars.size());
  for (const auto& v : scalars) {
    if (v.tape != &tape) throw ContractError("operands live on different tapes");
    s += v.value().item();
    ids.push_back(v.id);
  }
  return tape.push("add_n", Tensor::scalar(s), ids, [ids](Tape& t, const Tensor& g) {
    for (auto id : ids) accumulate(t, id, Tensor(t.value(Var{&t, id}).shape(), g[0]));
  });
}

namespace {

struct AttentionCache {
  std::vector<double> q, k, v, a;  // per batch row: [T, d] each, a is [T, T]
};

void project(const double* x, const double* w, double* out, std::size_t tokens, std::size_t d) {
  std::fill(out, out + tokens * d, 0.0);
  gemm_nn(x, w, out, tokens, d, d);
}

// Row softmax of s[T, T] in place, with max subtraction.
void softmax_rows(double* s, std::size_t tokens) {
  for (std::size_t i = 0; i < tokens; ++i) {
    double* row = s + i * tokens;
    const double mx = *std::max_element(row, row + tokens);
    double z = 0.0;
    for (std::size_t j = 0; j < tokens; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < tokens; ++j) row[j] /= z;
  }
}

void attention_scores(const double* q, const double* k, double* s, std::size_t tokens, std::size_t d) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < tokens; ++i)
    for (std::size_t j = 0; j < tokens; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += q[i * d + c] * k[j * d + c];
      s[i * tokens + j] = acc * inv;
    }
}

}  // namespace

Var self_attention(Var input, std::size_t tokens, Var wq, Var wk, Var wv) {
  Tape& tape = same_tape(input, wq);
  same_tape(input, wk);
  same_tape(input, wv);
  const Tensor& x = input.value();
  require_matrix(x, "attention input");
  if (tokens == 0 || x.dim(1) % tokens != 0) throw DimensionError("attention: width not divisible by token count");
  const std::size_t d = x.dim(1) / tokens;
  if (d == 0) throw DimensionError("attention: token width is zero");
  for (Var w : {wq, wk, wv}) {
    if (w.value().shape() != Shape{d, d}) {
      throw DimensionError("attention: projection must be " + shape_str({d, d}) + ", got " + shape_str(w.value().shape()));
    }
  }
  const std::size_t batch = x.dim(0), width = tokens * d;
  auto cache = std::make_shared<AttentionCache>();
  cache->q.resize(batch * width);
  cache->k.resize(batch * width);
  cache->v.resize(batch * width);
  cache->a.resize(batch * tokens * tokens);
  Tensor out = x;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = x.values().data() + b * width;
    double* q = cache->q.data() + b * width;
    double* k = cache->k.data() + b * width;
    double* v = cache->v.data() + b * width;
    double* a = cache->a.data() + b * tokens * tokens;
    project(xb, wq.value().values().data(), q, tokens, d);
    project(xb, wk.value().values().data(), k, tokens, d);
    project(xb, wv.value().values().data(), v, tokens, d);
    attention_scores(q, k, a, tokens, d);
    softmax_rows(a, tokens);
    gemm_nn(a, v, out.values().data() + b * width, tokens, tokens, d);
  }
  const std::size_t xid = input.id, qid = wq.id, kid = wk.id, vid = wv.id;
  return tape.push("self_attention", std::move(out), {xid, qid, kid, vid}, [=](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(Var{&t, xid});
    const Tensor& wqv = t.value(Var{&t, qid});
    const Tensor& wkv = t.value(Var{&t, kid});
    const Tensor& wvv = t.value(Var{&t, vid});
    const double inv = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor gx = g;  // residual path
    Tensor gq_w(Shape{d, d}), gk_w(Shape{d, d}), gv_w(Shape{d, d});
    std::vector<double> da(tokens * tokens), ds(tokens * tokens), dq(width), dk(width), dv(width);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* xb = xv.values().data() + b * width;
      const double* gb = g.values().data() + b * width;
      const double* q = cache->q.data() + b * width;
      const double* k = cache->k.data() + b * width;
      const double* v = cache->v.data() + b * width;
      const double* a = cache->a.data() + b * tokens * tokens;
      std::fill(da.begin(), da.end(), 0.0);
      std::fill(dv.begin(), dv.end(), 0.0);
      gemm_nt(gb, v, da.data(), tokens, d, tokens);
      gemm_tn(a, gb, dv.data(), tokens, tokens, d);
      for (std::size_t i = 0; i < tokens; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < tokens; ++j) dot += da[i * tokens + j] * a[i * tokens + j];
        for (std::size_t j = 0; j < tokens; ++j) ds[i * tokens + j] = a[i * tokens + j] * (da[i * tokens + j] - dot) * inv;
      }
      std::fill(dq.begin(), dq.end(), 0.0);
      std::fill(dk.begin(), dk.end(), 0.0);
      gemm_nn(ds.data(), k, dq.data(), tokens, tokens, d);
      gemm_tn(ds.data(), q, dk.data(), tokens, tokens, d);
      double* gxb = gx.values().data() + b * width;
      gemm_nt(dq.data(), wqv.values().data(), gxb, tokens, d, d);
      gemm_nt(dk.data(), wkv.values().data(), gxb, tokens, d, d);
      gemm_nt(dv.data(), wvv.values().data(), gxb, tokens, d, d);
      gemm_tn(xb, dq.data(), gq_w.values().data(), tokens, d, d);
      gemm_tn(xb, dk.data(), gk_w.values().data(), tokens, d, d);
      gemm_tn(xb, dv.data(), gv_w.values().data(), tokens, d, d);
    }
    accumulate(t, xid, gx);
    accumulate(t, qid, gq_w);
    accumulate(t, kid, gk_w);
    accumulate(t, vid, gv_w);
  });
}

}  // namespace ops

Tensor attention_weights(const Tensor& input, const Tensor& wq, const Tensor& wk) {
  if (input.rank() != 2) throw DimensionError("attention input must be [T, d]");
  const std::size_t tokens = input.dim(0), d = input.dim(1);
  if (d == 0) throw DimensionError("attention: d = 0");
  std::vector<double> q(tokens * d), k(tokens * d);
  ops::project(input.values().data(), wq.values().data(), q.data(), tokens, d);
  ops::project(input.values().data(), wk.values().data(), k.data(), tokens, d);
  Tensor a(Shape{tokens, tokens});
  ops::attention_scores(q.data(), k.data(), a.values().data(), tokens, d);
  ops::softmax_rows(a.values().data(), tokens);
  return a;
}

}  // namespace altpp
