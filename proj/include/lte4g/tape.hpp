#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lte4g/dense.hpp"
#include "lte4g/kernels.hpp"
#include "lte4g/sparse.hpp"

namespace lte4g {

/// A named trainable matrix with its gradient accumulator.
struct Parameter {
  std::string name;
  DenseMat value;
  DenseMat grad;

  Parameter() = default;
  Parameter(std::string n, DenseMat v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() {
    if (!grad.same_shape(value)) grad = DenseMat(value.rows(), value.cols());
    grad.fill(0.0);
  }
};

/// FNV-1a over the raw bytes of every parameter value, in order.
inline std::uint64_t parameter_hash(std::span<const Parameter* const> params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const Parameter* p : params) {
    const std::uint64_t dims[2] = {p->value.rows(), p->value.cols()};
    mix(dims, sizeof dims);
    mix(p->value.values().data(), p->value.size() * sizeof(double));
  }
  return h;
}

/// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so the node
/// vector is already topologically sorted; backward walks it once in reverse.
///
/// Sparse operands passed to spmm are held by pointer and must outlive the tape.
class Tape {
 public:
  using Backward = std::function<void(Tape&, Var self, const DenseMat& grad_out)>;

  Var constant(DenseMat value) { return push(std::move(value), false, nullptr, {}); }

  Var parameter(Parameter& p) { return push(p.value, true, &p, {}); }

  /// Records a custom op. `backward` runs only if some input requires a gradient.
  Var record(DenseMat value, std::initializer_list<Var> inputs, Backward backward) {
    bool rg = false;
    for (Var v : inputs) rg = rg || node(v).requires_grad;
    return push(std::move(value), rg, nullptr, rg ? std::move(backward) : Backward{});
  }

  const DenseMat& value(Var v) const { return node(v).value; }
  double scalar(Var v) const {
    const auto& m = value(v);
    LTE4G_REQUIRE(m.rows() == 1 && m.cols() == 1, ContractError, "Tape::scalar: not 1x1");
    return m(0, 0);
  }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Hash of the sign (negative, zero, positive) of every ReLU input recorded so far. Two
  /// runs with equal signatures lie in the same linear piece of every ReLU.
  std::uint64_t relu_signature() const noexcept { return relu_signature_; }
  /// Smallest non-zero |input| seen by any ReLU.
  double relu_margin() const noexcept { return relu_margin_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer of `v`, zero-initialised on first access. Only valid during backward.
  DenseMat& grad(Var v) {
    auto& n = node(v);
    if (!n.has_grad) {
      n.grad = DenseMat(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  void accumulate(Var v, const DenseMat& g) {
    if (!node(v).requires_grad) return;
    auto& buf = grad(v);
    buf.require_same_shape(g, "Tape::accumulate");
    buf += g;
  }

  /// Propagates d(loss)/d(node) to every node and adds parameter gradients into
  /// Parameter::grad (which callers zero between steps).
  void backward(Var loss) {
    const auto& lv = node(loss).value;
    LTE4G_REQUIRE(lv.rows() == 1 && lv.cols() == 1, ContractError,
                  "Tape::backward: loss must be a 1x1 scalar, got " + lv.shape_str());
    if (!node(loss).requires_grad) return;
    grad(loss)(0, 0) += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.has_grad) continue;
      // Inputs always have smaller ids, so n.grad is final here and never aliased.
      if (n.backward) n.backward(*this, Var{i}, n.grad);
      if (n.param != nullptr) {
        n.param->grad.require_same_shape(n.grad, "Tape::backward parameter grad");
        n.param->grad += n.grad;
      }
    }
  }

  // ---- differentiable ops -------------------------------------------------

  Var matmul(Var a, Var b) {
    return record(lte4g::matmul(value(a), value(b)), {a, b},
                  [a, b](Tape& t, Var, const DenseMat& g) {
                    if (t.requires_grad(a)) t.accumulate(a, matmul_nt(g, t.value(b)));
                    if (t.requires_grad(b)) t.accumulate(b, matmul_tn(t.value(a), g));
                  });
  }

  /// S * d for a constant sparse S; the gradient flows to d only.
  Var spmm(const SparseMat& s, Var d) {
    const SparseMat* sp = &s;
    return record(lte4g::spmm(s, value(d)), {d}, [sp, d](Tape& t, Var, const DenseMat& g) {
      t.accumulate(d, spmm_tn(*sp, g));
    });
  }

  Var relu(Var x) {
    const DenseMat& xv = value(x);
    DenseMat out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv.values()[i];
      out.values()[i] = v > 0.0 ? v : 0.0;
      relu_signature_ = (relu_signature_ ^ static_cast<std::uint64_t>(v > 0.0 ? 2 : v < 0.0 ? 1 : 0)) *
                        1099511628211ull;
      if (v != 0.0) relu_margin_ = std::min(relu_margin_, std::abs(v));
    }
    return record(std::move(out), {x}, [x](Tape& t, Var, const DenseMat& g) {
      const DenseMat& in = t.value(x);
      DenseMat gx(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.size(); ++i)
        gx.values()[i] = in.values()[i] > 0.0 ? g.values()[i] : 0.0;  // subgradient 0 at 0
      t.accumulate(x, gx);
    });
  }

  /// Row-wise softmax with max subtraction.
  Var row_softmax(Var x) {
    const DenseMat& xv = value(x);
    DenseMat out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.rows(); ++i) {
      auto in = xv.row(i);
      auto o = out.row(i);
      if (in.empty()) continue;
      double mx = in[0];
      for (double v : in) mx = std::max(mx, v);
      double s = 0.0;
      for (std::size_t j = 0; j < in.size(); ++j) s += (o[j] = std::exp(in[j] - mx));
      for (double& v : o) v /= s;
    }
    return record(std::move(out), {x}, [x](Tape& t, Var self, const DenseMat& g) {
      const DenseMat& p = t.value(self);
      DenseMat gx(g.rows(), g.cols());
      for (std::size_t i = 0; i < p.rows(); ++i) {
        auto pi = p.row(i);
        auto gi = g.row(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < pi.size(); ++j) dot += pi[j] * gi[j];
        auto out = gx.row(i);
        for (std::size_t j = 0; j < pi.size(); ++j) out[j] = pi[j] * (gi[j] - dot);
      }
      t.accumulate(x, gx);
    });
  }

  Var select_rows(Var x, std::span<const std::size_t> rows) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    DenseMat out = gather_rows(value(x), idx);
    return record(std::move(out), {x}, [x, idx = std::move(idx)](Tape& t, Var, const DenseMat& g) {
      DenseMat& buf = t.grad(x);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        auto src = g.row(r);
        auto dst = buf.row(idx[r]);
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
      }
    });
  }

  Var scale(Var x, double s) {
    DenseMat out = value(x);
    for (double& v : out.values()) v *= s;
    return record(std::move(out), {x}, [x, s](Tape& t, Var, const DenseMat& g) {
      DenseMat gx = g;
      for (double& v : gx.values()) v *= s;
      t.accumulate(x, gx);
    });
  }

  Var add(Var a, Var b) {
    value(a).require_same_shape(value(b), "Tape::add");
    DenseMat out = value(a);
    out += value(b);
    return record(std::move(out), {a, b}, [a, b](Tape& t, Var, const DenseMat& g) {
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  Var sum(Var x) {
    double s = 0.0;
    for (double v : value(x).values()) s += v;
    return record(DenseMat(1, 1, s), {x}, [x](Tape& t, Var, const DenseMat& g) {
      const auto& xv = t.value(x);
      t.accumulate(x, DenseMat(xv.rows(), xv.cols(), g(0, 0)));
    });
  }

 private:
  struct Node {
    DenseMat value;
    DenseMat grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };

  Var push(DenseMat value, bool rg, Parameter* p, Backward bw) {
    nodes_.push_back(Node{std::move(value), {}, false, rg, p, std::move(bw)});
    return Var{nodes_.size() - 1};
  }

  Node& node(Var v) {
    LTE4G_REQUIRE(v.id < nodes_.size(), ContractError, "Tape: variable not on this tape");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    LTE4G_REQUIRE(v.id < nodes_.size(), ContractError, "Tape: variable not on this tape");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  std::uint64_t relu_signature_ = 1469598103934665603ull;
  double relu_margin_ = std::numeric_limits<double>::infinity();
};

}  // namespace lte4g
