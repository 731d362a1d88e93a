#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "drt/math.hpp"

namespace drt {

class Tape;

// A scalar that may be recorded on a tape. slot < 0 marks a plain constant,
// so generic code can mix literals and tracked values freely; constants never
// touch the tape.
struct Var {
  Tape* tape = nullptr;
  int32_t slot = -1;
  double val = 0.0;

  Var() = default;
  Var(double v) : val(v) {}
  Var(Tape* t, int32_t s, double v) : tape(t), slot(s), val(v) {}
  bool tracked() const { return slot >= 0; }
};

inline double value_of(const Var& v) { return v.val; }

// One dependency edge: d(out)/d(src) = w. src >= 0 refers to a tape slot,
// src < 0 refers to parameter index ~src, whose adjoint goes straight to the
// gradient buffer.
struct TapeEdge {
  int32_t out;
  int32_t src;
  double w;
};

// Fused affine node y = W a + b recorded as one unit instead of O(rows*cols)
// edges. Weights and bias live in the bound parameter array; inputs are a
// gather list of slots (entry >= 0) or constant-pool values (entry = ~idx).
struct DenseNode {
  int64_t edge_pos;
  int32_t out_base;
  int32_t rows, cols;
  int64_t w_param, b_param;  // b_param < 0: no bias
  int64_t in_base;           // into gather pool
};

class Tape {
 public:
  void bind(const double* params, int64_t count) {
    params_ = params;
    param_count_ = count;
  }
  const double* params() const { return params_; }

  void reset() {
    vals_.clear();
    edges_.clear();
    dense_.clear();
    gather_.clear();
    cpool_.clear();
  }

  int64_t num_slots() const { return int64_t(vals_.size()); }
  int64_t num_edges() const { return int64_t(edges_.size()); }

  int32_t alloc(double v) {
    vals_.push_back(v);
    return int32_t(vals_.size() - 1);
  }

  void edge(int32_t out, int32_t src, double w) { edges_.push_back({out, src, w}); }

  // Bridges a parameter into the tape as a leaf variable.
  Var param(int64_t idx) {
    assert(params_ && idx >= 0 && idx < param_count_);
    double v = params_[idx];
    int32_t s = alloc(v);
    edges_.push_back({s, int32_t(~idx), 1.0});
    return Var(this, s, v);
  }

  static Var unary(const Var& a, double v, double da) {
    if (!a.tracked()) return Var(v);
    Tape* t = a.tape;
    int32_t s = t->alloc(v);
    t->edges_.push_back({s, a.slot, da});
    return Var(t, s, v);
  }

  static Var binary(const Var& a, const Var& b, double v, double da, double db) {
    if (!a.tracked() && !b.tracked()) return Var(v);
    Tape* t = a.tracked() ? a.tape : b.tape;
    assert(!a.tracked() || !b.tracked() || a.tape == b.tape);
    int32_t s = t->alloc(v);
    if (a.tracked()) t->edges_.push_back({s, a.slot, da});
    if (b.tracked()) t->edges_.push_back({s, b.slot, db});
    return Var(t, s, v);
  }

  // y = W a + b with W row-major rows x cols starting at w_param. Inputs may
  // mix tracked and constant entries. Outputs are fresh contiguous slots.
  void affine(int rows, int cols, int64_t w_param, int64_t b_param,
              const Var* in, Var* out) {
    assert(params_);
    DenseNode node;
    node.edge_pos = int64_t(edges_.size());
    node.rows = rows;
    node.cols = cols;
    node.w_param = w_param;
    node.b_param = b_param;
    node.in_base = int64_t(gather_.size());
    for (int i = 0; i < cols; ++i) {
      if (in[i].tracked()) {
        gather_.push_back(in[i].slot);
      } else {
        gather_.push_back(int32_t(~int32_t(cpool_.size())));
        cpool_.push_back(in[i].val);
      }
    }
    node.out_base = int32_t(vals_.size());
    const int32_t* g = gather_.data() + node.in_base;
    for (int j = 0; j < rows; ++j) {
      const double* wrow = params_ + w_param + int64_t(j) * cols;
      double acc = b_param >= 0 ? params_[b_param + j] : 0.0;
      for (int i = 0; i < cols; ++i) {
        double xv = g[i] >= 0 ? vals_[g[i]] : cpool_[~g[i]];
        acc += wrow[i] * xv;
      }
      int32_t s = alloc(acc);
      out[j] = Var(this, s, acc);
    }
    dense_.push_back(node);
  }

  // Reverse sweep from root; parameter adjoints accumulate (+=) into grads.
  void backward(const Var& root, std::span<double> grads, double seed = 1.0) {
    if (!root.tracked()) return;
    assert(root.tape == this);
    adj_.assign(vals_.size(), 0.0);
    adj_[root.slot] = seed;
    int64_t ei = int64_t(edges_.size());
    int64_t di = int64_t(dense_.size());
    while (ei > 0 || di > 0) {
      if (di > 0 && dense_[di - 1].edge_pos >= ei) {
        const DenseNode& n = dense_[--di];
        const int32_t* g = gather_.data() + n.in_base;
        for (int j = 0; j < n.rows; ++j) {
          double a = adj_[n.out_base + j];
          if (a == 0.0) continue;
          const int64_t wrow = n.w_param + int64_t(j) * n.cols;
          if (n.b_param >= 0) grads[n.b_param + j] += a;
          for (int i = 0; i < n.cols; ++i) {
            if (g[i] >= 0) {
              grads[wrow + i] += a * vals_[g[i]];
              adj_[g[i]] += a * params_[wrow + i];
            } else {
              grads[wrow + i] += a * cpool_[~g[i]];
            }
          }
        }
      } else {
        const TapeEdge& e = edges_[--ei];
        double a = adj_[e.out];
        if (a == 0.0) continue;
        if (e.src >= 0) {
          adj_[e.src] += a * e.w;
        } else {
          grads[~e.src] += a * e.w;
        }
      }
    }
  }

 private:
  std::vector<double> vals_;
  std::vector<TapeEdge> edges_;
  std::vector<DenseNode> dense_;
  std::vector<int32_t> gather_;
  std::vector<double> cpool_;
  std::vector<double> adj_;
  const double* params_ = nullptr;
  int64_t param_count_ = 0;
};

// ---------------------------------------------------------------------------
// Var arithmetic. Derivatives are recorded at their evaluated values.
// ---------------------------------------------------------------------------

inline Var operator+(const Var& a, const Var& b) {
  return Tape::binary(a, b, a.val + b.val, 1.0, 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  return Tape::binary(a, b, a.val - b.val, 1.0, -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  return Tape::binary(a, b, a.val * b.val, b.val, a.val);
}
inline Var operator/(const Var& a, const Var& b) {
  double inv = 1.0 / b.val;
  return Tape::binary(a, b, a.val * inv, inv, -a.val * inv * inv);
}
inline Var operator-(const Var& a) { return Tape::unary(a, -a.val, -1.0); }
inline Var& operator+=(Var& a, const Var& b) { a = a + b; return a; }
inline Var& operator-=(Var& a, const Var& b) { a = a - b; return a; }
inline Var& operator*=(Var& a, const Var& b) { a = a * b; return a; }

inline Var exp(const Var& a) {
  double v = std::exp(a.val);
  return Tape::unary(a, v, v);
}
inline Var log(const Var& a) { return Tape::unary(a, std::log(a.val), 1.0 / a.val); }
inline Var sqrt(const Var& a) {
  double v = std::sqrt(a.val);
  return Tape::unary(a, v, 0.5 / v);
}
inline Var sin(const Var& a) { return Tape::unary(a, std::sin(a.val), std::cos(a.val)); }
inline Var cos(const Var& a) { return Tape::unary(a, std::cos(a.val), -std::sin(a.val)); }
inline Var tanh(const Var& a) {
  double t = std::tanh(a.val);
  return Tape::unary(a, t, 1.0 - t * t);
}
inline Var abs(const Var& a) {
  double s = a.val > 0.0 ? 1.0 : (a.val < 0.0 ? -1.0 : 0.0);
  return Tape::unary(a, std::abs(a.val), s);
}
inline Var pow(const Var& a, double p) {
  double v = std::pow(a.val, p);
  return Tape::unary(a, v, p * std::pow(a.val, p - 1.0));
}
inline Var softplus(const Var& a) {
  return Tape::unary(a, softplus(a.val), sigmoid(a.val));
}
inline Var sigmoid(const Var& a) {
  double s = sigmoid(a.val);
  return Tape::unary(a, s, s * (1.0 - s));
}
inline Var relu(const Var& a) { return a.val > 0.0 ? a : Var(0.0); }

inline Var vmin(const Var& a, const Var& b) { return a.val <= b.val ? a : b; }
inline Var vmax(const Var& a, const Var& b) { return a.val >= b.val ? a : b; }

inline bool isfinite_value(const Var& v) { return std::isfinite(v.val); }
inline bool isfinite_value(double v) { return std::isfinite(v); }

}  // namespace drt
