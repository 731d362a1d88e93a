#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drt/dual.hpp"
#include "drt/math.hpp"
#include "drt/param.hpp"
#include "drt/rng.hpp"
#include "drt/tape.hpp"

namespace drt {

enum class Activation { Softplus, Relu, None };

struct MlpConfig {
  std::vector<int> layers;  // raw input, hidden..., output sizes
  Activation activation = Activation::Softplus;
  int freq_order = 0;       // L; 0 disables the sin/cos input encoding
  bool zero_init_last = false;

  int encoded_input_size() const {
    int raw = layers.front();
    return raw + 2 * raw * freq_order;
  }
};

template <class S>
S apply_activation(Activation a, const S& x) {
  switch (a) {
    case Activation::Softplus: return softplus(x);
    case Activation::Relu: return relu(x);
    case Activation::None: return x;
  }
  return x;
}

// Multilayer perceptron whose weights live in a ParamStore. Layout per layer:
// row-major weight matrix [rows x cols], then bias [rows]. The forward pass is
// generic over the scalar type; the Var path records fused affine nodes on the
// tape instead of per-multiply edges.
class Mlp {
 public:
  struct Layer {
    int64_t w = 0, b = 0;
    int rows = 0, cols = 0;
  };

  Mlp() = default;

  void build(ParamStore& store, const std::string& name, const MlpConfig& cfg) {
    check_config(cfg.layers.size() >= 2, "MLP '" + name + "' needs at least two layer sizes");
    for (int s : cfg.layers)
      check_config(s > 0, "MLP '" + name + "' has a non-positive layer size");
    cfg_ = cfg;
    layers_.clear();
    int in = cfg.encoded_input_size();
    for (size_t li = 1; li < cfg.layers.size(); ++li) {
      int out = cfg.layers[li];
      Layer l;
      l.rows = out;
      l.cols = in;
      l.w = store.add_segment(name + ".l" + std::to_string(li - 1) + ".w",
                              {out, in});
      l.b = store.add_segment(name + ".l" + std::to_string(li - 1) + ".b", {out});
      layers_.push_back(l);
      in = out;
    }
  }

  // Fan-in-scaled uniform init; optionally zeros the final layer so the
  // surrounding model starts at the MLP-free baseline.
  void init(ParamStore& store, Rng& rng) const {
    for (size_t li = 0; li < layers_.size(); ++li) {
      const Layer& l = layers_[li];
      bool zero = cfg_.zero_init_last && li + 1 == layers_.size();
      double bound = 1.0 / std::sqrt(double(l.cols));
      for (int64_t i = 0; i < int64_t(l.rows) * l.cols; ++i)
        store[l.w + i] = zero ? 0.0 : rng.uniform(-bound, bound);
      for (int64_t i = 0; i < l.rows; ++i) store[l.b + i] = 0.0;
    }
  }

  int input_size() const { return cfg_.layers.front(); }
  int output_size() const { return cfg_.layers.back(); }
  const MlpConfig& config() const { return cfg_; }
  const std::vector<Layer>& layers() const { return layers_; }

  // in: raw input (input_size entries); out: output_size entries.
  template <class S>
  void forward(const double* params, const S* in, S* out, Tape* tape = nullptr) const {
    check_usage(!layers_.empty(), "MLP used before build()");
    std::vector<S> cur;
    encode(in, cur);
    std::vector<S> next;
    for (size_t li = 0; li < layers_.size(); ++li) {
      const Layer& l = layers_[li];
      check_usage(int(cur.size()) == l.cols, "MLP input width mismatch");
      next.resize(l.rows);
      if constexpr (std::is_same_v<S, Var>) {
        tape->affine(l.rows, l.cols, l.w, l.b, cur.data(), next.data());
      } else {
        affine_generic(params, l, cur.data(), next.data());
      }
      if (li + 1 < layers_.size())
        for (auto& v : next) v = apply_activation(cfg_.activation, v);
      cur.swap(next);
    }
    for (int i = 0; i < output_size(); ++i) out[i] = cur[i];
  }

  // Var forward with dx/dy/dz riding along: four fused affines per layer
  // sharing the same weights (the derivative rows are linear in the same W).
  void forward(const double* params, const Dual3<Var>* in, Dual3<Var>* out,
               Tape* tape) const {
    check_usage(!layers_.empty(), "MLP used before build()");
    std::vector<Dual3<Var>> cur;
    encode(in, cur);
    std::vector<Dual3<Var>> next;
    std::vector<Var> comp_in, comp_out;
    for (size_t li = 0; li < layers_.size(); ++li) {
      const Layer& l = layers_[li];
      next.resize(l.rows);
      comp_in.resize(l.cols);
      comp_out.resize(l.rows);
      for (int comp = 0; comp < 4; ++comp) {
        for (int i = 0; i < l.cols; ++i) comp_in[i] = dual_comp(cur[i], comp);
        tape->affine(l.rows, l.cols, l.w, comp == 0 ? l.b : int64_t(-1),
                     comp_in.data(), comp_out.data());
        for (int j = 0; j < l.rows; ++j) dual_comp(next[j], comp) = comp_out[j];
      }
      if (li + 1 < layers_.size())
        for (auto& v : next) v = apply_activation(cfg_.activation, v);
      cur.swap(next);
    }
    for (int i = 0; i < output_size(); ++i) out[i] = cur[i];
  }

 private:
  static Var& dual_comp(Dual3<Var>& d, int c) {
    return c == 0 ? d.v : (c == 1 ? d.dx : (c == 2 ? d.dy : d.dz));
  }
  static const Var& dual_comp(const Dual3<Var>& d, int c) {
    return c == 0 ? d.v : (c == 1 ? d.dx : (c == 2 ? d.dy : d.dz));
  }

  template <class S>
  void affine_generic(const double* params, const Layer& l, const S* in, S* out) const {
    for (int j = 0; j < l.rows; ++j) {
      const double* wrow = params + l.w + int64_t(j) * l.cols;
      S acc = S(params[l.b + j]);
      for (int i = 0; i < l.cols; ++i) acc = acc + in[i] * wrow[i];
      out[j] = acc;
    }
  }

  // Raw features followed by interleaved sin/cos bands at 2^j * pi.
  template <class S>
  void encode(const S* in, std::vector<S>& out) const {
    int raw = input_size();
    out.clear();
    out.reserve(cfg_.encoded_input_size());
    for (int i = 0; i < raw; ++i) out.push_back(in[i]);
    double freq = kPi;
    for (int j = 0; j < cfg_.freq_order; ++j) {
      for (int i = 0; i < raw; ++i) {
        out.push_back(sin(in[i] * freq));
        out.push_back(cos(in[i] * freq));
      }
      freq *= 2.0;
    }
  }

  MlpConfig cfg_;
  std::vector<Layer> layers_;
};

}  // namespace drt
