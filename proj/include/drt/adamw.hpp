#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "drt/param.hpp"

namespace drt {

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
};

// AdamW with decoupled weight decay: the decay term scales the parameter
// directly and never enters the gradient moments. Frozen segments are left
// untouched, moments included.
struct AdamWState {
  std::vector<double> m, v;
  int64_t t = 0;
  AdamWConfig cfg;

  void init(int64_t n, const AdamWConfig& c) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    t = 0;
    cfg = c;
  }

  void step(ParamStore& params) {
    check_usage(int64_t(m.size()) == params.size(), "AdamW state size mismatch");
    ++t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
    double* val = params.values();
    const double* g = params.grads();
    for (const auto& seg : params.segments()) {
      if (seg.frozen) continue;
      for (int64_t i = seg.offset; i < seg.offset + seg.size; ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        val[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * val[i]);
      }
    }
  }
};

}  // namespace drt
