#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drt/math.hpp"

namespace drt {

// Flat parameter vector with per-parameter gradients. Model components claim
// named, disjoint index ranges; the ranges cover the whole array by
// construction since registration is the only way to grow it.
class ParamStore {
 public:
  struct Segment {
    std::string name;
    int64_t offset = 0;
    int64_t size = 0;
    std::vector<int64_t> shape;
    bool frozen = false;
  };

  int64_t add_segment(const std::string& name, std::vector<int64_t> shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    check_config(n > 0, "segment '" + name + "' must be non-empty");
    for (const auto& s : segments_)
      check_config(s.name != name, "duplicate parameter segment '" + name + "'");
    Segment seg;
    seg.name = name;
    seg.offset = int64_t(values_.size());
    seg.size = n;
    seg.shape = std::move(shape);
    segments_.push_back(seg);
    values_.resize(values_.size() + n, 0.0);
    grads_.resize(values_.size(), 0.0);
    return seg.offset;
  }

  int64_t size() const { return int64_t(values_.size()); }
  double* values() { return values_.data(); }
  const double* values() const { return values_.data(); }
  double* grads() { return grads_.data(); }
  const double* grads() const { return grads_.data(); }
  std::vector<double>& value_vec() { return values_; }
  std::vector<double>& grad_vec() { return grads_; }

  double& operator[](int64_t i) { return values_[i]; }
  double operator[](int64_t i) const { return values_[i]; }

  void zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

  const std::vector<Segment>& segments() const { return segments_; }

  const Segment* find(const std::string& name) const {
    for (const auto& s : segments_)
      if (s.name == name) return &s;
    return nullptr;
  }

  // Freezes every segment whose name starts with the prefix. Returns the
  // number of segments affected.
  int set_frozen(const std::string& prefix, bool frozen) {
    int hits = 0;
    for (auto& s : segments_) {
      if (s.name.rfind(prefix, 0) == 0) {
        s.frozen = frozen;
        ++hits;
      }
    }
    return hits;
  }

  void set_all_frozen(bool frozen) {
    for (auto& s : segments_) s.frozen = frozen;
  }

  bool is_frozen(int64_t index) const {
    for (const auto& s : segments_)
      if (index >= s.offset && index < s.offset + s.size) return s.frozen;
    return false;
  }

 private:
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<Segment> segments_;
};

}  // namespace drt
