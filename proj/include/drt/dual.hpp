#pragma once

#include <type_traits>

#include "drt/math.hpp"

namespace drt {

// Forward-mode scalar carrying a value and its gradient with respect to a
// 3-vector (usually a query position). The component type T is double for
// plain evaluation or Var when the result must stay differentiable with
// respect to model parameters as well.
template <class T>
struct Dual3 {
  T v{}, dx{}, dy{}, dz{};

  Dual3() = default;
  Dual3(T vv, T gx, T gy, T gz)
      : v(std::move(vv)), dx(std::move(gx)), dy(std::move(gy)), dz(std::move(gz)) {}
  Dual3(const T& c) : v(c), dx(0.0), dy(0.0), dz(0.0) {}  // constant in position

  template <class U = T, class = std::enable_if_t<!std::is_same_v<U, double>>>
  Dual3(double c) : v(c), dx(0.0), dy(0.0), dz(0.0) {}
};

template <class T> double value_of(const Dual3<T>& d) { return value_of(d.v); }

template <class T>
Dual3<T> operator+(const Dual3<T>& a, const Dual3<T>& b) {
  return {a.v + b.v, a.dx + b.dx, a.dy + b.dy, a.dz + b.dz};
}
template <class T>
Dual3<T> operator-(const Dual3<T>& a, const Dual3<T>& b) {
  return {a.v - b.v, a.dx - b.dx, a.dy - b.dy, a.dz - b.dz};
}
template <class T>
Dual3<T> operator-(const Dual3<T>& a) { return {-a.v, -a.dx, -a.dy, -a.dz}; }
template <class T>
Dual3<T> operator*(const Dual3<T>& a, const Dual3<T>& b) {
  return {a.v * b.v, a.dx * b.v + a.v * b.dx, a.dy * b.v + a.v * b.dy,
          a.dz * b.v + a.v * b.dz};
}
template <class T>
Dual3<T> operator/(const Dual3<T>& a, const Dual3<T>& b) {
  T inv = T(1.0) / b.v;
  T inv2 = inv * inv;
  return {a.v * inv, (a.dx * b.v - a.v * b.dx) * inv2, (a.dy * b.v - a.v * b.dy) * inv2,
          (a.dz * b.v - a.v * b.dz) * inv2};
}

// Mixed-type forms so literals and bare T values combine without noise.
template <class T> Dual3<T> operator+(const Dual3<T>& a, double c) { return a + Dual3<T>(c); }
template <class T> Dual3<T> operator+(double c, const Dual3<T>& a) { return Dual3<T>(c) + a; }
template <class T> Dual3<T> operator-(const Dual3<T>& a, double c) { return a - Dual3<T>(c); }
template <class T> Dual3<T> operator-(double c, const Dual3<T>& a) { return Dual3<T>(c) - a; }
template <class T> Dual3<T> operator*(const Dual3<T>& a, double c) {
  return {a.v * c, a.dx * c, a.dy * c, a.dz * c};
}
template <class T> Dual3<T> operator*(double c, const Dual3<T>& a) { return a * c; }
template <class T> Dual3<T> operator/(const Dual3<T>& a, double c) { return a * (1.0 / c); }
template <class T> Dual3<T> operator/(double c, const Dual3<T>& a) { return Dual3<T>(c) / a; }

template <class T>
Dual3<T> chain(const Dual3<T>& a, T v, const T& dv) {
  return {std::move(v), dv * a.dx, dv * a.dy, dv * a.dz};
}

template <class T> Dual3<T> exp(const Dual3<T>& a) {
  T e = exp(a.v);
  return chain(a, e, e);
}
template <class T> Dual3<T> log(const Dual3<T>& a) {
  return chain(a, log(a.v), T(1.0) / a.v);
}
template <class T> Dual3<T> sqrt(const Dual3<T>& a) {
  T s = sqrt(a.v);
  return chain(a, s, T(0.5) / s);
}
template <class T> Dual3<T> sin(const Dual3<T>& a) { return chain(a, sin(a.v), cos(a.v)); }
template <class T> Dual3<T> cos(const Dual3<T>& a) { return chain(a, cos(a.v), -sin(a.v)); }
template <class T> Dual3<T> tanh(const Dual3<T>& a) {
  T t = tanh(a.v);
  return chain(a, t, T(1.0) - t * t);
}
template <class T> Dual3<T> abs(const Dual3<T>& a) {
  double s = value_of(a.v) > 0.0 ? 1.0 : (value_of(a.v) < 0.0 ? -1.0 : 0.0);
  return chain(a, abs(a.v), T(s));
}
template <class T> Dual3<T> pow(const Dual3<T>& a, double p) {
  return chain(a, pow(a.v, p), pow(a.v, p - 1.0) * p);
}
template <class T> Dual3<T> softplus(const Dual3<T>& a) {
  return chain(a, softplus(a.v), sigmoid(a.v));
}
template <class T> Dual3<T> sigmoid(const Dual3<T>& a) {
  T s = sigmoid(a.v);
  return chain(a, s, s * (T(1.0) - s));
}
template <class T> Dual3<T> relu(const Dual3<T>& a) {
  return value_of(a.v) > 0.0 ? a : Dual3<T>(0.0);
}
template <class T> Dual3<T> vmin(const Dual3<T>& a, const Dual3<T>& b) {
  return value_of(a.v) <= value_of(b.v) ? a : b;
}
template <class T> Dual3<T> vmax(const Dual3<T>& a, const Dual3<T>& b) {
  return value_of(a.v) >= value_of(b.v) ? a : b;
}

// Seeds position components for gradient-in-x evaluation.
template <class T>
Vec3<Dual3<T>> seed_position(const Vec3<T>& p) {
  return {{p.x, T(1.0), T(0.0), T(0.0)},
          {p.y, T(0.0), T(1.0), T(0.0)},
          {p.z, T(0.0), T(0.0), T(1.0)}};
}

template <class T>
Vec3<T> gradient_of(const Dual3<T>& d) {
  return {d.dx, d.dy, d.dz};
}

}  // namespace drt
