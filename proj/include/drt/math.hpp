#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace drt {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Error taxonomy shared across the library. The CLI maps ConfigError and
// ParseError to exit code 2, everything else to 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void check_config(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}
inline void check_usage(bool ok, const std::string& msg) {
  if (!ok) throw UsageError(msg);
}

// value_of extracts the primal double from any scalar type used in the
// templated math (double, Var, Dual3<...>). Overloads for the autodiff
// types live next to their definitions.
inline double value_of(double x) { return x; }
inline double value_of(float x) { return x; }

// ---------------------------------------------------------------------------
// Generic 3-vector over a scalar type S. S is double for plain evaluation,
// Var when recording on a tape, Dual3<...> when position derivatives ride
// along with the value.
// ---------------------------------------------------------------------------
template <class S>
struct Vec3 {
  S x{}, y{}, z{};

  Vec3() = default;
  Vec3(S xx, S yy, S zz) : x(std::move(xx)), y(std::move(yy)), z(std::move(zz)) {}

  template <class T>
  explicit Vec3(const Vec3<T>& o) : x(S(o.x)), y(S(o.y)), z(S(o.z)) {}

  S& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  const S& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

using Vec3d = Vec3<double>;

template <class S> Vec3<S> operator+(const Vec3<S>& a, const Vec3<S>& b) {
  return {a.x + b.x, a.y + b.y, a.z + b.z};
}
template <class S> Vec3<S> operator-(const Vec3<S>& a, const Vec3<S>& b) {
  return {a.x - b.x, a.y - b.y, a.z - b.z};
}
template <class S> Vec3<S> operator-(const Vec3<S>& a) { return {-a.x, -a.y, -a.z}; }
template <class S, class T> Vec3<S> operator*(const Vec3<S>& a, const T& s) {
  return {a.x * s, a.y * s, a.z * s};
}
template <class S, class T> Vec3<S> operator*(const T& s, const Vec3<S>& a) {
  return {a.x * s, a.y * s, a.z * s};
}
template <class S, class T> Vec3<S> operator/(const Vec3<S>& a, const T& s) {
  return {a.x / s, a.y / s, a.z / s};
}
template <class S> Vec3<S>& operator+=(Vec3<S>& a, const Vec3<S>& b) {
  a.x = a.x + b.x; a.y = a.y + b.y; a.z = a.z + b.z; return a;
}

template <class S> S dot(const Vec3<S>& a, const Vec3<S>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
template <class S> Vec3<S> cross(const Vec3<S>& a, const Vec3<S>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
template <class S> S length_sq(const Vec3<S>& v) { return dot(v, v); }
template <class S> S length(const Vec3<S>& v) { using std::sqrt; return sqrt(dot(v, v)); }
template <class S> Vec3<S> normalize(const Vec3<S>& v) { return v / length(v); }

inline Vec3d vmin(const Vec3d& a, const Vec3d& b) {
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}
inline Vec3d vmax(const Vec3d& a, const Vec3d& b) {
  return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}

template <class S>
Vec3d value_of(const Vec3<S>& v) {
  return {value_of(v.x), value_of(v.y), value_of(v.z)};
}

// Row-major 3x3 matrix over a scalar type.
template <class S>
struct Mat3 {
  std::array<S, 9> m{};

  static Mat3 identity() {
    Mat3 r;
    r.m = {S(1), S(0), S(0), S(0), S(1), S(0), S(0), S(0), S(1)};
    return r;
  }
  S& operator()(int r, int c) { return m[3 * r + c]; }
  const S& operator()(int r, int c) const { return m[3 * r + c]; }
};

using Mat3d = Mat3<double>;

template <class S>
Vec3<S> mul(const Mat3<S>& A, const Vec3<S>& v) {
  return {A.m[0] * v.x + A.m[1] * v.y + A.m[2] * v.z,
          A.m[3] * v.x + A.m[4] * v.y + A.m[5] * v.z,
          A.m[6] * v.x + A.m[7] * v.y + A.m[8] * v.z};
}

// Largest singular value of a 3x3 matrix by power iteration on A^T A.
inline double spectral_norm(const Mat3d& A) {
  Vec3d v{1.0, 0.7548776662, 0.5698402910};  // fixed, generic start direction
  v = normalize(v);
  double lam = 0.0;
  for (int it = 0; it < 32; ++it) {
    Vec3d Av = mul(A, v);
    Vec3d w{A.m[0] * Av.x + A.m[3] * Av.y + A.m[6] * Av.z,
            A.m[1] * Av.x + A.m[4] * Av.y + A.m[7] * Av.z,
            A.m[2] * Av.x + A.m[5] * Av.y + A.m[8] * Av.z};
    double n = length(w);
    if (n < 1e-300) return 0.0;
    v = w / n;
    lam = n;
  }
  return std::sqrt(lam);
}

// 4x4 rigid transform stored row-major; rotation block plus translation.
struct Mat4 {
  std::array<double, 16> m{};

  static Mat4 identity() {
    Mat4 r;
    for (int i = 0; i < 4; ++i) r.m[5 * i] = 1.0;
    return r;
  }
  double& operator()(int r, int c) { return m[4 * r + c]; }
  double operator()(int r, int c) const { return m[4 * r + c]; }

  Vec3d rotate(const Vec3d& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[4] * v.x + m[5] * v.y + m[6] * v.z,
            m[8] * v.x + m[9] * v.y + m[10] * v.z};
  }
  Vec3d transform(const Vec3d& v) const {
    Vec3d r = rotate(v);
    return {r.x + m[3], r.y + m[7], r.z + m[11]};
  }
  Vec3d translation() const { return {m[3], m[7], m[11]}; }

  // Inverse assuming a rigid transform (orthonormal rotation block).
  Mat4 rigid_inverse() const {
    Mat4 r = identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    Vec3d t = translation();
    Vec3d ti = r.rotate(t);
    r(0, 3) = -ti.x; r(1, 3) = -ti.y; r(2, 3) = -ti.z;
    return r;
  }
};

inline double rotation_orthonormality_error(const Mat4& m) {
  double err = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double d = 0.0;
      for (int k = 0; k < 3; ++k) d += m(k, i) * m(k, j);
      err = std::max(err, std::abs(d - (i == j ? 1.0 : 0.0)));
    }
  }
  return err;
}

// ---------------------------------------------------------------------------
// Scalar helpers shared by all scalar types. They are written in terms of
// the primitive ops (exp, log, ...) that every scalar type provides.
// ---------------------------------------------------------------------------

template <class S> S sqr(const S& x) { return x * x; }

// Unqualified-call targets so templated code works with S = double alongside
// the autodiff scalar types (which provide their own overloads).
inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
inline double tanh(double x) { return std::tanh(x); }
inline double abs(double x) { return std::fabs(x); }
inline double pow(double x, double p) { return std::pow(x, p); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double vmin(double a, double b) { return a <= b ? a : b; }
inline double vmax(double a, double b) { return a >= b ? a : b; }

// Numerically-stable softplus: log(1 + e^x) = max(x,0) + log1p(e^{-|x|}).
inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}
inline double sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}
// Inverse of softplus, for initializing reparameterized positives.
inline double softplus_inverse(double y) {
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

// Scaled softplus used as a smooth clamp of cosine terms: (1/beta)*log(1+e^(beta*x)).
template <class S> S softclamp(const S& x, double beta) {
  return softplus(x * beta) * (1.0 / beta);
}

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

inline double degrees_to_radians(double d) { return d * kPi / 180.0; }

// Orthonormal basis about a unit vector n (branchless construction).
inline void build_onb(const Vec3d& n, Vec3d& t, Vec3d& b) {
  double sign = std::copysign(1.0, n.z);
  double a = -1.0 / (sign + n.z);
  double c = n.x * n.y * a;
  t = {1.0 + sign * n.x * n.x * a, sign * c, -sign * n.x};
  b = {c, sign + n.y * n.y * a, -n.y};
}

}  // namespace drt
