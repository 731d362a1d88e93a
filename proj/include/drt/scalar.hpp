#pragma once

#include <type_traits>

#include "drt/dual.hpp"
#include "drt/math.hpp"
#include "drt/tape.hpp"

namespace drt {

// Bridges a stored parameter into the requested scalar type: plain read for
// double, a tape leaf for Var, and position-constant duals for Dual3 types.
template <class S>
S param_as(const double* params, Tape* tape, int64_t idx) {
  if constexpr (std::is_same_v<S, double>) {
    (void)tape;
    return params[idx];
  } else if constexpr (std::is_same_v<S, Var>) {
    (void)params;
    return tape->param(idx);
  } else if constexpr (std::is_same_v<S, Dual3<double>>) {
    (void)tape;
    return Dual3<double>(params[idx]);
  } else {
    static_assert(std::is_same_v<S, Dual3<Var>>, "unsupported scalar type");
    (void)params;
    return Dual3<Var>(tape->param(idx));
  }
}

template <class S>
Vec3<S> param_vec3_as(const double* params, Tape* tape, int64_t idx) {
  return {param_as<S>(params, tape, idx), param_as<S>(params, tape, idx + 1),
          param_as<S>(params, tape, idx + 2)};
}

// The scalar type carrying position derivatives for a base scalar.
template <class S> struct with_dual3 { using type = Dual3<S>; };
template <class S> using with_dual3_t = typename with_dual3<S>::type;

// The underlying parameter scalar of a possibly-dual type.
template <class S> struct base_scalar { using type = S; };
template <class T> struct base_scalar<Dual3<T>> { using type = T; };
template <class S> using base_scalar_t = typename base_scalar<S>::type;

}  // namespace drt
