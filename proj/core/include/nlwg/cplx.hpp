#pragma once

// Minimal complex arithmetic over a generic real scalar (double or ad::Var).
// std::complex is specified only for float/double/long double, so the transfer
// matrices carry this type instead; real and imaginary parts differentiate as
// independent reals.

#include <cmath>
#include <concepts>

#include "nlwg/ad.hpp"

namespace nlwg {

template <class T>
struct Cx {
  T re{}, im{};

  Cx() = default;
  Cx(T r) : re(std::move(r)), im(T(0.0)) {}
  Cx(T r, T i) : re(std::move(r)), im(std::move(i)) {}
};

template <class T>
Cx<T> operator+(const Cx<T>& a, const Cx<T>& b) {
  return {a.re + b.re, a.im + b.im};
}
template <class T>
Cx<T> operator-(const Cx<T>& a, const Cx<T>& b) {
  return {a.re - b.re, a.im - b.im};
}
template <class T>
Cx<T> operator-(const Cx<T>& a) {
  return {-a.re, -a.im};
}
template <class T, class S>
concept CxScalar = std::same_as<S, T> || std::same_as<S, double>;

template <class T>
Cx<T> operator*(const Cx<T>& a, const Cx<T>& b) {
  return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}
template <class T, class S>
  requires CxScalar<T, S>
Cx<T> operator*(const S& s, const Cx<T>& a) {
  return {s * a.re, s * a.im};
}
template <class T, class S>
  requires CxScalar<T, S>
Cx<T> operator*(const Cx<T>& a, const S& s) {
  return {a.re * s, a.im * s};
}
template <class T>
Cx<T> operator/(const Cx<T>& a, const Cx<T>& b) {
  // Smith's scaling-free form is unnecessary here: magnitudes stay O(1).
  T d = b.re * b.re + b.im * b.im;
  return {(a.re * b.re + a.im * b.im) / d, (a.im * b.re - a.re * b.im) / d};
}
template <class T, class S>
  requires CxScalar<T, S>
Cx<T> operator/(const Cx<T>& a, const S& s) {
  return {a.re / s, a.im / s};
}

template <class T>
Cx<T> conj(const Cx<T>& a) {
  return {a.re, -a.im};
}
template <class T>
T norm(const Cx<T>& a) {
  return a.re * a.re + a.im * a.im;
}
template <class T>
T abs(const Cx<T>& a) {
  using std::sqrt;
  using ad::sqrt;
  return sqrt(a.re * a.re + a.im * a.im);
}
template <class T>
Cx<T> cexp(const Cx<T>& a) {  // exp(re + i im)
  using std::exp;
  using ad::exp;
  T m = exp(a.re);
  const auto sc = ad::sin_cos(a.im);
  return {m * sc.second, m * sc.first};
}
// exp(i phi) for real phi
template <class T>
Cx<T> expi(const T& phi) {
  const auto sc = ad::sin_cos(phi);
  return {sc.second, sc.first};
}

// Principal square root of a real argument, returned with Im >= 0:
// a >= 0 -> (sqrt(a), 0); a < 0 -> (0, sqrt(-a)). This is the wavevector
// convention that makes evanescent waves decay with exp(i kz x).
template <class T>
Cx<T> sqrt_real_to_cx(const T& a) {
  using std::sqrt;
  using ad::sqrt;
  if (val(a) >= 0.0) return {sqrt(a), T(0.0)};
  return {T(0.0), sqrt(-a)};
}

}  // namespace nlwg
