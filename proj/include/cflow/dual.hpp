#pragma once

// Forward-mode dual numbers with a fixed number of infinitesimal slots.
//
// Nesting Dual<Dual<...>> gives exact higher derivatives: a Dual<Dual<double>>
// seeded on every coordinate carries the full Hessian, a three-level nesting
// carries all third derivatives. The slot count matches the largest space-time
// dimension handled by the toolkit (1 + 3).

#include <array>
#include <cmath>
#include <type_traits>

namespace cflow {

inline constexpr int kMaxDim = 4;

template <class T>
struct Dual {
  T v{};
  std::array<T, kMaxDim> d{};

  constexpr Dual() = default;
  constexpr Dual(double x) : v(x) {}  // NOLINT: constants promote implicitly
  template <class U>
    requires(!std::is_same_v<T, double> && std::is_same_v<U, T>)
  explicit constexpr Dual(const U& x) : v(x) {}
};

using D1 = Dual<double>;
using D2 = Dual<D1>;
using D3 = Dual<D2>;

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};

/// Nesting depth: 0 for double, 1 for D1, ...
template <class T>
struct dual_depth : std::integral_constant<int, 0> {};
template <class T>
struct dual_depth<Dual<T>> : std::integral_constant<int, 1 + dual_depth<T>::value> {};

template <class T>
inline constexpr int dual_depth_v = dual_depth<T>::value;

inline constexpr double primal(double x) { return x; }
template <class T>
constexpr double primal(const Dual<T>& x) {
  return primal(x.v);
}

inline bool all_finite(double x) { return std::isfinite(x); }
template <class T>
bool all_finite(const Dual<T>& x) {
  if (!all_finite(x.v)) return false;
  for (const auto& e : x.d)
    if (!all_finite(e)) return false;
  return true;
}

/// The independent variable for coordinate `slot`, valued `x`, at every nesting level.
template <class T>
T seed(double x, int slot) {
  if constexpr (std::is_same_v<T, double>) {
    return x;
  } else {
    using Inner = decltype(T{}.v);
    T r;
    r.v = seed<Inner>(x, slot);
    r.d[slot] = Inner(1.0);
    return r;
  }
}

// --- arithmetic -------------------------------------------------------------

template <class T>
constexpr Dual<T> operator+(const Dual<T>& a) {
  return a;
}
template <class T>
constexpr Dual<T> operator-(const Dual<T>& a) {
  Dual<T> r;
  r.v = -a.v;
  for (int i = 0; i < kMaxDim; ++i) r.d[i] = -a.d[i];
  return r;
}

template <class T>
constexpr Dual<T>& operator+=(Dual<T>& a, const Dual<T>& b) {
  a.v += b.v;
  for (int i = 0; i < kMaxDim; ++i) a.d[i] += b.d[i];
  return a;
}
template <class T>
constexpr Dual<T>& operator-=(Dual<T>& a, const Dual<T>& b) {
  a.v -= b.v;
  for (int i = 0; i < kMaxDim; ++i) a.d[i] -= b.d[i];
  return a;
}
template <class T>
constexpr Dual<T>& operator+=(Dual<T>& a, double b) {
  a.v += b;
  return a;
}
template <class T>
constexpr Dual<T>& operator-=(Dual<T>& a, double b) {
  a.v -= b;
  return a;
}
template <class T>
constexpr Dual<T>& operator*=(Dual<T>& a, double b) {
  a.v *= b;
  for (auto& e : a.d) e *= b;
  return a;
}
template <class T>
constexpr Dual<T>& operator*=(Dual<T>& a, const Dual<T>& b) {
  for (int i = 0; i < kMaxDim; ++i) a.d[i] = a.v * b.d[i] + a.d[i] * b.v;
  a.v *= b.v;
  return a;
}
template <class T>
constexpr Dual<T>& operator/=(Dual<T>& a, double b) {
  return a *= (1.0 / b);
}

template <class T>
constexpr Dual<T> operator+(Dual<T> a, const Dual<T>& b) {
  return a += b;
}
template <class T>
constexpr Dual<T> operator-(Dual<T> a, const Dual<T>& b) {
  return a -= b;
}
template <class T>
constexpr Dual<T> operator+(Dual<T> a, double b) {
  return a += b;
}
template <class T>
constexpr Dual<T> operator+(double a, Dual<T> b) {
  return b += a;
}
template <class T>
constexpr Dual<T> operator-(Dual<T> a, double b) {
  return a -= b;
}
template <class T>
constexpr Dual<T> operator-(double a, const Dual<T>& b) {
  Dual<T> r = -b;
  r.v += a;
  return r;
}
template <class T>
constexpr Dual<T> operator*(Dual<T> a, const Dual<T>& b) {
  return a *= b;
}
template <class T>
constexpr Dual<T> operator*(Dual<T> a, double b) {
  return a *= b;
}
template <class T>
constexpr Dual<T> operator*(double a, Dual<T> b) {
  return b *= a;
}

template <class T>
Dual<T> reciprocal(const Dual<T>& a) {
  const T inv = 1.0 / a.v;
  const T dinv = -(inv * inv);
  Dual<T> r;
  r.v = inv;
  for (int i = 0; i < kMaxDim; ++i) r.d[i] = dinv * a.d[i];
  return r;
}

template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  return a * reciprocal(b);
}
template <class T>
Dual<T> operator/(Dual<T> a, double b) {
  return a *= (1.0 / b);
}
template <class T>
Dual<T> operator/(double a, const Dual<T>& b) {
  return a * reciprocal(b);
}
template <class T>
Dual<T>& operator/=(Dual<T>& a, const Dual<T>& b) {
  a = a / b;
  return a;
}

// Comparisons act on the primal part only.
template <class T>
bool operator<(const Dual<T>& a, double b) {
  return primal(a) < b;
}
template <class T>
bool operator>(const Dual<T>& a, double b) {
  return primal(a) > b;
}

// --- elementary functions ---------------------------------------------------

namespace detail {
template <class T>
Dual<T> chain(const Dual<T>& x, const T& f, const T& df) {
  Dual<T> r;
  r.v = f;
  for (int i = 0; i < kMaxDim; ++i) r.d[i] = df * x.d[i];
  return r;
}
}  // namespace detail

template <class T>
Dual<T> sin(const Dual<T>& x) {
  using std::cos;
  using std::sin;
  return detail::chain(x, T(sin(x.v)), T(cos(x.v)));
}
template <class T>
Dual<T> cos(const Dual<T>& x) {
  using std::cos;
  using std::sin;
  return detail::chain(x, T(cos(x.v)), T(-sin(x.v)));
}
template <class T>
Dual<T> tan(const Dual<T>& x) {
  using std::cos;
  using std::tan;
  const T c = cos(x.v);
  return detail::chain(x, T(tan(x.v)), T(1.0 / (c * c)));
}
template <class T>
Dual<T> exp(const Dual<T>& x) {
  using std::exp;
  const T e = exp(x.v);
  return detail::chain(x, e, e);
}
template <class T>
Dual<T> log(const Dual<T>& x) {
  using std::log;
  return detail::chain(x, T(log(x.v)), T(1.0 / x.v));
}
template <class T>
Dual<T> sqrt(const Dual<T>& x) {
  using std::sqrt;
  const T s = sqrt(x.v);
  return detail::chain(x, s, T(0.5 / s));
}
template <class T>
Dual<T> sinh(const Dual<T>& x) {
  using std::cosh;
  using std::sinh;
  return detail::chain(x, T(sinh(x.v)), T(cosh(x.v)));
}
template <class T>
Dual<T> cosh(const Dual<T>& x) {
  using std::cosh;
  using std::sinh;
  return detail::chain(x, T(cosh(x.v)), T(sinh(x.v)));
}
template <class T>
Dual<T> tanh(const Dual<T>& x) {
  using std::tanh;
  const T t = tanh(x.v);
  return detail::chain(x, t, T(1.0 - t * t));
}
template <class T>
Dual<T> atan(const Dual<T>& x) {
  using std::atan;
  return detail::chain(x, T(atan(x.v)), T(1.0 / (1.0 + x.v * x.v)));
}
template <class T>
Dual<T> pow(const Dual<T>& x, double p) {
  using std::pow;
  return detail::chain(x, T(pow(x.v, p)), T(p * pow(x.v, p - 1.0)));
}
template <class T>
Dual<T> pow(const Dual<T>& x, const Dual<T>& p) {
  return exp(p * log(x));
}

/// x^n by repeated squaring; exact for negative bases, unlike exp(n log x).
template <class T>
T ipow(T x, int n) {
  if (n < 0) return 1.0 / ipow(x, -n);
  T r(1.0);
  while (n > 0) {
    if (n & 1) r = r * x;
    x = x * x;
    n >>= 1;
  }
  return r;
}

}  // namespace cflow
