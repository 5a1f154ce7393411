#pragma once

// Space-time points and derivative jets.
//
// A jet holds the value of a scalar function and its partial derivatives up to
// third order with respect to the space-time labels sigma^0..sigma^n. Jets are
// the currency between fields, flows and pointwise operator laws.

#include <array>
#include <cmath>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cflow/dual.hpp"
#include "cflow/errors.hpp"

namespace cflow {

/// Space-time label (sigma^0 = time, sigma^1..sigma^n), n in {1, 2, 3}.
class Point {
 public:
  Point() = default;
  Point(std::initializer_list<double> c) : Point(std::span<const double>(c.begin(), c.size())) {}
  explicit Point(std::span<const double> c) {
    if (c.size() < 2 || c.size() > static_cast<std::size_t>(kMaxDim))
      throw std::invalid_argument("Point: expected 2..4 coordinates, got " + std::to_string(c.size()));
    size_ = static_cast<int>(c.size());
    for (int i = 0; i < size_; ++i) {
      if (!std::isfinite(c[i])) throw NonFiniteError("Point: non-finite coordinate");
      c_[i] = c[i];
    }
  }

  int size() const { return size_; }
  double operator[](int i) const { return c_[i]; }
  std::span<const double> coords() const { return {c_.data(), static_cast<std::size_t>(size_)}; }

  Point with(int axis, double value) const {
    Point p = *this;
    p.c_[axis] = value;
    return p;
  }

 private:
  std::array<double, kMaxDim> c_{};
  int size_ = 0;
};

template <class T>
using Vec = std::array<T, kMaxDim>;
template <class T>
using Mat = std::array<Vec<T>, kMaxDim>;
template <class T>
using Tensor3 = std::array<Mat<T>, kMaxDim>;

template <class T>
struct BasicJet {
  int order = 0;
  T v{};
  Vec<T> g{};
  Mat<T> h{};
  Tensor3<T> t{};
};

using Jet = BasicJet<double>;

/// Jets of the components x^0..x^{dim-1} of a space-time map.
template <class T>
struct BasicMapJet {
  int dim = 0;
  std::array<BasicJet<T>, kMaxDim> c{};

  /// d x^mu / d sigma^nu
  const T& d1(int mu, int nu) const { return c[mu].g[nu]; }
  /// d^2 x^mu / d sigma^nu d sigma^la
  const T& d2(int mu, int nu, int la) const { return c[mu].h[nu][la]; }
};

using MapJet = BasicMapJet<double>;

// --- jet algebra ------------------------------------------------------------

template <class T>
BasicJet<T> axpy(double a, const BasicJet<T>& x, BasicJet<T> y) {
  y.order = std::min(x.order, y.order);
  y.v += a * x.v;
  for (int i = 0; i < kMaxDim; ++i) {
    y.g[i] += a * x.g[i];
    for (int j = 0; j < kMaxDim; ++j) {
      y.h[i][j] += a * x.h[i][j];
      for (int k = 0; k < kMaxDim; ++k) y.t[i][j][k] += a * x.t[i][j][k];
    }
  }
  return y;
}

inline Jet scaled(double a, const Jet& x) {
  Jet z;
  z.order = x.order;
  return axpy(a, x, z);
}

/// Jet of d f / d sigma^i, one order lower.
inline Jet shifted(const Jet& j, int i) {
  Jet r;
  r.order = j.order - 1;
  r.v = j.g[i];
  for (int k = 0; k < kMaxDim; ++k) {
    r.g[k] = j.h[i][k];
    for (int l = 0; l < kMaxDim; ++l) r.h[k][l] = j.t[i][k][l];
  }
  return r;
}

/// Identity jet of the coordinate sigma^axis at p.
inline Jet coordinate_jet(const Point& p, int axis, int order) {
  Jet j;
  j.order = order;
  j.v = p[axis];
  j.g[axis] = 1.0;
  return j;
}

/// Taylor data of a jet re-expressed as a nested dual seeded on every coordinate.
template <class T>
T to_dual(const Jet& j) {
  if constexpr (std::is_same_v<T, double>) {
    return j.v;
  } else {
    using Inner = decltype(T{}.v);
    T r;
    r.v = to_dual<Inner>(j);
    for (int i = 0; i < kMaxDim; ++i) r.d[i] = to_dual<Inner>(shifted(j, i));
    return r;
  }
}

/// Inverse of to_dual: read value and derivatives off a seeded nested dual.
template <class T>
Jet to_jet(const T& x) {
  if constexpr (std::is_same_v<T, double>) {
    Jet j;
    j.v = x;
    return j;
  } else {
    Jet base = to_jet(x.v);
    Jet r;
    r.order = dual_depth_v<T>;
    r.v = base.v;
    for (int i = 0; i < kMaxDim; ++i) {
      const Jet di = to_jet(x.d[i]);
      r.g[i] = di.v;
      for (int k = 0; k < kMaxDim; ++k) {
        r.h[i][k] = di.g[k];
        for (int l = 0; l < kMaxDim; ++l) r.t[i][k][l] = di.h[k][l];
      }
    }
    return r;
  }
}

/// base + eps * dir with eps carried in slot 0 of a first-order dual.
inline BasicJet<D1> directional_jet(const Jet& base, const Jet& dir) {
  BasicJet<D1> r;
  r.order = std::min(base.order, dir.order);
  auto mk = [](double a, double b) {
    D1 x(a);
    x.d[0] = b;
    return x;
  };
  r.v = mk(base.v, dir.v);
  for (int i = 0; i < kMaxDim; ++i) {
    r.g[i] = mk(base.g[i], dir.g[i]);
    for (int j = 0; j < kMaxDim; ++j) {
      r.h[i][j] = mk(base.h[i][j], dir.h[i][j]);
      for (int k = 0; k < kMaxDim; ++k) r.t[i][j][k] = mk(base.t[i][j][k], dir.t[i][j][k]);
    }
  }
  return r;
}

inline BasicMapJet<D1> directional_jet(const MapJet& base, const MapJet& dir) {
  BasicMapJet<D1> r;
  r.dim = base.dim;
  for (int mu = 0; mu < base.dim; ++mu) r.c[mu] = directional_jet(base.c[mu], dir.c[mu]);
  return r;
}

template <class T>
BasicJet<T> promote(const Jet& j) {
  BasicJet<T> r;
  r.order = j.order;
  r.v = T(j.v);
  for (int i = 0; i < kMaxDim; ++i) {
    r.g[i] = T(j.g[i]);
    for (int k = 0; k < kMaxDim; ++k) {
      r.h[i][k] = T(j.h[i][k]);
      for (int l = 0; l < kMaxDim; ++l) r.t[i][k][l] = T(j.t[i][k][l]);
    }
  }
  return r;
}

template <class T>
BasicMapJet<T> promote(const MapJet& m) {
  BasicMapJet<T> r;
  r.dim = m.dim;
  for (int mu = 0; mu < m.dim; ++mu) r.c[mu] = promote<T>(m.c[mu]);
  return r;
}

inline bool jet_finite(const Jet& j) {
  if (!std::isfinite(j.v)) return false;
  for (int i = 0; i < kMaxDim; ++i) {
    if (!std::isfinite(j.g[i])) return false;
    for (int k = 0; k < kMaxDim; ++k) {
      if (j.order >= 2 && !std::isfinite(j.h[i][k])) return false;
      for (int l = 0; l < kMaxDim; ++l)
        if (j.order >= 3 && !std::isfinite(j.t[i][k][l])) return false;
    }
  }
  return true;
}

// --- evaluating templated functors into jets ---------------------------------

/// Jet of a scalar functor f(span<const T>) -> T at p, exact to `order` (0..3).
template <class F>
Jet functor_jet(const F& f, const Point& p, int order) {
  const int d = p.size();
  auto run = [&]<class T>() {
    std::array<T, kMaxDim> s{};
    for (int i = 0; i < d; ++i) s[i] = seed<T>(p[i], i);
    Jet j = to_jet<T>(f(std::span<const T>(s.data(), d)));
    j.order = order;
    return j;
  };
  switch (order) {
    case 0: return run.template operator()<double>();
    case 1: return run.template operator()<D1>();
    case 2: return run.template operator()<D2>();
    case 3: return run.template operator()<D3>();
    default: throw std::invalid_argument("functor_jet: order must be 0..3");
  }
}

/// Jet of a vector functor f(span<const T> sigma, span<T> out) with `comps` outputs.
template <class F>
MapJet functor_map_jet(const F& f, int comps, const Point& p, int order) {
  const int d = p.size();
  auto run = [&]<class T>() {
    std::array<T, kMaxDim> s{};
    std::array<T, kMaxDim> out{};
    for (int i = 0; i < d; ++i) s[i] = seed<T>(p[i], i);
    f(std::span<const T>(s.data(), d), std::span<T>(out.data(), comps));
    MapJet m;
    m.dim = comps;
    for (int mu = 0; mu < comps; ++mu) {
      m.c[mu] = to_jet<T>(out[mu]);
      m.c[mu].order = order;
    }
    return m;
  };
  switch (order) {
    case 0: return run.template operator()<double>();
    case 1: return run.template operator()<D1>();
    case 2: return run.template operator()<D2>();
    case 3: return run.template operator()<D3>();
    default: throw std::invalid_argument("functor_map_jet: order must be 0..3");
  }
}

}  // namespace cflow
