#pragma once

// Dense kernels on matrices of size d <= 4, templated on the scalar type so the
// same code differentiates through dual numbers.

#include <algorithm>
#include <array>
#include <numeric>
#include <vector>

#include "cflow/jet.hpp"

namespace cflow {

struct Permutation {
  std::array<int, kMaxDim> p{};
  int sign = 1;
};

/// All permutations of 0..d-1 with their parity.
inline const std::vector<Permutation>& permutations(int d) {
  static const auto table = [] {
    std::array<std::vector<Permutation>, kMaxDim + 1> all;
    for (int n = 1; n <= kMaxDim; ++n) {
      std::array<int, kMaxDim> a{};
      std::iota(a.begin(), a.begin() + n, 0);
      do {
        int inversions = 0;
        for (int i = 0; i < n; ++i)
          for (int j = i + 1; j < n; ++j)
            if (a[i] > a[j]) ++inversions;
        all[n].push_back({a, inversions % 2 == 0 ? 1 : -1});
      } while (std::next_permutation(a.begin(), a.begin() + n));
    }
    return all;
  }();
  return table[d];
}

template <class T>
Mat<T> identity_matrix(int d) {
  Mat<T> m{};
  for (int i = 0; i < d; ++i) m[i][i] = T(1.0);
  return m;
}

template <class T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b, int d) {
  Mat<T> c{};
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      T s(0.0);
      for (int k = 0; k < d; ++k) s += a[i][k] * b[k][j];
      c[i][j] = s;
    }
  return c;
}

/// Leibniz determinant.
template <class T>
T determinant_leibniz(const Mat<T>& m, int d) {
  T s(0.0);
  for (const auto& perm : permutations(d)) {
    T term(static_cast<double>(perm.sign));
    for (int i = 0; i < d; ++i) term = term * m[i][perm.p[i]];
    s += term;
  }
  return s;
}

/// Adjugate via signed minors: adj[l][r] = (-1)^{l+r} det(m without row r, column l).
template <class T>
Mat<T> adjugate_minors(const Mat<T>& m, int d) {
  Mat<T> adj{};
  if (d == 1) {
    adj[0][0] = T(1.0);
    return adj;
  }
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) {
      Mat<T> minor{};
      for (int i = 0, mi = 0; i < d; ++i) {
        if (i == r) continue;
        for (int j = 0, mj = 0; j < d; ++j) {
          if (j == c) continue;
          minor[mi][mj++] = m[i][j];
        }
        ++mi;
      }
      T v = determinant_leibniz(minor, d - 1);
      adj[c][r] = ((r + c) % 2 == 0) ? v : -v;
    }
  return adj;
}

/// Transposed algebraic complement by the permutation-symbol contraction
///   C^l_r = 1/(d-1)! eps^{l n a ...} eps_{r m k ...} J^m_n J^k_a ...
/// Row index l is a label (sigma) index, column r a Cartesian (x) index.
template <class T>
Mat<T> cofactor_levi_civita(const Mat<T>& jac, int d) {
  Mat<T> c{};
  double fact = 1.0;
  for (int k = 2; k < d; ++k) fact *= k;
  const auto& perms = permutations(d);
  for (const auto& up : perms)
    for (const auto& lo : perms) {
      T term(static_cast<double>(up.sign * lo.sign) / fact);
      for (int k = 1; k < d; ++k) term = term * jac[lo.p[k]][up.p[k]];
      c[up.p[0]][lo.p[0]] += term;
    }
  return c;
}

/// Cofactor using the closed permutation-symbol forms for n = 1 and n = 3
/// (d = 2, 4) and the minor expansion for n = 2.
template <class T>
Mat<T> cofactor(const Mat<T>& jac, int d) {
  if (d == 2 || d == 4) return cofactor_levi_civita(jac, d);
  return adjugate_minors(jac, d);
}

/// J = 1/d J^m_n C^n_m.
template <class T>
T determinant_contraction(const Mat<T>& jac, const Mat<T>& cof, int d) {
  T s(0.0);
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) s += jac[m][n] * cof[n][m];
  return s * (1.0 / d);
}

/// Inverse of a symmetric or general small matrix via adjugate / determinant.
template <class T>
Mat<T> inverse_small(const Mat<T>& m, int d) {
  Mat<T> adj = adjugate_minors(m, d);
  T det = determinant_leibniz(m, d);
  if (std::abs(primal(det)) < kDegenerateJacobian) throw DegenerateFlowError("singular matrix in inverse");
  T inv = 1.0 / det;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) adj[i][j] = adj[i][j] * inv;
  return adj;
}

}  // namespace cflow
