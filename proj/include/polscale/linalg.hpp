#pragma once

#include <cmath>
#include <vector>

#include "polscale/common.hpp"

// Just enough dense linear algebra for 2-D reduction of desk-scale data.

namespace polscale::linalg {

using Matrix = std::vector<std::vector<double>>;  // row-major, rectangular

inline Matrix identity(size_t n) {
  Matrix m(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) m[i][i] = 1.0;
  return m;
}

struct EigenResult {
  std::vector<double> values;        // descending
  std::vector<std::vector<double>>
      vectors;                       // vectors[k] is the k-th eigenvector
};

// Cyclic Jacobi for symmetric matrices. Converges fast at our sizes; the
// rotation count is bounded hard so a NaN-poisoned input cannot spin.
inline EigenResult sym_eigen(const Matrix& a_in) {
  size_t n = a_in.size();
  for (const auto& row : a_in)
    if (row.size() != n) throw DataError("sym_eigen: matrix not square");
  Matrix a = a_in;
  Matrix v = identity(n);

  auto off_diag = [&] {
    double s = 0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j) s += a[i][j] * a[i][j];
    return s;
  };

  const double tol = 1e-30;
  for (int sweep = 0; sweep < 100 && off_diag() > tol; ++sweep) {
    for (size_t p = 0; p < n; ++p) {
      for (size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (size_t i = 0; i < n; ++i) {
          double aip = a[i][p], aiq = a[i][q];
          a[i][p] = c * aip - s * aiq;
          a[i][q] = s * aip + c * aiq;
        }
        for (size_t i = 0; i < n; ++i) {
          double api = a[p][i], aqi = a[q][i];
          a[p][i] = c * api - s * aqi;
          a[q][i] = s * api + c * aqi;
        }
        for (size_t i = 0; i < n; ++i) {
          double vip = v[i][p], viq = v[i][q];
          v[i][p] = c * vip - s * viq;
          v[i][q] = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t x, size_t y) { return a[x][x] > a[y][y]; });

  EigenResult r;
  r.values.reserve(n);
  r.vectors.reserve(n);
  for (size_t k : order) {
    r.values.push_back(a[k][k]);
    std::vector<double> vec(n);
    for (size_t i = 0; i < n; ++i) vec[i] = v[i][k];
    r.vectors.push_back(std::move(vec));
  }
  return r;
}

}  // namespace polscale::linalg
