#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "clippo/rng.hpp"
#include "clippo/tensor.hpp"

namespace oracle {

using clippo::Rng;
namespace nn = clippo::nn;

using Mat = std::vector<std::vector<double>>;

inline nn::Tensor<double> random_matrix(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0) {
  nn::Tensor<double> t({n, d});
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

inline Mat covariance(const nn::Tensor<double>& x) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += x.at(i, j) / static_cast<double>(n);
  }
  Mat c(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) c[a][b] += (x.at(i, a) - mean[a]) * (x.at(i, b) - mean[b]) / static_cast<double>(n);
    }
  }
  return c;
}

// Cyclic Jacobi rotations; returns eigenvalues descending with vectors as columns.
inline void jacobi(Mat a, std::vector<double>& values, Mat& vectors) {
  const std::size_t n = a.size();
  vectors.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) vectors[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vectors[k][p], vkq = vectors[k][q];
          vectors[k][p] = c * vkp - s * vkq;
          vectors[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  Mat sorted(n, std::vector<double>(n));
  values.clear();
  for (std::size_t i = 0; i < n; ++i) {
    values.push_back(a[order[i]][order[i]]);
    for (std::size_t k = 0; k < n; ++k) sorted[k][i] = vectors[k][order[i]];
  }
  vectors = sorted;
}

// Gram-matrix form: HSIC(K, L) / sqrt(HSIC(K, K) HSIC(L, L)).
inline double cka_oracle(const nn::Tensor<double>& x, const nn::Tensor<double>& y) {
  const std::size_t n = x.dim(0);
  const auto gram = [&](const nn::Tensor<double>& m) {
    Mat g(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < m.dim(1); ++k) g[i][j] += m.at(i, k) * m.at(j, k);
      }
    }
    std::vector<double> row(n, 0.0);
    double all = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) row[i] += g[i][j] / static_cast<double>(n);
      all += row[i] / static_cast<double>(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) g[i][j] += all - row[i] - row[j];
    }
    return g;
  };
  const auto k = gram(x), l = gram(y);
  double kl = 0, kk = 0, ll = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      kl += k[i][j] * l[i][j];
      kk += k[i][j] * k[i][j];
      ll += l[i][j] * l[i][j];
    }
  }
  return kl / std::sqrt(kk * ll);
}

inline nn::Tensor<double> random_rotation(std::size_t d, Rng& rng) {
  auto q = random_matrix(d, d, rng);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < d; ++k) dot += q.at(i, k) * q.at(j, k);
      for (std::size_t k = 0; k < d; ++k) q.at(i, k) -= dot * q.at(j, k);
    }
    double norm = 0;
    for (std::size_t k = 0; k < d; ++k) norm += q.at(i, k) * q.at(i, k);
    for (std::size_t k = 0; k < d; ++k) q.at(i, k) /= std::sqrt(norm);
  }
  return q;
}

inline nn::Tensor<double> times(const nn::Tensor<double>& a, const nn::Tensor<double>& b) {
  nn::Tensor<double> c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      for (std::size_t k = 0; k < a.dim(1); ++k) c.at(i, j) += a.at(i, k) * b.at(k, j);
    }
  }
  return c;
}


}  // namespace oracle
