#include "clippo/analysis.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "clippo/errors.hpp"

namespace clippo {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix to_matrix(const nn::Tensor<double>& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + " must be a matrix, got " + nn::shape_str(t.shape()));
  Matrix m(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
  std::copy(t.data().begin(), t.data().end(), m.data());
  return m;
}

nn::Tensor<double> to_tensor(const Matrix& m) {
  nn::Tensor<double> t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  std::copy(m.data(), m.data() + m.size(), t.data().begin());
  return t;
}

Matrix centered(const Matrix& m) { return m.rowwise() - m.colwise().mean(); }

// Eigenpairs of a symmetric matrix, eigenvalues descending, each vector signed
// so its largest-magnitude entry is positive.
void sorted_eigen(const Eigen::MatrixXd& sym, Eigen::VectorXd& values, Eigen::MatrixXd& vectors) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw ContractError("eigendecomposition failed");
  const Eigen::Index n = sym.rows();
  values.resize(n);
  vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    values(i) = std::max(0.0, solver.eigenvalues()(n - 1 - i));
    Eigen::VectorXd v = solver.eigenvectors().col(n - 1 - i);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < n; ++j) {
      if (std::abs(v(j)) > std::abs(v(arg)) + 1e-12) arg = j;
    }
    if (v(arg) < 0) v = -v;
    vectors.col(i) = v;
  }
}

}  // namespace

double modality_gap(const nn::Tensor<double>& image_embs, const nn::Tensor<double>& text_embs) {
  const Matrix a = to_matrix(image_embs, "image embeddings");
  const Matrix b = to_matrix(text_embs, "text embeddings");
  if (a.rows() == 0 || b.rows() == 0) throw ContractError("modality gap of an empty set");
  if (a.cols() != b.cols()) throw ShapeError("modality gap between widths " + std::to_string(a.cols()) + " and " +
                                             std::to_string(b.cols()));
  return (a.colwise().mean() - b.colwise().mean()).norm();
}

nn::Tensor<double> stack_rows(const nn::Tensor<double>& a, const nn::Tensor<double>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError("cannot stack " + nn::shape_str(a.shape()) + " and " + nn::shape_str(b.shape()));
  }
  nn::Tensor<double> out({a.dim(0) + b.dim(0), a.dim(1)});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

PcaResult pca_project(const nn::Tensor<double>& data, std::size_t components) {
  const Matrix x = to_matrix(data, "PCA input");
  const auto n = static_cast<std::size_t>(x.rows());
  if (components == 0) throw ContractError("PCA needs at least one component");
  if (n <= components) {
    throw ContractError("PCA with " + std::to_string(components) + " components needs more than " +
                        std::to_string(components) + " rows");
  }
  const Matrix xc = centered(x);
  const Eigen::MatrixXd cov = (xc.transpose() * xc) / static_cast<double>(n);
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  sorted_eigen(cov, values, vectors);

  PcaResult r;
  r.total_variance = cov.trace();
  const double tol = 1e-12 * std::max(1.0, values.size() > 0 ? values(0) : 0.0);
  std::size_t k = std::min<std::size_t>(components, static_cast<std::size_t>(values.size()));
  std::size_t available = 0;
  while (available < k && values(static_cast<Eigen::Index>(available)) > tol) ++available;
  if (available < components) {
    r.warnings.push_back("data has rank " + std::to_string(available) + ", returning " + std::to_string(available) +
                         " of " + std::to_string(components) + " components");
  }
  k = available;
  const Eigen::MatrixXd w = vectors.leftCols(static_cast<Eigen::Index>(k));
  r.components = to_tensor(Matrix(w.transpose()));
  r.projections = to_tensor(Matrix(xc * w));
  for (std::size_t i = 0; i < k; ++i) {
    const double v = values(static_cast<Eigen::Index>(i));
    r.variances.push_back(v);
    r.explained_ratio.push_back(r.total_variance > 0 ? v / r.total_variance : 0.0);
  }
  return r;
}

std::vector<double> paired_distances(const nn::Tensor<double>& a, const nn::Tensor<double>& b) {
  const Matrix x = to_matrix(a, "image embeddings");
  const Matrix y = to_matrix(b, "text embeddings");
  if (x.rows() != y.rows()) {
    throw ContractError("paired distances over " + std::to_string(x.rows()) + " and " + std::to_string(y.rows()) +
                        " rows");
  }
  if (x.cols() != y.cols()) throw ShapeError("paired distances between different widths");
  std::vector<double> d(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) d[static_cast<std::size_t>(i)] = (x.row(i) - y.row(i)).norm();
  return d;
}

Histogram pairwise_distance_hist(const nn::Tensor<double>& image_embs, const nn::Tensor<double>& text_embs,
                                 std::size_t bins) {
  if (bins == 0) throw ContractError("histogram needs at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(2.0 * static_cast<double>(i) / static_cast<double>(bins));
  for (double d : paired_distances(image_embs, text_embs)) {
    auto bin = static_cast<std::size_t>(std::floor(d / 2.0 * static_cast<double>(bins)));
    h.counts[std::min(bin, bins - 1)] += 1;
  }
  return h;
}

CkaResult linear_cka(const nn::Tensor<double>& x, const nn::Tensor<double>& y) {
  const Matrix a = centered(to_matrix(x, "CKA input"));
  const Matrix b = centered(to_matrix(y, "CKA input"));
  if (a.rows() != b.rows()) throw ContractError("CKA over different example counts");
  if (a.rows() < 2) throw ContractError("CKA needs at least two examples");
  const double cross = (b.transpose() * a).squaredNorm();
  const double xx = (a.transpose() * a).norm();
  const double yy = (b.transpose() * b).norm();
  if (xx == 0.0 || yy == 0.0) return {0.0, true};
  return {cross / (xx * yy), false};
}

PatchPcaResult patch_kernel_pca(const nn::Tensor<double>& kernel, int patch_px, int channels, std::size_t components) {
  const std::size_t patch_dim = static_cast<std::size_t>(patch_px * patch_px * channels);
  if (kernel.rank() != 2 || kernel.dim(0) != patch_dim) {
    throw ShapeError("patch kernel " + nn::shape_str(kernel.shape()) + " does not have " + std::to_string(patch_dim) +
                     " rows");
  }
  // Each column of the kernel is one observation.
  const Matrix cols = to_matrix(kernel, "patch kernel").transpose();
  const Matrix xc = centered(cols);
  const Eigen::MatrixXd cov = (xc.transpose() * xc) / static_cast<double>(std::max<Eigen::Index>(xc.rows(), 1));
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  sorted_eigen(cov, values, vectors);

  PatchPcaResult r;
  for (Eigen::Index i = 0; i < values.size(); ++i) r.spectrum.push_back(values(i));
  const double tol = 1e-12 * std::max(1.0, values.size() > 0 ? values(0) : 0.0);
  std::size_t rank = 0;
  while (rank < r.spectrum.size() && r.spectrum[rank] > tol) ++rank;
  std::size_t k = components;
  if (k > rank) {
    r.warnings.push_back("kernel has rank " + std::to_string(rank) + ", truncating " + std::to_string(components) +
                         " components");
    k = rank;
  }
  for (std::size_t c = 0; c < k; ++c) {
    const Eigen::VectorXd v = vectors.col(static_cast<Eigen::Index>(c));
    const double scale = v.cwiseAbs().maxCoeff();
    RenderedImage img(patch_px, patch_px, channels);
    for (std::size_t j = 0; j < patch_dim; ++j) {
      img.pixels[j] = scale > 0 ? static_cast<float>(v(static_cast<Eigen::Index>(j)) / scale) : 0.0f;
    }
    r.component_images.push_back(std::move(img));
  }
  return r;
}

RenderedImage tile_images(const std::vector<RenderedImage>& images, int per_row) {
  if (images.empty()) return RenderedImage(1, 1, 1, -1.0f);
  per_row = std::max(1, per_row);
  const int h = images[0].height;
  const int w = images[0].width;
  const int c = images[0].channels;
  const int n = static_cast<int>(images.size());
  const int cols = std::min(per_row, n);
  const int rows = (n + per_row - 1) / per_row;
  RenderedImage out(rows * (h + 1) - 1, cols * (w + 1) - 1, c, -1.0f);
  for (int i = 0; i < n; ++i) {
    const int oy = (i / per_row) * (h + 1);
    const int ox = (i % per_row) * (w + 1);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int ch = 0; ch < c; ++ch) out.at(oy + y, ox + x, ch) = images[static_cast<std::size_t>(i)].at(y, x, ch);
      }
    }
  }
  return out;
}

}  // namespace clippo
