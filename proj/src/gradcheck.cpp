#include "clippo/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace clippo::nn {

namespace {

double evaluate(const Program& f, const std::vector<Tensor<double>>& params) {
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p, true));
  return f(tape, leaves).value().item();
}

}  // namespace

std::vector<Tensor<double>> reverse_gradients(const Program& f, const std::vector<Tensor<double>>& params) {
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p, true));
  tape.backward(f(tape, leaves));
  std::vector<Tensor<double>> grads;
  grads.reserve(leaves.size());
  for (auto v : leaves) grads.push_back(tape.grad(v));
  return grads;
}

std::vector<Tensor<double>> central_differences(const Program& f, const std::vector<Tensor<double>>& params,
                                                double eps) {
  std::vector<Tensor<double>> work = params;
  std::vector<Tensor<double>> grads;
  grads.reserve(params.size());
  for (std::size_t p = 0; p < work.size(); ++p) {
    Tensor<double> g(work[p].shape());
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const double orig = work[p][i];
      work[p][i] = orig + eps;
      const double up = evaluate(f, work);
      work[p][i] = orig - eps;
      const double down = evaluate(f, work);
      work[p][i] = orig;
      g[i] = (up - down) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

GradCheckReport check_gradients(const Program& f, const std::vector<Tensor<double>>& params, double eps) {
  const auto rev = reverse_gradients(f, params);
  const auto fd = central_differences(f, params, eps);
  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < rev[p].size(); ++i) {
      diff += (rev[p][i] - fd[p][i]) * (rev[p][i] - fd[p][i]);
      na += rev[p][i] * rev[p][i];
      nb += fd[p][i] * fd[p][i];
    }
    const double rel = std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), 1e-6);
    report.per_param.push_back(rel);
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = p;
    }
  }
  return report;
}

}  // namespace clippo::nn
