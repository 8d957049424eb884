#pragma once

#include <cmath>
#include <string_view>
#include <vector>

#include "clippo/params.hpp"

namespace clippo::nn {

// Scales grads in place so their joint L2 norm is at most max_norm. Returns
// the norm before clipping.
template <typename T>
double clip_global_norm(std::vector<Tensor<T>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (T v : g.data()) sq += static_cast<double>(v) * static_cast<double>(v);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& g : grads) {
      for (T& v : g.data()) v *= factor;
    }
  }
  return norm;
}

inline bool is_position_param(std::string_view name) {
  return name == "pos" || (name.size() >= 4 && name.substr(name.size() - 4) == "/pos");
}

// Adam with decoupled weight decay. Decay applies to tensors of rank >= 2 and
// is scaled by lr / peak_lr, so it follows the schedule.
template <typename T>
class AdamW {
 public:
  struct Config {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double peak_lr = 1e-3;
  };

  AdamW(const ParamSet<T>& params, Config cfg) : cfg_(cfg) {
    for (const auto& v : params.values()) {
      m_.emplace_back(v.shape());
      v_.emplace_back(v.shape());
    }
  }

  // lr_mult holds one multiplier per parameter (empty means all 1).
  void step(ParamSet<T>& params, const std::vector<Tensor<T>>& grads, double lr,
            const std::vector<double>& lr_mult = {}) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double decay = cfg_.peak_lr > 0.0 ? cfg_.weight_decay * lr / cfg_.peak_lr : 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params.values()[i].data();
      auto g = grads[i].data();
      auto m = m_[i].data();
      auto v = v_[i].data();
      const double rate = lr * (lr_mult.empty() ? 1.0 : lr_mult[i]);
      const bool decays = params.values()[i].rank() >= 2;
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = cfg_.beta1 * static_cast<double>(m[j]) + (1.0 - cfg_.beta1) * gj;
        const double vj = cfg_.beta2 * static_cast<double>(v[j]) + (1.0 - cfg_.beta2) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        double update = rate * (mj / bc1) / (std::sqrt(vj / bc2) + cfg_.eps);
        if (decays) update += decay * static_cast<double>(p[j]);
        p[j] = static_cast<T>(static_cast<double>(p[j]) - update);
      }
    }
  }

  long long steps() const noexcept { return t_; }
  std::vector<Tensor<T>>& first_moments() noexcept { return m_; }
  std::vector<Tensor<T>>& second_moments() noexcept { return v_; }
  void set_steps(long long t) noexcept { t_ = t; }

 private:
  Config cfg_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  long long t_ = 0;
};

// SGD with heavy-ball momentum.
template <typename T>
class MomentumSgd {
 public:
  MomentumSgd(const ParamSet<T>& params, double momentum) : momentum_(momentum) {
    for (const auto& v : params.values()) buf_.emplace_back(v.shape());
  }

  void step(ParamSet<T>& params, const std::vector<Tensor<T>>& grads, double lr,
            const std::vector<double>& lr_mult = {}) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params.values()[i].data();
      auto g = grads[i].data();
      auto b = buf_[i].data();
      const double rate = lr * (lr_mult.empty() ? 1.0 : lr_mult[i]);
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double bj = momentum_ * static_cast<double>(b[j]) + static_cast<double>(g[j]);
        b[j] = static_cast<T>(bj);
        p[j] = static_cast<T>(static_cast<double>(p[j]) - rate * bj);
      }
    }
  }

 private:
  double momentum_;
  std::vector<Tensor<T>> buf_;
};

}  // namespace clippo::nn
