#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "disms/checkpoint.hpp"
#include "disms/error.hpp"

namespace disms {

// Adam with bias-corrected first/second moments. State is keyed by parameter
// name so it survives checkpoint reloads of the same model layout.
class Adam {
 public:
  Adam(double lr = 5e-3, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr <= 0.0) throw ConfigError("Adam: learning rate must be positive");
  }

  double learning_rate() const { return lr_; }

  void step(ParamStore& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, p] : params) {
      Moments& st = state_[name];
      if (st.m.empty()) {
        st.m.assign(p.size(), 0.0);
        st.v.assign(p.size(), 0.0);
      } else if (st.m.size() != p.size()) {
        throw StateError("Adam state shape mismatch for " + name);
      }
      const auto& g = p.grad();
      auto& w = p.values();
      for (std::size_t i = 0; i < w.size(); ++i) {
        st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g[i];
        st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g[i] * g[i];
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  struct Moments {
    std::vector<double> m, v;
  };

  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace disms
