#include "lightllm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace lightllm {

double check_gradients(const std::function<Tensor()>& f, std::span<Tensor> params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("check_gradients: eps must be positive");
  for (Tensor& p : params) {
    if (!p.is_leaf()) throw std::invalid_argument("check_gradients: parameters must be leaves");
    p.set_requires_grad(true);
    p.clear_grad();
  }

  const Tensor loss = f();
  if (f().item() != loss.item())
    throw ContractError("check_gradients: function is not deterministic");
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor& p : params) {
    if (p.has_grad())
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    else
      analytic.emplace_back(p.size(), 0.0);
    p.clear_grad();
  }

  double worst = 0.0;
  {
    NoGradGuard no_grad;
    for (std::size_t t = 0; t < params.size(); ++t) {
      auto values = params[t].mutable_values();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double original = values[i];
        values[i] = original + eps;
        const double up = f().item();
        values[i] = original - eps;
        const double down = f().item();
        values[i] = original;
        const double numeric = (up - down) / (2.0 * eps);
        const double err = std::abs(analytic[t][i] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

}  // namespace lightllm
