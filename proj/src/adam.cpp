#include "deci/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace deci::num {

void AdamState::update(const std::vector<Tensor*>& params,
                       const std::vector<Tensor>& grads) {
  if (params.size() != m.size() || grads.size() != params.size())
    throw std::invalid_argument("adam: parameter/gradient list mismatch");
  ++step;
  double bc1 = 1.0 - std::pow(beta1, (double)step);
  double bc2 = 1.0 - std::pow(beta2, (double)step);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& theta = *params[p];
    const Tensor& g = grads[p];
    if (!theta.same_shape(g))
      throw std::invalid_argument("adam: gradient shape mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[p].data[i] = beta1 * m[p].data[i] + (1.0 - beta1) * g.data[i];
      v[p].data[i] =
          beta2 * v[p].data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
      double mh = m[p].data[i] / bc1;
      double vh = v[p].data[i] / bc2;
      theta.data[i] -= step_size * mh / (std::sqrt(vh) + eps);
    }
  }
}

}  // namespace deci::num
