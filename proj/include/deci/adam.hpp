#pragma once

#include <cstdint>
#include <vector>

#include "deci/tensor.hpp"

namespace deci::num {

// Bias-corrected Adam over a fixed list of parameter tensors.
struct AdamState {
  double step_size = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor> m;  // first moments
  std::vector<Tensor> v;  // second moments

  void init(const std::vector<Tensor*>& params) {
    m.clear();
    v.clear();
    for (const Tensor* p : params) {
      m.push_back(Tensor::zeros(p->shape));
      v.push_back(Tensor::zeros(p->shape));
    }
    step = 0;
  }

  void update(const std::vector<Tensor*>& params,
              const std::vector<Tensor>& grads);
};

}  // namespace deci::num
