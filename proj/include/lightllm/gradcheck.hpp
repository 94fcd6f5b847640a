#pragma once

#include <functional>
#include <span>

#include "lightllm/errors.hpp"
#include "lightllm/tensor.hpp"

namespace lightllm {

// Compares reverse-mode gradients of the scalar f() with respect to every
// entry of `params` against central differences with step eps. Returns
//   max |analytic - numeric| / max(1, |numeric|)
// over all entries. f must rebuild its graph from the current parameter
// values on each call. Parameter gradients are cleared on return.
double check_gradients(const std::function<Tensor()>& f, std::span<Tensor> params,
                       double eps = 1e-5);

}  // namespace lightllm
