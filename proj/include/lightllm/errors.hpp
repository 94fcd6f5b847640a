#pragma once

#include <stdexcept>

namespace lightllm {

// A caller broke a documented contract (e.g. a non-deterministic function was
// handed to check_gradients, or train/test splits overlap).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace lightllm
