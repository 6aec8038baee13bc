#pragma once

#include <functional>
#include <string>
#include <vector>

#include "saca/tensor.hpp"

namespace saca {

struct GradCheckRecord {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradCheckSummary {
  std::vector<GradCheckRecord> records;
  bool all_pass() const;
  double worst() const;
};

// Runs f once under a tape, then compares every accumulated input gradient
// against central differences with the given step. Relative error is
// |analytic - numeric| / max(1, |analytic|, |numeric|). f must return a
// scalar and depend on nothing mutable besides the given inputs.
GradCheckRecord check_gradients(const std::string& name,
                                const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                std::vector<Tensor> inputs, double tolerance,
                                double step = 1e-6);

// module: one of gradcheck_modules() or "all".
GradCheckSummary run_gradcheck(const std::string& module, int seeds = 5);

const std::vector<std::string>& gradcheck_modules();

}  // namespace saca
