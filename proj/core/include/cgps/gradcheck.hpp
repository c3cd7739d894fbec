#pragma once

#include <functional>
#include <vector>

#include "cgps/tensor.hpp"

namespace cgps {

// Scalar-valued function of a list of leaf tensors, rebuilt on a fresh tape
// per evaluation.
using TensorFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

// Compares analytic gradients against central finite differences
// (f(x+h) - f(x-h)) / 2h at `point` and returns the max over all
// coordinates of |analytic - numeric| / (|analytic| + 1e-8).
double grad_check(const TensorFn& f, const std::vector<Shape>& shapes,
                  const std::vector<std::vector<double>>& point, double h = 1e-5);

struct GradSuiteResult {
    std::string name;
    double max_rel_error = 0.0;
    double threshold = 0.0;
    bool passed() const { return max_rel_error < threshold; }
};

// The standard verification battery: every layer at 1e-4, the full training
// loss (noise-free and with frozen noise) at 1e-3. `corrupt` adds a fixture
// whose analytic gradient is deliberately wrong; it must fail.
std::vector<GradSuiteResult> run_grad_suites(bool corrupt = false);

}  // namespace cgps
