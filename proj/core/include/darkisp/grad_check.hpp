#pragma once

#include <functional>
#include <string>
#include <vector>

#include <darkisp/tensor.hpp>

namespace darkisp {

struct GradCheckReport {
    std::vector<double> max_rel_err_per_input;
    double max_rel_err = 0.0;
    bool pass = false;
};

/// Compares the analytic gradient of a scalar reduction of `f` against
/// central finite differences. `f` receives a fresh Graph and the inputs and
/// may return a tensor of any shape; a fixed pseudo-random projection turns
/// it into a scalar so every Jacobian path is probed. Failures are report
/// content, never exceptions.
GradCheckReport grad_check(
    const std::function<Tensor(Graph&, const std::vector<Tensor>&)>& f,
    std::vector<Tensor> inputs, double epsilon = 1e-5,
    double tolerance = 1e-5);

}  // namespace darkisp
