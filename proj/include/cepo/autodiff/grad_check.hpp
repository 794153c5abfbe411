// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "cepo/autodiff/tensor.hpp"

namespace cepo::ad {

/// Builds a scalar from the given tape. Must construct the same sequence of
/// operations on every call.
using ScalarFn = std::function<Tensor(Tape&)>;

enum class StopGradientOracle {
    /// Hold every stop_gradient output at its unperturbed value while
    /// differencing, i.e. the derivative the tape is supposed to compute.
    Freeze,
    /// Difference the full function, stop_gradient included.
    PerturbFully,
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::vector<double> analytic;
    std::vector<double> numeric;
};

/// Max over all parameter entries of
///   |analytic - numeric| / (|analytic| + |numeric| + 1e-12)
/// where `numeric` is the fourth-order central difference
///   (8 [f(x+h) - f(x-h)] - [f(x+2h) - f(x-2h)]) / 12h.
/// Throws std::domain_error if f is not finite at any evaluation point.
GradCheckReport grad_check_report(const ScalarFn& f, std::vector<Tensor> params, double step,
                                  StopGradientOracle oracle = StopGradientOracle::Freeze);

double grad_check(const ScalarFn& f, std::vector<Tensor> params, double step,
                  StopGradientOracle oracle = StopGradientOracle::Freeze);

} // namespace cepo::ad
