// SPDX-License-Identifier: Apache-2.0
#include "cepo/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cepo::ad {

namespace {

double evaluate(const ScalarFn& f, const std::vector<std::vector<double>>* frozen) {
    Tape tape(Tape::Mode::Inference);
    if (frozen && !frozen->empty()) tape.install_frozen_stop_gradients(*frozen);
    const double v = f(tape).item();
    if (!std::isfinite(v)) throw std::domain_error("grad_check: function value is not finite");
    return v;
}

} // namespace

GradCheckReport grad_check_report(const ScalarFn& f, std::vector<Tensor> params, double step,
                                  StopGradientOracle oracle) {
    if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

    for (auto& p : params) p.zero_grad();
    Tape tape;
    tape.enable_stop_gradient_log(true);
    Tensor root = f(tape);
    if (!std::isfinite(root.item())) throw std::domain_error("grad_check: function value is not finite");
    tape.backward(root);
    const auto frozen = tape.take_stop_gradient_log();
    const auto* replay = oracle == StopGradientOracle::Freeze ? &frozen : nullptr;

    GradCheckReport report;
    for (auto& p : params) {
        auto vals = p.mutable_values();
        auto g = p.grad();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            auto at = [&](double offset) {
                vals[i] = orig + offset;
                return evaluate(f, replay);
            };
            const double f1 = at(step) - at(-step);
            const double f2 = at(2.0 * step) - at(-2.0 * step);
            vals[i] = orig;
            const double numeric = (8.0 * f1 - f2) / (12.0 * step);
            const double analytic = g.empty() ? 0.0 : g[i];
            const double err = std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
            report.max_relative_error = std::max(report.max_relative_error, err);
            report.analytic.push_back(analytic);
            report.numeric.push_back(numeric);
            ++report.checked;
        }
    }
    return report;
}

double grad_check(const ScalarFn& f, std::vector<Tensor> params, double step, StopGradientOracle oracle) {
    return grad_check_report(f, std::move(params), step, oracle).max_relative_error;
}

} // namespace cepo::ad
