#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "graphaug/nn.hpp"
#include "graphaug/tensor.hpp"

namespace graphaug {

/// Compares reverse-mode gradients against central finite differences for a
/// scalar-valued function of the given parameters. Returns the maximum
/// relative error over all coordinates.
///
/// The forward closure must rebuild the computation from the parameters'
/// current values on every call.
inline double grad_check(const std::function<Tensor()>& f, const ParameterSet& params,
                         double step = 1e-5) {
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tape::Scope scope(tape);
        params.zero_grad();
        Tensor loss = f();
        tape.backward(loss);
        for (const auto& [name, tensor] : params.entries()) {
            analytic.emplace_back(tensor.grad().begin(), tensor.grad().end());
        }
    }

    double max_rel_error = 0.0;
    std::size_t param_index = 0;
    for (const auto& [name, tensor] : params.entries()) {
        auto values = tensor.mutable_values();
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            double original = values[i];
            values[i] = original + step;
            double plus = f().item();
            values[i] = original - step;
            double minus = f().item();
            values[i] = original;
            double numeric = (plus - minus) / (2.0 * step);
            double a = analytic[param_index][i];
            double rel = std::abs(a - numeric) /
                         std::max({1e-6, std::abs(a), std::abs(numeric)});
            max_rel_error = std::max(max_rel_error, rel);
        }
        ++param_index;
    }
    return max_rel_error;
}

}  // namespace graphaug
