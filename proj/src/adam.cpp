#include "mcdd/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "mcdd/errors.hpp"

namespace mcdd {

AdamState make_adam_state(double learning_rate) {
    AdamState state;
    state.learning_rate = learning_rate;
    return state;
}

void adam_step(std::span<const TensorRef> params,
               std::span<const ConstTensorRef> grads,
               AdamState& state) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient group count mismatch");
    }
    if (state.first_moment.empty()) {
        state.first_moment.resize(params.size());
        state.second_moment.resize(params.size());
        for (std::size_t g = 0; g < params.size(); ++g) {
            state.first_moment[g].assign(params[g].values.size(), 0.0);
            state.second_moment[g].assign(params[g].values.size(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw std::invalid_argument("adam_step: state was initialized for a different parameter list");
    }
    for (std::size_t g = 0; g < params.size(); ++g) {
        if (params[g].values.size() != grads[g].values.size() ||
            params[g].values.size() != state.first_moment[g].size()) {
            throw std::invalid_argument("adam_step: shape mismatch in group '" + params[g].path + "'");
        }
        for (double v : grads[g].values) {
            if (!std::isfinite(v)) {
                throw NumericError("adam_step: non-finite gradient in '" + grads[g].path + "'");
            }
        }
    }

    state.step += 1;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

    for (std::size_t g = 0; g < params.size(); ++g) {
        std::span<double> p = params[g].values;
        std::span<const double> gr = grads[g].values;
        std::vector<double>& m = state.first_moment[g];
        std::vector<double>& v = state.second_moment[g];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * gr[i];
            v[i] = b2 * v[i] + (1.0 - b2) * gr[i] * gr[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

} // namespace mcdd
