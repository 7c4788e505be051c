#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mcdd {

/// A named view over one trainable tensor's storage. The name is used in
/// error messages when a gradient goes non-finite.
struct TensorRef {
    std::string path;
    std::span<double> values;
};

struct ConstTensorRef {
    std::string path;
    std::span<const double> values;
};

/// Adam optimizer state over an ordered list of tensors. Moments are laid
/// out per tensor and must always be used with the same parameter list.
struct AdamState {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;

    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

AdamState make_adam_state(double learning_rate);

/// One Adam update with bias correction. Moments are lazily sized on the
/// first call; afterwards shapes must match exactly.
///
/// Throws NumericError (with the tensor path) on non-finite gradients and
/// std::invalid_argument on shape mismatches.
void adam_step(std::span<const TensorRef> params,
               std::span<const ConstTensorRef> grads,
               AdamState& state);

} // namespace mcdd
