#pragma once

#include <optional>

#include "bcsync/model.hpp"

namespace bcsync {

/// Synchronous HK: everyone communicates, alpha_i = 1/(|N_i|+1), noise
/// uniform on [-delta, delta].
ModelConfig hk_preset(std::size_t n, double epsilon, double delta);

/// Pairwise DW: exactly two agents communicate, constant mixing weight beta.
/// beta = 1 (the identity update) is only accepted with allow_degenerate.
ModelConfig dw_preset(std::size_t n, double epsilon, double beta, double delta, bool allow_degenerate = false);

/// The general model with uniform noise on [-delta, delta]. alpha defaults
/// to the largest floor the inertia policy admits.
ModelConfig general_preset(std::size_t n, double epsilon, double delta, CommunicationRule size_probs,
                           InertiaPolicy inertia, std::optional<double> alpha = std::nullopt);

/// Copy of `config` with its noise law replaced.
ModelConfig with_noise(ModelConfig config, NoiseModel noise);

}  // namespace bcsync
