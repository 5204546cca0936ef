#include "bcsync/presets.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bcsync {

namespace {

void check_common(std::size_t n, double epsilon, double delta) {
  if (n < 2) throw ModelError("n must be >= 2, got " + std::to_string(n));
  if (!std::isfinite(epsilon) || epsilon <= 0.0 || epsilon > 1.0) {
    throw ModelError("epsilon must lie in (0,1], got " + std::to_string(epsilon));
  }
  if (!std::isfinite(delta) || delta <= 0.0) throw ModelError("delta must be > 0, got " + std::to_string(delta));
}

double default_alpha(std::size_t n, const InertiaPolicy& inertia) {
  const double floor_n = 1.0 / static_cast<double>(n);
  switch (inertia.kind) {
    case InertiaKind::hk_rule: return floor_n;
    case InertiaKind::constant:
      return inertia.value >= 1.0 ? floor_n : std::min({floor_n, inertia.value, 1.0 - inertia.value});
    case InertiaKind::uniform_interval: return std::min({floor_n, inertia.lo, 1.0 - inertia.hi});
  }
  return floor_n;
}

}  // namespace

ModelConfig hk_preset(std::size_t n, double epsilon, double delta) {
  check_common(n, epsilon, delta);
  ModelConfig c;
  c.preset = PresetName::hk;
  c.n = n;
  c.epsilon = epsilon;
  c.alpha = 1.0 / static_cast<double>(n);
  c.inertia = InertiaPolicy::hk_rule();
  c.noise = NoiseModel::uniform(delta);
  c.comm = CommunicationRule::fixed(n, n);
  c.validate();
  return c;
}

ModelConfig dw_preset(std::size_t n, double epsilon, double beta, double delta, bool allow_degenerate) {
  check_common(n, epsilon, delta);
  const bool unit = allow_degenerate && beta == 1.0;
  if (!unit && !(beta > 0.0 && beta < 1.0)) {
    throw ModelError("DW beta must lie in (0,1), got " + std::to_string(beta) +
                     "; beta = 1 needs the degenerate flag because alpha_i <= 1 - alpha is then unsatisfiable");
  }
  ModelConfig c;
  c.preset = PresetName::dw;
  c.n = n;
  c.epsilon = epsilon;
  c.inertia = InertiaPolicy::constant(beta);
  c.alpha = default_alpha(n, c.inertia);
  c.noise = NoiseModel::uniform(delta);
  c.comm = CommunicationRule::fixed(n, 2);
  c.beta = beta;
  c.allow_unit_inertia = unit;
  c.validate();
  return c;
}

ModelConfig general_preset(std::size_t n, double epsilon, double delta, CommunicationRule size_probs,
                           InertiaPolicy inertia, std::optional<double> alpha) {
  check_common(n, epsilon, delta);
  ModelConfig c;
  c.preset = PresetName::general;
  c.n = n;
  c.epsilon = epsilon;
  c.inertia = inertia;
  c.alpha = alpha.value_or(default_alpha(n, inertia));
  c.noise = NoiseModel::uniform(delta);
  c.comm = std::move(size_probs);
  c.validate();
  return c;
}

ModelConfig with_noise(ModelConfig config, NoiseModel noise) {
  config.noise = std::move(noise);
  config.validate();
  return config;
}

}  // namespace bcsync
