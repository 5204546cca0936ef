#pragma once

// Constructive noise protocols and conditioned samplers. A protocol picks,
// for every agent, a noise value of magnitude in [a, delta] whose sign is
// fixed by where the agent sits in the current opinion range; every such
// assignment has positive probability under a law with
// P{xi in [a, delta]} >= p_bar and P{xi in [-delta, -a]} >= p_bar.

#include <optional>
#include <vector>

#include "bcsync/metrics.hpp"
#include "bcsync/model.hpp"

namespace bcsync {

struct ProtocolParams {
  double a = 0.0;
  double delta = 0.0;
  double p_bar = 0.0;
  /// Emit +-delta instead of +-a.
  bool emit_delta = false;

  double magnitude() const noexcept { return emit_delta ? delta : a; }
  void validate() const;

  /// Derives p_bar from the noise law. `a` defaults to default_protocol_atom.
  static ProtocolParams from_noise(const NoiseModel& noise, std::optional<double> a = std::nullopt);
};

/// Pushes the range apart: agents at or below the midpoint min + d_V/2 get
/// -magnitude, agents above it get +magnitude.
std::vector<double> divergence_noise(const OpinionState& state, const ProtocolParams& params);

/// Pulls the range together, judged on the pre-noise targets: targets at or
/// below the midpoint of the current range get +magnitude, the rest
/// -magnitude.
std::vector<double> contraction_noise(const OpinionState& state, const AgentSet& comm_set,
                                      std::span<const double> inertia, double epsilon, const ProtocolParams& params);

/// Size weights of the communicating set conditioned on containing the
/// extremal agents: p_k k(k-1) (distinct extremes) or p_k k (consensus),
/// normalized.
std::vector<double> forced_A_size_law(const CommunicationRule& rule, bool distinct_extremes);

/// Draws U(t) from the uniform-subset law conditioned on containing both
/// extremal agents, by exact conditional sampling.
AgentSet forced_A_sampler(RngStream& rng, const CommunicationRule& rule, const OpinionState& state, std::size_t n);

/// Symmetric two-point law at +-epsilon/(2p^2) with weight 1/2 per atom, so
/// each tail carries mass >= p. Requires 0 < p <= 1/2 and epsilon <= 2p^2.
NoiseModel large_noise_model(double epsilon, double p);

}  // namespace bcsync
