#pragma once

// Single-step bounded-confidence dynamics with a random communicating set.
//
//   x_i(t+1) = clamp(a_i x_i + (1 - a_i) mean_{j in N_i} x_j + xi_i)   i in U, N_i nonempty
//   x_i(t+1) = clamp(x_i + xi_i)                                       otherwise
//
// with N_i = { j in U \ {i} : |x_j - x_i| <= epsilon }.

#include <optional>
#include <span>
#include <vector>

#include "bcsync/opinion.hpp"
#include "bcsync/rules.hpp"

namespace bcsync {

enum class PresetName { hk, dw, general };

std::string to_string(PresetName preset);

struct ModelConfig {
  PresetName preset = PresetName::general;
  std::size_t n = 2;
  double epsilon = 0.1;
  /// Inertia floor: every used alpha_i(t) lies in [alpha, 1 - alpha].
  double alpha = 0.5;
  InertiaPolicy inertia = InertiaPolicy::hk_rule();
  NoiseModel noise = NoiseModel::none();
  CommunicationRule comm = CommunicationRule::fixed(2, 2);
  std::optional<double> beta;
  /// Admits alpha_i = 1 (the identity DW update with beta = 1).
  bool allow_unit_inertia = false;

  /// Throws ModelError naming the first violated constraint.
  void validate() const;
};

struct StepInputs {
  AgentSet comm_set;
  std::vector<double> inertia;
  std::vector<double> noise;
};

/// Checks StepInputs against the config: dimensions, comm-set universe,
/// inertia range for the agents that use it, |noise| <= delta.
void validate_inputs(const OpinionState& state, const StepInputs& inputs, const ModelConfig& config);

double clamp_unit(double y);

AgentSet neighbor_set(AgentIndex i, const OpinionState& state, const AgentSet& comm_set, double epsilon);

/// Count, sum and range of the neighbor opinions of every communicating
/// agent; zero count for everyone else.
struct NeighborSummary {
  std::size_t count = 0;
  double sum = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

std::vector<NeighborSummary> neighbor_summaries(const OpinionState& state, const AgentSet& comm_set, double epsilon);

double pre_noise_target(AgentIndex i, const OpinionState& state, const AgentSet& comm_set, double inertia_i,
                        double epsilon);

/// Pre-noise targets of all agents at once.
std::vector<double> pre_noise_targets(const OpinionState& state, const AgentSet& comm_set,
                                      std::span<const double> inertia, double epsilon);

OpinionState step(const OpinionState& state, const StepInputs& inputs, const ModelConfig& config);

}  // namespace bcsync
