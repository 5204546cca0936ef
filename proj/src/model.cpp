#include "bcsync/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bcsync {

std::string to_string(PresetName preset) {
  switch (preset) {
    case PresetName::hk: return "hk";
    case PresetName::dw: return "dw";
    case PresetName::general: return "general";
  }
  return "unknown";
}

namespace {

bool inertia_admissible(double a, const ModelConfig& config) {
  if (config.allow_unit_inertia && a == 1.0) return true;
  return a >= config.alpha && a <= 1.0 - config.alpha;
}

}  // namespace

void ModelConfig::validate() const {
  if (n < 2) throw ModelError("n must be >= 2, got " + std::to_string(n));
  if (!std::isfinite(epsilon) || epsilon <= 0.0 || epsilon > 1.0) {
    throw ModelError("epsilon must lie in (0,1], got " + std::to_string(epsilon));
  }
  if (!std::isfinite(alpha) || alpha <= 0.0 || alpha > 1.0 / static_cast<double>(n)) {
    throw ModelError("alpha must lie in (0, 1/n], got " + std::to_string(alpha));
  }
  if (comm.n() != n) {
    throw ModelError("size_probs has " + std::to_string(comm.size_probs().size()) + " entries, expected n+1 = " +
                     std::to_string(n + 1));
  }
  // Re-runs the rule's own invariant checks in case it was built unchecked.
  (void)CommunicationRule(std::vector<double>(comm.size_probs().begin(), comm.size_probs().end()));

  switch (inertia.kind) {
    case InertiaKind::hk_rule:
      break;
    case InertiaKind::constant:
      if (!inertia_admissible(inertia.value, *this)) {
        throw ModelError("constant inertia " + std::to_string(inertia.value) + " outside [alpha, 1-alpha] = [" +
                         std::to_string(alpha) + ", " + std::to_string(1.0 - alpha) + "]");
      }
      break;
    case InertiaKind::uniform_interval:
      if (inertia.lo > inertia.hi || inertia.lo < alpha || inertia.hi > 1.0 - alpha) {
        throw ModelError("uniform inertia interval must lie inside [alpha, 1-alpha]");
      }
      break;
  }
  if (beta) {
    const double b = *beta;
    const bool ok = (b > 0.0 && b < 1.0) || (allow_unit_inertia && b == 1.0);
    if (!ok) throw ModelError("beta must lie in (0,1), got " + std::to_string(b));
  }
}

void validate_inputs(const OpinionState& state, const StepInputs& inputs, const ModelConfig& config) {
  const std::size_t n = config.n;
  if (state.size() != n || inputs.comm_set.universe() != n || inputs.inertia.size() != n || inputs.noise.size() != n) {
    throw ModelError("step dimension mismatch: expected n = " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(std::abs(inputs.noise[i]) <= config.noise.delta())) {
      throw ModelError("noise of agent " + std::to_string(i) + " exceeds delta = " + std::to_string(config.noise.delta()));
    }
  }
  const auto summaries = neighbor_summaries(state, inputs.comm_set, config.epsilon);
  for (std::size_t i = 0; i < n; ++i) {
    if (summaries[i].count > 0 && !inertia_admissible(inputs.inertia[i], config)) {
      throw ModelError("inertia of agent " + std::to_string(i) + " outside [alpha, 1-alpha]");
    }
  }
}

double clamp_unit(double y) {
  if (!std::isfinite(y)) throw ModelError("clamp_unit requires a finite value");
  if (y < 0.0) return 0.0;
  if (y > 1.0) return 1.0;
  return y;
}

AgentSet neighbor_set(AgentIndex i, const OpinionState& state, const AgentSet& comm_set, double epsilon) {
  if (!comm_set.contains(i)) {
    throw ModelError("neighbor set is only defined for communicating agents; agent " + std::to_string(i) +
                     " is not in U(t)");
  }
  AgentSet out(comm_set.universe());
  for (AgentIndex j : comm_set.members()) {
    if (j != i && std::abs(state[j] - state[i]) <= epsilon) out.insert(j);
  }
  return out;
}

std::vector<NeighborSummary> neighbor_summaries(const OpinionState& state, const AgentSet& comm_set, double epsilon) {
  std::vector<NeighborSummary> out(state.size());
  const auto members = comm_set.members();
  for (AgentIndex i : members) {
    NeighborSummary& s = out[i];
    const double xi = state[i];
    for (AgentIndex j : members) {
      if (j == i) continue;
      const double xj = state[j];
      if (std::abs(xj - xi) > epsilon) continue;
      if (s.count == 0) {
        s.lo = s.hi = xj;
      } else {
        s.lo = std::min(s.lo, xj);
        s.hi = std::max(s.hi, xj);
      }
      s.sum += xj;
      ++s.count;
    }
  }
  return out;
}

namespace {

double target_from_summary(double xi, const NeighborSummary& s, double inertia_i) {
  if (s.count == 0) return xi;
  // Rounding may push the mean or the mix a hair outside the convex hull;
  // pin both back so the target never leaves [min x, max x].
  const double mean = std::clamp(s.sum / static_cast<double>(s.count), s.lo, s.hi);
  const double mixed = inertia_i * xi + (1.0 - inertia_i) * mean;
  return std::clamp(mixed, std::min(xi, mean), std::max(xi, mean));
}

}  // namespace

double pre_noise_target(AgentIndex i, const OpinionState& state, const AgentSet& comm_set, double inertia_i,
                        double epsilon) {
  if (i >= state.size()) throw ModelError("agent index out of range");
  if (!comm_set.contains(i)) return state[i];
  NeighborSummary s;
  for (AgentIndex j : comm_set.members()) {
    if (j == i || std::abs(state[j] - state[i]) > epsilon) continue;
    s.lo = s.count == 0 ? state[j] : std::min(s.lo, state[j]);
    s.hi = s.count == 0 ? state[j] : std::max(s.hi, state[j]);
    s.sum += state[j];
    ++s.count;
  }
  return target_from_summary(state[i], s, inertia_i);
}

std::vector<double> pre_noise_targets(const OpinionState& state, const AgentSet& comm_set,
                                      std::span<const double> inertia, double epsilon) {
  if (inertia.size() != state.size()) throw ModelError("inertia vector length differs from n");
  const auto summaries = neighbor_summaries(state, comm_set, epsilon);
  std::vector<double> out(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) out[i] = target_from_summary(state[i], summaries[i], inertia[i]);
  return out;
}

OpinionState step(const OpinionState& state, const StepInputs& inputs, const ModelConfig& config) {
  const std::size_t n = config.n;
  if (state.size() != n || inputs.comm_set.universe() != n || inputs.inertia.size() != n || inputs.noise.size() != n) {
    throw ModelError("step dimension mismatch: expected n = " + std::to_string(n));
  }
  const auto summaries = neighbor_summaries(state, inputs.comm_set, config.epsilon);
  std::vector<double> next(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi_noise = inputs.noise[i];
    if (!(std::abs(xi_noise) <= config.noise.delta())) {
      throw ModelError("noise of agent " + std::to_string(i) + " exceeds delta = " + std::to_string(config.noise.delta()));
    }
    if (summaries[i].count > 0 && !inertia_admissible(inputs.inertia[i], config)) {
      throw ModelError("inertia of agent " + std::to_string(i) + " outside [alpha, 1-alpha]");
    }
    next[i] = clamp_unit(target_from_summary(state[i], summaries[i], inputs.inertia[i]) + xi_noise);
  }
  return OpinionState(std::move(next), state.time() + 1);
}

}  // namespace bcsync
