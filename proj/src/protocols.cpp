#include "bcsync/protocols.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace bcsync {

void ProtocolParams::validate() const {
  if (!(a > 0.0 && a <= delta)) {
    throw ModelError("protocol needs 0 < a <= delta, got a = " + std::to_string(a) + ", delta = " + std::to_string(delta));
  }
  if (!(p_bar > 0.0 && p_bar < 1.0)) throw ModelError("protocol needs 0 < p_bar < 1, got " + std::to_string(p_bar));
}

ProtocolParams ProtocolParams::from_noise(const NoiseModel& noise, std::optional<double> a) {
  if (!a) a = default_protocol_atom(noise);
  if (!a) throw ModelError("noise-free model admits no noise protocol");
  ProtocolParams p;
  p.a = *a;
  p.delta = noise.delta();
  p.p_bar = noise.mass_at_least(*a);
  p.validate();
  return p;
}

std::vector<double> divergence_noise(const OpinionState& state, const ProtocolParams& params) {
  const auto values = state.values();
  const Extremes e = extremal_agents(values);
  const double lo = values[e.min_agent];
  const double mid = lo + (values[e.max_agent] - lo) / 2.0;
  const double m = params.magnitude();
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] <= mid ? -m : m;
  return out;
}

std::vector<double> contraction_noise(const OpinionState& state, const AgentSet& comm_set,
                                      std::span<const double> inertia, double epsilon, const ProtocolParams& params) {
  const auto values = state.values();
  const Extremes e = extremal_agents(values);
  const double lo = values[e.min_agent];
  const double mid = lo + (values[e.max_agent] - lo) / 2.0;
  const double m = params.magnitude();
  const auto targets = pre_noise_targets(state, comm_set, inertia, epsilon);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = targets[i] <= mid ? m : -m;
  return out;
}

std::vector<double> forced_A_size_law(const CommunicationRule& rule, bool distinct_extremes) {
  const std::size_t n = rule.n();
  std::vector<double> w(n + 1, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    w[k] = rule.p(k) * (distinct_extremes ? kk * (kk - 1.0) : kk);
    total += w[k];
  }
  if (!(total > 0.0)) throw ModelError("cannot condition on A(t): no communicating set can contain both extremes");
  for (double& v : w) v /= total;
  return w;
}

AgentSet forced_A_sampler(RngStream& rng, const CommunicationRule& rule, const OpinionState& state, std::size_t n) {
  if (rule.n() != n || state.size() != n) throw ModelError("forced_A_sampler dimension mismatch");
  const Extremes e = extremal_agents(state);
  const bool distinct = e.min_agent != e.max_agent;
  const auto law = forced_A_size_law(rule, distinct);
  const std::size_t k = sample_index(rng, law);

  AgentSet out(n);
  out.insert(e.min_agent);
  out.insert(e.max_agent);
  std::vector<AgentIndex> pool;
  pool.reserve(n);
  for (AgentIndex i = 0; i < n; ++i) {
    if (!out.contains(i)) pool.push_back(i);
  }
  sample_subset_into(rng, std::move(pool), k - out.size(), out);
  return out;
}

NoiseModel large_noise_model(double epsilon, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ModelError("large-noise p must lie in (0,1]");
  if (p > 0.5) {
    throw ModelError("large-noise p = " + std::to_string(p) +
                     " > 1/2: a zero-mean law cannot put mass >= p on both tails");
  }
  if (!(epsilon > 0.0 && epsilon <= 2.0 * p * p)) {
    throw ModelError("large-noise construction needs 0 < epsilon <= 2p^2, got epsilon = " + std::to_string(epsilon));
  }
  return NoiseModel::two_point(epsilon / (2.0 * p * p));
}

}  // namespace bcsync
