#include "bcsync/rules.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bcsync/model.hpp"

namespace bcsync {

namespace {

std::seed_seq make_seed_seq(std::uint64_t seed, std::uint64_t replica, StreamPurpose purpose) {
  const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  return std::seed_seq{lo(seed), hi(seed), lo(replica), hi(replica), static_cast<std::uint32_t>(purpose)};
}

constexpr double kProbTolerance = 1e-12;

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t replica, StreamPurpose purpose) {
  auto seq = make_seed_seq(seed, replica, purpose);
  engine_.seed(seq);
}

std::uint64_t RngStream::below(std::uint64_t bound) {
  if (bound == 0) throw ModelError("RngStream::below requires a positive bound");
  // Reject the low (2^64 mod bound) values so every residue is equally likely.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = engine_();
    if (r >= threshold) return r % bound;
  }
}

// ---------------------------------------------------------------------------
// CommunicationRule

CommunicationRule::CommunicationRule(std::vector<double> size_probs) : probs_(std::move(size_probs)) {
  if (probs_.size() < 3) {
    throw ModelError("size_probs needs n+1 >= 3 entries (n >= 2), got " + std::to_string(probs_.size()));
  }
  double total = 0.0;
  for (std::size_t k = 0; k < probs_.size(); ++k) {
    const double p = probs_[k];
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw ModelError("size_probs[" + std::to_string(k) + "] must lie in [0,1], got " + std::to_string(p));
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kProbTolerance) {
    throw ModelError("size_probs must sum to 1, got " + std::to_string(total));
  }
  if (!(probs_[0] + probs_[1] < 1.0)) {
    throw ModelError("size_probs violates p_0 + p_1 < 1: communication must happen with positive probability");
  }
}

CommunicationRule CommunicationRule::unchecked(std::vector<double> size_probs) {
  return CommunicationRule(std::move(size_probs), Unchecked{});
}

CommunicationRule CommunicationRule::uniform(std::size_t n) {
  return CommunicationRule(std::vector<double>(n + 1, 1.0 / static_cast<double>(n + 1)));
}

CommunicationRule CommunicationRule::fixed(std::size_t n, std::size_t k) {
  if (k > n) throw ModelError("fixed size " + std::to_string(k) + " exceeds n = " + std::to_string(n));
  std::vector<double> p(n + 1, 0.0);
  p[k] = 1.0;
  return CommunicationRule(std::move(p));
}

double CommunicationRule::participation() const {
  double s = 0.0;
  for (std::size_t k = 0; k < probs_.size(); ++k) s += probs_[k] * static_cast<double>(k);
  return s / static_cast<double>(n());
}

// ---------------------------------------------------------------------------
// NoiseModel

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::uniform: return "uniform";
    case NoiseKind::two_point: return "two_point";
    case NoiseKind::custom_discrete: return "custom_discrete";
  }
  return "unknown";
}

NoiseModel NoiseModel::none() { return NoiseModel{}; }

NoiseModel NoiseModel::uniform(double delta) {
  if (!std::isfinite(delta) || delta <= 0.0) throw ModelError("noise delta must be > 0, got " + std::to_string(delta));
  NoiseModel m;
  m.kind_ = NoiseKind::uniform;
  m.delta_ = delta;
  return m;
}

NoiseModel NoiseModel::two_point(double delta) {
  if (!std::isfinite(delta) || delta <= 0.0) throw ModelError("noise delta must be > 0, got " + std::to_string(delta));
  NoiseModel m;
  m.kind_ = NoiseKind::two_point;
  m.delta_ = delta;
  m.atoms_ = {-delta, delta};
  m.weights_ = {0.5, 0.5};
  return m;
}

NoiseModel NoiseModel::discrete(std::vector<double> atoms, std::vector<double> weights) {
  if (atoms.empty() || atoms.size() != weights.size()) {
    throw ModelError("discrete noise needs matching, non-empty atoms and weights");
  }
  double total = 0.0;
  double delta = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (!std::isfinite(atoms[i])) throw ModelError("discrete noise atoms must be finite");
    if (!std::isfinite(weights[i]) || weights[i] < 0.0) throw ModelError("discrete noise weights must be >= 0");
    total += weights[i];
    delta = std::max(delta, std::abs(atoms[i]));
  }
  if (std::abs(total - 1.0) > kProbTolerance) {
    throw ModelError("discrete noise weights must sum to 1, got " + std::to_string(total));
  }
  NoiseModel m;
  m.kind_ = NoiseKind::custom_discrete;
  m.delta_ = delta;
  m.atoms_ = std::move(atoms);
  m.weights_ = std::move(weights);
  if (std::abs(m.mean()) > kProbTolerance) throw ModelError("noise must be zero-mean, got mean " + std::to_string(m.mean()));
  if (!(m.variance() > 0.0)) throw ModelError("noise variance must be positive");
  return m;
}

double NoiseModel::mean() const {
  double s = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) s += atoms_[i] * weights_[i];
  return s;
}

double NoiseModel::variance() const {
  switch (kind_) {
    case NoiseKind::none: return 0.0;
    case NoiseKind::uniform: return delta_ * delta_ / 3.0;
    default: break;
  }
  const double mu = mean();
  double s = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) s += weights_[i] * (atoms_[i] - mu) * (atoms_[i] - mu);
  return s;
}

double NoiseModel::mass_at_least(double a) const {
  if (a <= 0.0 || a > delta_) return 0.0;
  if (kind_ == NoiseKind::uniform) return (delta_ - a) / (2.0 * delta_);
  double up = 0.0;
  double down = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    if (atoms_[i] >= a) up += weights_[i];
    if (atoms_[i] <= -a) down += weights_[i];
  }
  return std::min(up, down);
}

double NoiseModel::draw(RngStream& rng) const {
  switch (kind_) {
    case NoiseKind::none: return 0.0;
    case NoiseKind::uniform: return rng.uniform(-delta_, delta_);
    default: return atoms_[sample_index(rng, weights_)];
  }
}

std::string to_string(InertiaKind kind) {
  switch (kind) {
    case InertiaKind::hk_rule: return "hk_rule";
    case InertiaKind::constant: return "constant";
    case InertiaKind::uniform_interval: return "uniform_interval";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Samplers

std::size_t sample_index(RngStream& rng, std::span<const double> weights) {
  const double u = rng.uniform01();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = i;
    cum += weights[i];
    if (u < cum) return i;
  }
  // Only reachable when rounding leaves the cumulative sum just below u.
  return last_positive;
}

void sample_subset_into(RngStream& rng, std::vector<AgentIndex> pool, std::size_t k, AgentSet& out) {
  if (k > pool.size()) throw ModelError("cannot draw " + std::to_string(k) + " agents from a pool of " + std::to_string(pool.size()));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
    out.insert(pool[i]);
  }
}

AgentSet sample_comm_set(RngStream& rng, const CommunicationRule& rule, std::size_t n) {
  if (rule.n() != n) {
    throw ModelError("communication rule is for n = " + std::to_string(rule.n()) + ", asked for n = " + std::to_string(n));
  }
  const std::size_t k = sample_index(rng, rule.size_probs());
  std::vector<AgentIndex> pool(n);
  std::iota(pool.begin(), pool.end(), AgentIndex{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  return AgentSet(n, std::span<const AgentIndex>(pool.data(), k));
}

std::vector<double> sample_noise(RngStream& rng, const NoiseModel& model, std::size_t n) {
  std::vector<double> out(n);
  fill_noise(rng, model, out);
  return out;
}

void fill_noise(RngStream& rng, const NoiseModel& model, std::span<double> out) {
  for (double& v : out) v = model.draw(rng);
}

std::vector<double> inertia_coefficients(RngStream& rng, const InertiaPolicy& policy, const OpinionState& state,
                                         const AgentSet& comm_set, double epsilon) {
  const std::size_t n = state.size();
  std::vector<double> out(n);
  switch (policy.kind) {
    case InertiaKind::hk_rule: {
      const auto summaries = neighbor_summaries(state, comm_set, epsilon);
      for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / static_cast<double>(summaries[i].count + 1);
      break;
    }
    case InertiaKind::constant:
      std::fill(out.begin(), out.end(), policy.value);
      break;
    case InertiaKind::uniform_interval:
      for (double& v : out) v = rng.uniform(policy.lo, policy.hi);
      break;
  }
  return out;
}

}  // namespace bcsync
