#pragma once

// Random ingredients of one step: the communicating set, the bounded
// zero-mean noise and the inertia coefficients, each drawn from its own
// seedable stream.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bcsync/opinion.hpp"

namespace bcsync {

enum class StreamPurpose : std::uint32_t {
  comm = 1,
  noise = 2,
  inertia = 3,
  init = 4,
  protocol = 5,
  aux = 6,
};

/// A reproducible random stream keyed by (seed, replica, purpose).
///
/// Streams with distinct keys are seeded through std::seed_seq, whose
/// mixing is fixed by the standard, so sequences are identical across
/// platforms and standard libraries. Conversions to doubles and bounded
/// integers are done here rather than through <random> distributions,
/// whose algorithms are implementation-defined.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t replica, StreamPurpose purpose);

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Uniform integer on [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::mt19937_64 engine_;
};

/// Law of the size of the communicating set, p_0..p_n.
class CommunicationRule {
 public:
  /// Validates sum(p) = 1 within 1e-12, each p_k in [0,1] and p_0 + p_1 < 1.
  explicit CommunicationRule(std::vector<double> size_probs);

  /// Skips every invariant check. Only the sampler mechanics rely on it.
  static CommunicationRule unchecked(std::vector<double> size_probs);
  static CommunicationRule uniform(std::size_t n);
  static CommunicationRule fixed(std::size_t n, std::size_t k);

  std::size_t n() const noexcept { return probs_.size() - 1; }
  double p(std::size_t k) const { return probs_.at(k); }
  std::span<const double> size_probs() const noexcept { return probs_; }
  /// P{i in U(t)} for any single agent.
  double participation() const;

  bool operator==(const CommunicationRule&) const = default;

 private:
  struct Unchecked {};
  CommunicationRule(std::vector<double> size_probs, Unchecked) : probs_(std::move(size_probs)) {}

  std::vector<double> probs_;
};

enum class NoiseKind { none, uniform, two_point, custom_discrete };

std::string to_string(NoiseKind kind);

/// Zero-mean, amplitude-bounded per-agent noise law.
class NoiseModel {
 public:
  /// Degenerate noise-free model (delta = 0). Not a valid model for the
  /// synchronization theorems; used for deterministic comparisons.
  static NoiseModel none();
  /// Uniform on [-delta, delta].
  static NoiseModel uniform(double delta);
  /// +delta or -delta, each with probability 1/2.
  static NoiseModel two_point(double delta);
  /// Finite law with the given atoms; delta is the largest atom magnitude.
  static NoiseModel discrete(std::vector<double> atoms, std::vector<double> weights);

  NoiseKind kind() const noexcept { return kind_; }
  double delta() const noexcept { return delta_; }
  std::span<const double> atoms() const noexcept { return atoms_; }
  std::span<const double> weights() const noexcept { return weights_; }

  double mean() const;
  double variance() const;
  /// min(P{a <= xi <= delta}, P{-delta <= xi <= -a}).
  double mass_at_least(double a) const;

  double draw(RngStream& rng) const;

  bool operator==(const NoiseModel&) const = default;

 private:
  NoiseKind kind_ = NoiseKind::none;
  double delta_ = 0.0;
  std::vector<double> atoms_;
  std::vector<double> weights_;
};

enum class InertiaKind { hk_rule, constant, uniform_interval };

std::string to_string(InertiaKind kind);

/// How the inertia coefficients alpha_i(t) are produced.
struct InertiaPolicy {
  InertiaKind kind = InertiaKind::hk_rule;
  double value = 0.0;  // constant
  double lo = 0.0;     // uniform_interval
  double hi = 1.0;

  static InertiaPolicy hk_rule() { return {}; }
  static InertiaPolicy constant(double v) { return {InertiaKind::constant, v, v, v}; }
  /// Uniform on [alpha, 1 - alpha].
  static InertiaPolicy uniform_interval(double alpha) { return {InertiaKind::uniform_interval, 0.0, alpha, 1.0 - alpha}; }

  bool operator==(const InertiaPolicy&) const = default;
};

/// Draws k from the size law (inverse CDF), then a uniform k-subset by
/// partial Fisher-Yates.
AgentSet sample_comm_set(RngStream& rng, const CommunicationRule& rule, std::size_t n);

/// Inverse-CDF draw of an index from non-negative weights summing to ~1.
std::size_t sample_index(RngStream& rng, std::span<const double> weights);

/// Uniform k-subset of `pool`, merged into `out`.
void sample_subset_into(RngStream& rng, std::vector<AgentIndex> pool, std::size_t k, AgentSet& out);

std::vector<double> sample_noise(RngStream& rng, const NoiseModel& model, std::size_t n);
void fill_noise(RngStream& rng, const NoiseModel& model, std::span<double> out);

/// Per-agent inertia coefficients. hk_rule gives 1/(|N_i|+1), which is 1 for
/// agents outside the communicating set or without neighbors; those agents
/// never use their coefficient.
std::vector<double> inertia_coefficients(RngStream& rng, const InertiaPolicy& policy, const OpinionState& state,
                                         const AgentSet& comm_set, double epsilon);

}  // namespace bcsync
