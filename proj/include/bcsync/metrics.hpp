#pragma once

// Observables of the dynamics (diameter, extremal agents, the event that
// both extremes communicate), the constants of the mean-synchronization
// bound, and Monte Carlo estimators of E d_V(t).

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "bcsync/model.hpp"

namespace bcsync {

double diameter(std::span<const double> opinions);
inline double diameter(const OpinionState& state) { return diameter(state.values()); }

/// Lowest-index argmin and argmax. A consensus state gives min == max.
struct Extremes {
  AgentIndex min_agent = 0;
  AgentIndex max_agent = 0;
};

Extremes extremal_agents(std::span<const double> opinions);
inline Extremes extremal_agents(const OpinionState& state) { return extremal_agents(state.values()); }

/// True iff both extremal agents are communicating.
bool event_A_holds(const OpinionState& state, const AgentSet& comm_set);

/// P{A(t)} = sum_{k>=2} k(k-1)/(n(n-1)) p_k.
double prob_event_A(const CommunicationRule& rule, std::size_t n);

using DiameterSeries = std::vector<double>;

/// First t with series[t] <= threshold.
std::optional<std::size_t> stopping_time(std::span<const double> series, double threshold);

/// Raised when a theoretical constant cannot be computed within its limits.
class TheoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TheoryConstants {
  double mu = 1.0;
  double lambda = 1.0;
  std::uint64_t L0 = 1;       // n(n-1)/2
  double p_tilde = 1.0;       // 2(1 - p0 - p1)/(n(n-1))
  std::uint64_t L = 1;        // min{l : (1 - p_tilde^L0)^l <= mu eps / 2}
  double delta_bar = 0.0;     // min{alpha mu eps/(2n(n-1)^2), mu eps/(8(1 + L0 L))}
  double escape_p_tilde = 0;  // 2(1 - p_n)/n, lower bound of P{A(t)^C}
  // Noise-protocol quantities; absent for the noise-free model.
  std::optional<double> a;
  std::optional<double> p_bar;
  std::optional<std::uint64_t> t_L;  // ceil(1/a)
  // Hypotheses and conclusion of the L0-step contraction for region lambda.
  double lemma3_delta_max = 0.0;   // alpha lambda eps/(2n(n-1)^2)
  double lemma3_start_max = 0.0;   // lambda eps / 2
  double lemma3_contracted = 0.0;  // lambda eps/2 - alpha lambda eps/(2(n-1))
  double lemma2_delta_max = 0.0;   // lambda eps / 2
};

/// Hypotheses and conclusion of the L0-step contraction: starting from
/// d_V <= start_max with |xi| <= delta_max and both extremes communicating
/// for L0 consecutive steps, d_V(L0) <= contracted.
struct ContractionBounds {
  std::uint64_t L0 = 1;
  double delta_max = 0.0;   // alpha lambda eps/(2n(n-1)^2)
  double start_max = 0.0;   // lambda eps / 2
  double contracted = 0.0;  // lambda eps/2 - alpha lambda eps/(2(n-1))
};

ContractionBounds contraction_bounds(double lambda, const ModelConfig& config);

inline constexpr std::uint64_t kDefaultLSearchCap = 1'000'000;

/// Default protocol atom for a noise law: the smallest positive atom of a
/// discrete law, delta/2 for the uniform law.
std::optional<double> default_protocol_atom(const NoiseModel& noise);

/// Throws TheoryError when the search for L passes `l_cap`.
TheoryConstants theory_constants(double mu, double lambda, const ModelConfig& config,
                                 std::optional<double> a = std::nullopt, std::uint64_t l_cap = kDefaultLSearchCap);

/// Per-step cross-replica aggregates of d_V(t).
struct EnsembleStats {
  std::size_t replicas = 0;
  double z = 3.0;  // half_width = z * sqrt(variance / replicas)
  std::vector<double> mean;
  std::vector<double> variance;  // unbiased
  std::vector<double> min;
  std::vector<double> max;
  std::vector<double> half_width;

  std::size_t steps() const noexcept { return mean.size(); }
};

/// Mergeable per-step accumulator (Welford / Chan). Folding replicas in a
/// fixed order gives bit-identical results; merging partial folds agrees up
/// to floating-point reassociation.
class EnsembleAccumulator {
 public:
  explicit EnsembleAccumulator(std::size_t length);

  void add(std::span<const double> series);
  void merge(const EnsembleAccumulator& other);
  std::size_t count() const noexcept { return count_; }
  std::size_t length() const noexcept { return mean_.size(); }
  EnsembleStats finish(double z = 3.0) const;

 private:
  std::size_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
  std::vector<double> min_;
  std::vector<double> max_;
};

EnsembleStats ensemble_mean_diameter(std::span<const DiameterSeries> records, double z = 3.0);

/// First index of the final `tail_fraction` of a series of `length` entries
/// (t = 0..length-1).
std::size_t tail_start_index(std::size_t length, double tail_fraction);

struct ImVerdict {
  bool pass = false;
  double margin = 0.0;       // epsilon - worst_upper
  double worst_upper = 0.0;  // max over tail of min(mean + half_width, max)
  std::size_t worst_step = 0;
  std::size_t tail_start = 0;
};

/// Passes iff the upper band of E d_V stays <= epsilon over the tail. The
/// band at each step is mean + half_width, capped at the ensemble max.
ImVerdict quasi_sync_im_check(const EnsembleStats& stats, double epsilon, double tail_fraction);

}  // namespace bcsync
