#include "bcsync/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <fmt/format.h>

namespace bcsync {

double diameter(std::span<const double> opinions) {
  if (opinions.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(opinions.begin(), opinions.end());
  return *hi - *lo;
}

Extremes extremal_agents(std::span<const double> opinions) {
  Extremes e;
  for (std::size_t i = 1; i < opinions.size(); ++i) {
    if (opinions[i] < opinions[e.min_agent]) e.min_agent = i;
    if (opinions[i] > opinions[e.max_agent]) e.max_agent = i;
  }
  return e;
}

bool event_A_holds(const OpinionState& state, const AgentSet& comm_set) {
  const Extremes e = extremal_agents(state);
  return comm_set.contains(e.min_agent) && comm_set.contains(e.max_agent);
}

double prob_event_A(const CommunicationRule& rule, std::size_t n) {
  if (rule.n() != n) throw ModelError("communication rule does not match n = " + std::to_string(n));
  const double denom = static_cast<double>(n) * static_cast<double>(n - 1);
  double p = 0.0;
  for (std::size_t k = 2; k <= n; ++k) {
    p += static_cast<double>(k) * static_cast<double>(k - 1) / denom * rule.p(k);
  }
  return p;
}

std::optional<std::size_t> stopping_time(std::span<const double> series, double threshold) {
  if (!(threshold > 0.0)) throw ModelError("stopping threshold must be > 0");
  for (std::size_t t = 0; t < series.size(); ++t) {
    if (series[t] <= threshold) return t;
  }
  return std::nullopt;
}

std::optional<double> default_protocol_atom(const NoiseModel& noise) {
  switch (noise.kind()) {
    case NoiseKind::none: return std::nullopt;
    case NoiseKind::uniform: return noise.delta() / 2.0;
    default: break;
  }
  double a = noise.delta();
  for (double atom : noise.atoms()) {
    if (atom != 0.0) a = std::min(a, std::abs(atom));
  }
  return a;
}

ContractionBounds contraction_bounds(double lambda, const ModelConfig& config) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ModelError("lambda must lie in (0,1]");
  const double n = static_cast<double>(config.n);
  const double eps = config.epsilon;
  ContractionBounds b;
  b.L0 = static_cast<std::uint64_t>(config.n) * (config.n - 1) / 2;
  b.delta_max = config.alpha * lambda * eps / (2.0 * n * (n - 1.0) * (n - 1.0));
  b.start_max = lambda * eps / 2.0;
  b.contracted = lambda * eps / 2.0 - config.alpha * lambda * eps / (2.0 * (n - 1.0));
  return b;
}

TheoryConstants theory_constants(double mu, double lambda, const ModelConfig& config, std::optional<double> a,
                                 std::uint64_t l_cap) {
  if (!(mu > 0.0 && mu <= 1.0)) throw ModelError("mu must lie in (0,1]");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ModelError("lambda must lie in (0,1]");
  config.validate();

  const double n = static_cast<double>(config.n);
  const double eps = config.epsilon;
  const double alpha = config.alpha;
  const auto& rule = config.comm;

  TheoryConstants c;
  c.mu = mu;
  c.lambda = lambda;
  c.L0 = static_cast<std::uint64_t>(config.n) * (config.n - 1) / 2;
  c.p_tilde = 2.0 * (1.0 - rule.p(0) - rule.p(1)) / (n * (n - 1.0));

  const double target = mu * eps / 2.0;
  const double miss = 1.0 - std::pow(c.p_tilde, static_cast<double>(c.L0));
  double power = miss;
  std::uint64_t l = 1;
  while (power > target) {
    if (l >= l_cap) {
      const double log_hit = static_cast<double>(c.L0) * std::log(c.p_tilde);
      const double estimate = std::log(target) / std::log1p(-std::exp(log_hit));
      throw TheoryError(fmt::format(
          "L search passed the cap of {} steps: p_tilde^L0 = exp({:.6g}) makes (1 - p_tilde^L0)^l shrink too slowly; "
          "closed-form L ~= {:.6g}",
          l_cap, log_hit, estimate));
    }
    power *= miss;
    ++l;
  }
  c.L = l;

  const double branch_contract = alpha * mu * eps / (2.0 * n * (n - 1.0) * (n - 1.0));
  const double branch_hold = mu * eps / (8.0 * (1.0 + static_cast<double>(c.L0) * static_cast<double>(c.L)));
  c.delta_bar = std::min(branch_contract, branch_hold);
  c.escape_p_tilde = 2.0 * (1.0 - rule.p(config.n)) / n;

  if (!a) a = default_protocol_atom(config.noise);
  if (a) {
    if (!(*a > 0.0 && *a <= config.noise.delta())) throw ModelError("protocol atom a must lie in (0, delta]");
    c.a = *a;
    c.p_bar = config.noise.mass_at_least(*a);
    c.t_L = static_cast<std::uint64_t>(std::ceil(1.0 / *a));
  }

  const ContractionBounds b = contraction_bounds(lambda, config);
  c.lemma3_delta_max = b.delta_max;
  c.lemma3_start_max = b.start_max;
  c.lemma3_contracted = b.contracted;
  c.lemma2_delta_max = lambda * eps / 2.0;
  return c;
}

// ---------------------------------------------------------------------------
// Ensemble statistics

EnsembleAccumulator::EnsembleAccumulator(std::size_t length)
    : mean_(length, 0.0),
      m2_(length, 0.0),
      min_(length, std::numeric_limits<double>::infinity()),
      max_(length, -std::numeric_limits<double>::infinity()) {}

void EnsembleAccumulator::add(std::span<const double> series) {
  if (series.size() != mean_.size()) {
    throw ModelError("replica horizon mismatch: expected " + std::to_string(mean_.size()) + " steps, got " +
                     std::to_string(series.size()));
  }
  ++count_;
  const double inv = 1.0 / static_cast<double>(count_);
  for (std::size_t t = 0; t < series.size(); ++t) {
    const double x = series[t];
    const double d = x - mean_[t];
    mean_[t] += d * inv;
    m2_[t] += d * (x - mean_[t]);
    min_[t] = std::min(min_[t], x);
    max_[t] = std::max(max_[t], x);
  }
}

void EnsembleAccumulator::merge(const EnsembleAccumulator& other) {
  if (other.length() != length()) throw ModelError("cannot merge accumulators of different horizons");
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double total = na + nb;
  for (std::size_t t = 0; t < mean_.size(); ++t) {
    const double d = other.mean_[t] - mean_[t];
    mean_[t] += d * nb / total;
    m2_[t] += other.m2_[t] + d * d * na * nb / total;
    min_[t] = std::min(min_[t], other.min_[t]);
    max_[t] = std::max(max_[t], other.max_[t]);
  }
  count_ += other.count_;
}

EnsembleStats EnsembleAccumulator::finish(double z) const {
  if (count_ < 2) throw ModelError("ensemble statistics need at least 2 replicas");
  EnsembleStats s;
  s.replicas = count_;
  s.z = z;
  s.mean = mean_;
  s.min = min_;
  s.max = max_;
  s.variance.resize(mean_.size());
  s.half_width.resize(mean_.size());
  const double r = static_cast<double>(count_);
  for (std::size_t t = 0; t < mean_.size(); ++t) {
    s.variance[t] = std::max(0.0, m2_[t] / (r - 1.0));
    s.half_width[t] = z * std::sqrt(s.variance[t] / r);
    // The running mean can drift an ulp outside the observed range.
    s.mean[t] = std::clamp(s.mean[t], s.min[t], s.max[t]);
  }
  return s;
}

EnsembleStats ensemble_mean_diameter(std::span<const DiameterSeries> records, double z) {
  if (records.size() < 2) throw ModelError("ensemble statistics need at least 2 replicas");
  EnsembleAccumulator acc(records.front().size());
  for (const auto& r : records) acc.add(r);
  return acc.finish(z);
}

std::size_t tail_start_index(std::size_t length, double tail_fraction) {
  if (!(tail_fraction > 0.0 && tail_fraction < 1.0)) throw ModelError("tail_fraction must lie in (0,1)");
  if (length == 0) throw ModelError("empty series has no tail");
  const std::size_t horizon = length - 1;
  const auto tail = static_cast<std::size_t>(std::floor(tail_fraction * static_cast<double>(horizon) + 1e-9));
  return horizon - std::min(tail, horizon);
}

ImVerdict quasi_sync_im_check(const EnsembleStats& stats, double epsilon, double tail_fraction) {
  ImVerdict v;
  v.tail_start = tail_start_index(stats.steps(), tail_fraction);
  v.worst_upper = -std::numeric_limits<double>::infinity();
  for (std::size_t t = v.tail_start; t < stats.steps(); ++t) {
    const double upper = std::min(stats.mean[t] + stats.half_width[t], stats.max[t]);
    if (upper > v.worst_upper) {
      v.worst_upper = upper;
      v.worst_step = t;
    }
  }
  v.margin = epsilon - v.worst_upper;
  v.pass = v.worst_upper <= epsilon;
  return v;
}

}  // namespace bcsync
