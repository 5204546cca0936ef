#include "bcsync/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "bcsync/harness.hpp"
#include "bcsync/metrics.hpp"
#include "bcsync/presets.hpp"
#include "bcsync/protocols.hpp"

namespace bcsync {

using nlohmann::json;

namespace {

// Rounding slack for the pathwise inequalities; the claims themselves are exact.
constexpr double kPathwiseSlack = 1e-12;

json header(std::string_view check, const ModelConfig& config, const VerifyOptions& options) {
  json j;
  j["check"] = std::string(check);
  j["tool_version"] = std::string(kToolVersion);
  j["fingerprint"] = fingerprint(config);
  j["config"] = to_json(config);
  j["seed"] = options.seed;
  j["z"] = options.z;
  j["strict"] = options.strict;
  return j;
}

json quantiles(std::vector<double> values) {
  if (values.empty()) return nullptr;
  std::sort(values.begin(), values.end());
  const auto at = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(values.size() - 1)));
    return values[idx];
  };
  const double sum = std::accumulate(values.begin(), values.end(), 0.0);
  return {{"min", values.front()},       {"q25", at(0.25)}, {"median", at(0.5)}, {"q75", at(0.75)},
          {"max", values.back()},        {"mean", sum / static_cast<double>(values.size())}};
}

void require_runs(std::size_t count, const char* what) {
  if (count == 0) throw InfeasibleOptions(fmt::format("{} must be >= 1", what));
}

}  // namespace

const std::vector<std::string>& verify_subcommands() {
  static const std::vector<std::string> names{"im", "as-failure", "lemma3", "lemma2", "large-noise", "prob-A",
                                              "delta-bar"};
  return names;
}

// ---------------------------------------------------------------------------

json verify_im(const ModelConfig& config, const VerifyOptions& options) {
  config.validate();
  if (options.replicas < 2) throw InfeasibleOptions("im needs at least 2 replicas");
  if (options.horizon == 0) throw InfeasibleOptions("horizon must be >= 1");
  if (options.adaptive_threshold && !(*options.adaptive_threshold > 0.0)) {
    throw InfeasibleOptions("adaptive threshold must be positive");
  }
  json j = header("im", config, options);
  const double delta = config.noise.delta();
  j["delta"] = delta;
  j["epsilon"] = config.epsilon;

  try {
    const TheoryConstants c = theory_constants(options.mu, 1.0, config, std::nullopt);
    j["theory"] = to_json(c);
    j["delta_within_bound"] = delta <= c.delta_bar;
    if (options.strict && delta > c.delta_bar) {
      throw InfeasibleOptions(fmt::format("delta = {} exceeds delta_bar = {} (mu = {})", delta, c.delta_bar, options.mu));
    }
  } catch (const TheoryError& e) {
    if (options.strict) throw InfeasibleOptions(fmt::format("delta_bar is not computable: {}", e.what()));
    j["theory"] = nullptr;
    j["theory_error"] = e.what();
  }

  const auto seeds = derive_seeds(options.seed, options.replicas);
  std::size_t horizon = options.adaptive_threshold ? std::min(options.horizon, options.horizon_cap) : options.horizon;
  std::vector<std::size_t> attempts;

  while (true) {
    attempts.push_back(horizon);
    const std::size_t tail_start = tail_start_index(horizon + 1, options.tail_fraction);
    std::vector<double> tail_max(seeds.size(), 0.0);
    std::vector<std::optional<std::size_t>> hit(seeds.size());

    EnsembleOptions eo;
    eo.threads = options.threads;
    eo.z = options.z;
    eo.keep_records = false;
    eo.initial = options.initial;
    eo.on_record = [&](const TrajectoryRecord& rec) {
      const auto& d = rec.diameter;
      tail_max[rec.replica] = *std::max_element(d.begin() + static_cast<std::ptrdiff_t>(tail_start), d.end());
      if (options.adaptive_threshold) hit[rec.replica] = stopping_time(d, *options.adaptive_threshold);
    };
    const EnsembleResult result = run_ensemble(config, seeds, horizon, eo);

    bool settled = true;
    std::vector<double> hits;
    if (options.adaptive_threshold) {
      for (const auto& h : hit) {
        if (!h || *h >= tail_start) settled = false;
        if (h) hits.push_back(static_cast<double>(*h));
      }
    }
    if (!settled && horizon < options.horizon_cap) {
      horizon = std::min(horizon * 2, options.horizon_cap);
      continue;
    }

    const ImVerdict v = quasi_sync_im_check(result.stats, config.epsilon, options.tail_fraction);
    const auto& mean = result.stats.mean;
    const double tail_mean = std::accumulate(mean.begin() + static_cast<std::ptrdiff_t>(tail_start), mean.end(), 0.0) /
                             static_cast<double>(mean.size() - tail_start);
    const auto above = static_cast<std::size_t>(
        std::count_if(tail_max.begin(), tail_max.end(), [&](double m) { return m > config.epsilon; }));

    j["horizon"] = horizon;
    j["replicas"] = seeds.size();
    j["seeds"] = seeds;
    j["tail_fraction"] = options.tail_fraction;
    j["tail_start"] = v.tail_start;
    j["quasi_sync_im"] = v.pass;
    j["margin"] = v.margin;
    j["worst_upper"] = v.worst_upper;
    j["worst_step"] = v.worst_step;
    j["tail_mean"] = tail_mean;
    j["replicas_tail_max_above_epsilon"] = above;
    j["fraction_tail_max_above_epsilon"] = static_cast<double>(above) / static_cast<double>(seeds.size());
    j["tail_max"] = quantiles(tail_max);
    if (options.adaptive_threshold) {
      j["adaptive"] = {{"threshold", *options.adaptive_threshold},
                       {"horizon_cap", options.horizon_cap},
                       {"horizons_tried", attempts},
                       {"settled", settled},
                       {"replicas_hit", hits.size()},
                       {"stopping_time", quantiles(hits)}};
    }
    j["pass"] = v.pass && settled;
    return j;
  }
}

// ---------------------------------------------------------------------------

json verify_as_failure(const ModelConfig& config, const VerifyOptions& options) {
  config.validate();
  require_runs(options.windows, "windows");
  const std::size_t n = config.n;
  if (!(config.comm.p(n) < 1.0)) throw InfeasibleOptions("as-failure needs p_n < 1");
  const ProtocolParams params = ProtocolParams::from_noise(config.noise, options.a);
  const auto t_L = static_cast<std::size_t>(std::ceil(1.0 / params.a));
  const double p_tilde = 2.0 * (1.0 - config.comm.p(n)) / static_cast<double>(n);
  const double per_step = p_tilde * std::pow(params.p_bar, static_cast<double>(n));
  const double bound = std::pow(per_step, static_cast<double>(t_L));

  std::size_t reached_end = 0;
  std::size_t reached_any = 0;
  std::size_t all_escape = 0;
  std::size_t protocol_steps = 0;
  for (std::size_t w = 0; w < options.windows; ++w) {
    Simulation sim(config, options.seed, w, options.initial);
    bool any = diameter(sim.state()) >= 1.0 - kPathwiseSlack;
    bool escaped_throughout = true;
    for (std::size_t t = 0; t < t_L; ++t) {
      StepInputs in = sim.draw_inputs();
      if (!event_A_holds(sim.state(), in.comm_set)) {
        in.noise = divergence_noise(sim.state(), params);
        ++protocol_steps;
      } else {
        escaped_throughout = false;
      }
      sim.apply(in);
      if (diameter(sim.state()) >= 1.0 - kPathwiseSlack) any = true;
    }
    const bool end = diameter(sim.state()) >= 1.0 - kPathwiseSlack;
    reached_end += end;
    reached_any += any;
    all_escape += end && escaped_throughout;
  }

  const double W = static_cast<double>(options.windows);
  const double freq = static_cast<double>(reached_end) / W;
  const double se = std::sqrt(bound * (1.0 - bound) / W);
  json j = header("as-failure", config, options);
  j["windows"] = options.windows;
  j["a"] = params.a;
  j["delta"] = params.delta;
  j["p_bar"] = params.p_bar;
  j["t_L"] = t_L;
  j["escape_p_tilde"] = p_tilde;
  j["bound"] = bound;
  j["empirical"] = freq;
  j["standard_error"] = se;
  j["margin"] = freq - (bound - options.z * se);
  j["windows_reaching_one_at_end"] = reached_end;
  j["windows_reaching_one_within"] = reached_any;
  j["windows_escaping_every_step"] = all_escape;
  j["fraction_reaching_one_within"] = static_cast<double>(reached_any) / W;
  j["protocol_steps"] = protocol_steps;
  j["pass"] = freq >= bound - options.z * se && reached_any > 0;
  return j;
}

// ---------------------------------------------------------------------------

json verify_lemma3(const ModelConfig& config, const VerifyOptions& options) {
  config.validate();
  require_runs(options.runs, "runs");
  const std::size_t n = config.n;
  const ContractionBounds b = contraction_bounds(options.lambda, config);
  const double delta = config.noise.delta();
  if (!(delta > 0.0)) throw InfeasibleOptions("lemma3 needs positive noise amplitude");
  if (delta > b.delta_max * (1.0 + kPathwiseSlack)) {
    throw InfeasibleOptions(fmt::format("delta = {} exceeds alpha lambda eps/(2n(n-1)^2) = {}", delta, b.delta_max));
  }
  if (options.initial && diameter(*options.initial) > b.start_max * (1.0 + kPathwiseSlack)) {
    throw InfeasibleOptions(fmt::format("initial diameter {} exceeds lambda eps/2 = {}", diameter(*options.initial),
                                        b.start_max));
  }

  ProtocolParams params;
  params.a = delta;
  params.delta = delta;
  params.emit_delta = true;

  const double envelope_cap = options.lambda * config.epsilon;
  std::size_t contracted = 0;
  std::size_t envelope_ok = 0;
  double worst_final = 0.0;
  double worst_envelope_margin = std::numeric_limits<double>::infinity();
  std::vector<double> finals;
  finals.reserve(options.runs);

  for (std::size_t r = 0; r < options.runs; ++r) {
    std::vector<double> x0;
    if (options.initial) {
      if (options.initial->size() != n) throw InfeasibleOptions("initial state dimension mismatch");
      x0 = *options.initial;
    } else {
      RngStream init(options.seed, r, StreamPurpose::init);
      const double lo = init.uniform(0.0, 1.0 - b.start_max);
      const double hi = lo + b.start_max;
      x0.resize(n);
      for (double& v : x0) v = init.uniform(lo, hi);
      const auto lo_agent = static_cast<std::size_t>(init.below(n));
      auto hi_agent = static_cast<std::size_t>(init.below(n - 1));
      if (hi_agent >= lo_agent) ++hi_agent;
      x0[lo_agent] = lo;
      x0[hi_agent] = hi;
    }
    OpinionState state(std::move(x0));
    RngStream comm(options.seed, r, StreamPurpose::comm);
    RngStream inertia(options.seed, r, StreamPurpose::inertia);

    const double d0 = diameter(state);
    bool env = true;
    for (std::uint64_t t = 1; t <= b.L0; ++t) {
      StepInputs in;
      in.comm_set = forced_A_sampler(comm, config.comm, state, n);
      in.inertia = inertia_coefficients(inertia, config.inertia, state, in.comm_set, config.epsilon);
      in.noise = divergence_noise(state, params);
      state = step(state, in, config);
      const double d = diameter(state);
      const double allowed = std::min(d0 + 2.0 * static_cast<double>(t) * delta, envelope_cap);
      worst_envelope_margin = std::min(worst_envelope_margin, allowed - d);
      if (d > allowed + kPathwiseSlack) env = false;
    }
    const double dL = diameter(state);
    finals.push_back(dL);
    worst_final = std::max(worst_final, dL);
    contracted += dL <= b.contracted + kPathwiseSlack;
    envelope_ok += env;
  }

  json j = header("lemma3", config, options);
  j["runs"] = options.runs;
  j["lambda"] = options.lambda;
  j["L0"] = b.L0;
  j["delta"] = delta;
  j["delta_max"] = b.delta_max;
  j["start_max"] = b.start_max;
  j["contracted_bound"] = b.contracted;
  j["runs_contracted"] = contracted;
  j["runs_within_envelope"] = envelope_ok;
  j["worst_final_diameter"] = worst_final;
  j["margin"] = b.contracted - worst_final;
  j["worst_envelope_margin"] = worst_envelope_margin;
  j["final_diameter"] = quantiles(finals);
  j["slack"] = kPathwiseSlack;
  j["pass"] = contracted == options.runs && envelope_ok == options.runs;
  return j;
}

// ---------------------------------------------------------------------------

json verify_lemma2(const ModelConfig& config, const VerifyOptions& options) {
  config.validate();
  require_runs(options.runs, "runs");
  require_runs(options.lemma2_horizon, "lemma2 horizon");
  const std::size_t n = config.n;
  const double delta = config.noise.delta();
  const double delta_max = options.lambda * config.epsilon / 2.0;
  if (!(options.lambda > 0.0 && options.lambda <= 1.0)) throw InfeasibleOptions("lambda must lie in (0,1]");
  if (delta > delta_max * (1.0 + kPathwiseSlack)) {
    throw InfeasibleOptions(fmt::format("delta = {} exceeds lambda eps/2 = {}", delta, delta_max));
  }
  const ProtocolParams params = ProtocolParams::from_noise(config.noise, options.a);
  const double threshold = options.lambda * config.epsilon;

  std::vector<double> x0(n, 1.0);
  if (options.initial) {
    x0 = *options.initial;
  } else {
    std::fill(x0.begin(), x0.begin() + static_cast<std::ptrdiff_t>(n / 2), 0.0);
  }

  std::vector<double> times;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < options.runs; ++r) {
    Simulation sim(config, options.seed, r, x0);
    std::optional<std::size_t> T;
    for (std::size_t t = 0; t <= options.lemma2_horizon; ++t) {
      if (diameter(sim.state()) <= threshold) {
        T = t;
        break;
      }
      if (t == options.lemma2_horizon) break;
      StepInputs in = sim.draw_inputs();
      in.noise = contraction_noise(sim.state(), in.comm_set, in.inertia, config.epsilon, params);
      sim.apply(in);
    }
    if (T) {
      ++hits;
      times.push_back(static_cast<double>(*T));
    }
  }

  json j = header("lemma2", config, options);
  j["runs"] = options.runs;
  j["lambda"] = options.lambda;
  j["threshold"] = threshold;
  j["delta"] = delta;
  j["delta_max"] = delta_max;
  j["a"] = params.a;
  j["horizon"] = options.lemma2_horizon;
  j["initial"] = x0;
  j["runs_hit"] = hits;
  j["stopping_time"] = quantiles(times);
  j["pass"] = hits == options.runs;
  return j;
}

// ---------------------------------------------------------------------------

json verify_large_noise(const ModelConfig& config, const VerifyOptions& options) {
  if (options.replicas < 2) throw InfeasibleOptions("large-noise needs at least 2 replicas");
  const ModelConfig cfg = with_noise(config, large_noise_model(config.epsilon, options.p));
  cfg.validate();
  const auto seeds = derive_seeds(options.seed, options.replicas);
  EnsembleOptions eo;
  eo.threads = options.threads;
  eo.z = options.z;
  eo.keep_records = false;
  eo.initial = options.initial;
  const EnsembleResult result = run_ensemble(cfg, seeds, options.horizon, eo);
  const auto& s = result.stats;
  const std::size_t tail_start = tail_start_index(s.steps(), options.tail_fraction);

  double worst_lower = std::numeric_limits<double>::infinity();
  std::size_t worst_step = tail_start;
  double tail_mean = 0.0;
  for (std::size_t t = tail_start; t < s.steps(); ++t) {
    const double lower = s.mean[t] - s.half_width[t];
    if (lower < worst_lower) {
      worst_lower = lower;
      worst_step = t;
    }
    tail_mean += s.mean[t];
  }
  tail_mean /= static_cast<double>(s.steps() - tail_start);

  json j = header("large-noise", cfg, options);
  j["p"] = options.p;
  j["atom"] = cfg.noise.delta();
  j["epsilon"] = cfg.epsilon;
  j["horizon"] = options.horizon;
  j["replicas"] = seeds.size();
  j["seeds"] = seeds;
  j["tail_fraction"] = options.tail_fraction;
  j["tail_start"] = tail_start;
  j["tail_mean"] = tail_mean;
  j["worst_lower"] = worst_lower;
  j["worst_step"] = worst_step;
  j["margin"] = worst_lower - cfg.epsilon;
  j["pass"] = worst_lower > cfg.epsilon;
  return j;
}

// ---------------------------------------------------------------------------

json verify_prob_A(const ModelConfig& config, const VerifyOptions& options) {
  config.validate();
  require_runs(options.steps, "steps");
  const std::size_t n = config.n;
  const double exact = prob_event_A(config.comm, n);
  RngStream comm(options.seed, 0, StreamPurpose::comm);
  RngStream states(options.seed, 0, StreamPurpose::aux);
  std::size_t count = 0;
  std::vector<double> x(n);
  for (std::size_t s = 0; s < options.steps; ++s) {
    for (double& v : x) v = states.uniform01();
    const OpinionState state(x);
    count += event_A_holds(state, sample_comm_set(comm, config.comm, n));
  }
  const double freq = static_cast<double>(count) / static_cast<double>(options.steps);
  const double se = std::sqrt(exact * (1.0 - exact) / static_cast<double>(options.steps));
  const double deviation = std::abs(freq - exact);
  bool pass = deviation <= options.z * se;

  json j = header("prob-A", config, options);
  j["steps"] = options.steps;
  j["exact"] = exact;
  j["empirical"] = freq;
  j["standard_error"] = se;
  j["deviation"] = deviation;
  j["margin"] = options.z * se - deviation;
  if (config.comm == CommunicationRule::uniform(n)) {
    const double closed_form_error = std::abs(exact - 1.0 / 3.0);
    j["closed_form"] = {{"value", 1.0 / 3.0}, {"abs_error", closed_form_error}};
    pass = pass && closed_form_error <= 1e-12;
  }
  j["pass"] = pass;
  return j;
}

// ---------------------------------------------------------------------------

json verify_delta_bar(const ModelConfig& config, const VerifyOptions& options) {
  json j = header("delta-bar", config, options);
  const double delta = config.noise.delta();
  j["delta"] = delta;
  try {
    const TheoryConstants c = theory_constants(options.mu, options.lambda, config, options.a);
    j["theory"] = to_json(c);
    j["delta_bar"] = c.delta_bar;
    j["margin"] = c.delta_bar - delta;
    if (options.strict && delta > c.delta_bar) {
      throw InfeasibleOptions(fmt::format("delta = {} exceeds delta_bar = {} (mu = {})", delta, c.delta_bar, options.mu));
    }
    j["pass"] = delta <= c.delta_bar;
  } catch (const TheoryError& e) {
    if (options.strict) throw InfeasibleOptions(fmt::format("delta_bar is not computable: {}", e.what()));
    j["theory"] = nullptr;
    j["theory_error"] = e.what();
    j["pass"] = false;
  }
  return j;
}

json verify(std::string_view subcommand, const ModelConfig& config, const VerifyOptions& options) {
  if (subcommand == "im") return verify_im(config, options);
  if (subcommand == "as-failure") return verify_as_failure(config, options);
  if (subcommand == "lemma3") return verify_lemma3(config, options);
  if (subcommand == "lemma2") return verify_lemma2(config, options);
  if (subcommand == "large-noise") return verify_large_noise(config, options);
  if (subcommand == "prob-A") return verify_prob_A(config, options);
  if (subcommand == "delta-bar") return verify_delta_bar(config, options);
  throw ModelError(fmt::format("unknown verify subcommand \"{}\"", subcommand));
}

}  // namespace bcsync
