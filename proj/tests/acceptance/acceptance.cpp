// Acceptance criteria 1-9. One PASS/FAIL line per criterion; the exit code
// is nonzero if any selected criterion fails.
//
//   acceptance                 run all
//   acceptance --criterion N   run only N

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <fmt/format.h>

#include "bcsync/harness.hpp"
#include "bcsync/metrics.hpp"
#include "bcsync/presets.hpp"
#include "bcsync/protocols.hpp"
#include "bcsync/verify.hpp"

using namespace bcsync;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kZ = 3.0;                  // statistical bands
constexpr double kAggregationTol = 1e-12;   // parallel vs sequential means
constexpr double kClosedFormTol = 1e-12;    // uniform rule P(A) = 1/3
constexpr double kFractionAboveEps = 0.30;  // criterion 1(b)
constexpr std::uint64_t kSeed = 20240601;

struct Outcome {
  bool pass = false;
  std::string detail;
};

VerifyOptions base_options() {
  VerifyOptions o;
  o.seed = kSeed;
  o.z = kZ;
  return o;
}

Outcome criterion1() {
  const RunConfig rc = load_config(fs::path(BCSYNC_CONFIG_DIR) / "async_n40.json");
  VerifyOptions o = base_options();
  o.replicas = 100;
  o.horizon = 40000;
  o.tail_fraction = 0.625;  // window t in [15000, 40000]
  const auto v = verify_im(rc.model, o);
  const bool a = v.at("quasi_sync_im").get<bool>();
  const double frac = v.at("fraction_tail_max_above_epsilon").get<double>();
  const bool b = frac >= kFractionAboveEps;
  return {a && b, fmt::format("(a) {} tail_mean={:.4f} worst_upper={:.4f} eps=0.1; (b) {} fraction max>eps={:.2f} "
                              "(need >= {:.2f})",
                              a ? "PASS" : "FAIL", v.at("tail_mean").get<double>(),
                              v.at("worst_upper").get<double>(), b ? "PASS" : "FAIL", frac, kFractionAboveEps)};
}

Outcome criterion2() {
  bool ok = true;
  std::string detail;
  for (std::size_t n : {2u, 5u, 40u}) {
    const std::map<std::string, CommunicationRule> rules{{"p_n=1", CommunicationRule::fixed(n, n)},
                                                         {"uniform", CommunicationRule::uniform(n)},
                                                         {"fixed:2", CommunicationRule::fixed(n, 2)}};
    for (const auto& [name, rule] : rules) {
      VerifyOptions o = base_options();
      o.steps = 100'000;
      o.seed = kSeed + n;
      const auto v = verify_prob_A(general_preset(n, 0.1, 0.01, rule, InertiaPolicy::hk_rule()), o);
      const bool pass = v.at("pass").get<bool>();
      ok = ok && pass;
      if (name == "uniform") {
        const double err = std::abs(prob_event_A(rule, n) - 1.0 / 3.0);
        ok = ok && err <= kClosedFormTol;
      }
      if (!pass) {
        detail += fmt::format(" n={} {} exact={} freq={};", n, name, v.at("exact").get<double>(),
                              v.at("empirical").get<double>());
      }
    }
  }
  return {ok, ok ? "9 (n, rule) pairs within 3 s.e.; uniform rule equals 1/3" : detail};
}

Outcome criterion3() {
  const double delta = 0.2 * 1.0 * 0.5 / (2.0 * 4 * 9);
  const ModelConfig c =
      general_preset(4, 0.5, delta, CommunicationRule::uniform(4), InertiaPolicy::constant(0.2), 0.2);
  VerifyOptions o = base_options();
  o.runs = 1000;
  o.lambda = 1.0;
  const auto v = verify_lemma3(c, o);
  return {v.at("pass").get<bool>(),
          fmt::format("contracted {}/1000, envelope {}/1000, worst d(L0)={:.5f} <= {:.5f}",
                      v.at("runs_contracted").get<int>(), v.at("runs_within_envelope").get<int>(),
                      v.at("worst_final_diameter").get<double>(), v.at("contracted_bound").get<double>())};
}

Outcome criterion4() {
  const ModelConfig c = with_noise(
      general_preset(5, 0.5, 0.1, CommunicationRule::uniform(5), InertiaPolicy::hk_rule()), NoiseModel::two_point(0.1));
  VerifyOptions o = base_options();
  o.runs = 1000;
  o.lambda = 1.0;
  o.a = 0.1;
  o.lemma2_horizon = 10'000;
  const auto v = verify_lemma2(c, o);
  return {v.at("pass").get<bool>(), fmt::format("hit {}/1000 within 1e4 steps, max stopping time {}",
                                                v.at("runs_hit").get<int>(), v.at("stopping_time").at("max").dump())};
}

Outcome criterion5() {
  const ModelConfig c = with_noise(general_preset(3, 0.3, 0.25, CommunicationRule::uniform(3), InertiaPolicy::hk_rule()),
                                   NoiseModel::two_point(0.25));
  VerifyOptions o = base_options();
  o.windows = 10'000;
  o.a = 0.25;
  const auto v = verify_as_failure(c, o);
  return {v.at("pass").get<bool>(),
          fmt::format("empirical={:.4f} bound={:.3e} (t_L={}) over {} windows", v.at("empirical").get<double>(),
                      v.at("bound").get<double>(), v.at("t_L").get<int>(), v.at("windows").get<int>())};
}

Outcome criterion6() {
  VerifyOptions o = base_options();
  o.p = 0.5;
  o.replicas = 50;
  o.horizon = 5000;
  const auto v = verify_large_noise(hk_preset(10, 0.4, 0.01), o);
  return {v.at("pass").get<bool>(),
          fmt::format("atom={} worst lower band={:.4f} > eps=0.4, tail_mean={:.4f}", v.at("atom").get<double>(),
                      v.at("worst_lower").get<double>(), v.at("tail_mean").get<double>())};
}

Outcome criterion7() {
  const ModelConfig dw = dw_preset(10, 0.2, 0.5, 0.01);
  try {
    const TheoryConstants t = theory_constants(1.0, 1.0, dw);
    VerifyOptions o = base_options();
    o.replicas = 100;
    o.horizon = 1000;
    o.adaptive_threshold = 0.2 / 4.0;
    o.horizon_cap = 1'000'000;
    const auto v = verify_im(with_noise(dw, NoiseModel::uniform(0.5 * t.delta_bar)), o);
    return {v.at("pass").get<bool>(), fmt::format("delta_bar={:.3e} margin={}", t.delta_bar, v.at("margin").dump())};
  } catch (const TheoryError& e) {
    // delta_bar is not computable within the L search cap. The closed form
    // puts it near 1e-78, so the run would be the noise-free DW model.
    const double p_tilde = 2.0 / 90.0;
    const double q = std::exp(45.0 * std::log(p_tilde));
    const double L = std::ceil(std::log(0.1) / std::log1p(-q));
    const double delta_bar = std::min(0.5 * 0.2 / (2.0 * 10 * 81), 0.2 / (8.0 * (1.0 + 45.0 * L)));
    // Diagnostic only: the adaptive run at half the closed-form value.
    VerifyOptions o = base_options();
    o.replicas = 100;
    o.horizon = 1000;
    o.adaptive_threshold = 0.2 / 4.0;
    o.horizon_cap = 1'000'000;
    const auto v = verify_im(with_noise(dw, NoiseModel::uniform(0.5 * delta_bar)), o);
    const auto& ad = v.at("adaptive");
    return {false, fmt::format("delta_bar not computable: {}; closed form delta_bar~{:.2e}. At half that value: "
                               "{}/100 replicas reached d<=eps/4 by horizon {}, settled={}, im={} tail_mean={:.4f}",
                               e.what(), delta_bar, ad.at("replicas_hit").get<int>(), v.at("horizon").get<int>(),
                               ad.at("settled").get<bool>(), v.at("quasi_sync_im").get<bool>(),
                               v.at("tail_mean").get<double>())};
  }
}

Outcome criterion8() {
  const double eps = 0.5;
  const double delta = 0.2 * eps / (2.0 * 5 * 16);
  const ModelConfig c = hk_preset(5, eps, delta);
  constexpr std::size_t kEnsembles = 20, kReplicas = 20, kHorizon = 2000;
  constexpr double kTail = 0.25;
  RngStream r(kSeed, 0, StreamPurpose::aux);
  std::size_t passed = 0, pointwise_ok = 0;
  double worst_margin = 1.0;
  for (std::size_t e = 0; e < kEnsembles; ++e) {
    EnsembleOptions o;
    o.z = kZ;
    const double lo = (1.0 - eps / 2.0) * r.uniform01();
    std::vector<double> x0(c.n);
    for (double& v : x0) v = lo + eps / 2.0 * r.uniform01();
    o.initial = x0;
    const auto seeds = derive_seeds(kSeed + 1000 * e, kReplicas);
    const auto res = run_ensemble(c, seeds, kHorizon, o);
    const std::size_t start = tail_start_index(kHorizon + 1, kTail);
    bool all_below = true;
    for (const auto& rec : res.records) {
      for (std::size_t t = start; t <= kHorizon; ++t) all_below = all_below && rec.diameter[t] <= eps;
    }
    pointwise_ok += all_below;
    const auto v = quasi_sync_im_check(res.stats, eps, kTail);
    passed += all_below && v.pass;
    worst_margin = std::min(worst_margin, v.margin);
  }
  return {passed == kEnsembles && pointwise_ok == kEnsembles,
          fmt::format("{}/{} ensembles pointwise below eps, verdict passed in {}/{}, worst margin {:.4f}", pointwise_ok,
                      kEnsembles, passed, kEnsembles, worst_margin)};
}

Outcome criterion9() {
  const ModelConfig c = general_preset(10, 0.2, 0.01, CommunicationRule::uniform(10), InertiaPolicy::hk_rule());
  const auto seeds = derive_seeds(kSeed, 16);
  constexpr std::size_t kHorizon = 3000;
  const fs::path root = fs::temp_directory_path() / fmt::format("bcsync-acceptance-{}", kSeed);
  fs::remove_all(root);
  RunManifest m;
  m.config_path = "inline";
  m.seeds = seeds;
  m.replicas = seeds.size();
  m.horizon = kHorizon;
  m.fingerprint = fingerprint(c);
  std::vector<fs::path> dirs{root / "a", root / "b"};
  for (const auto& d : dirs) {
    m.output_dir = "out";  // identical manifests
    EnsembleOptions o;
    o.snapshot_stride = 100;
    run_and_write(d, m, c, 0.25, [&] { return run_ensemble(c, seeds, kHorizon, o); });
  }
  std::size_t files = 0, identical = 0;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    ++files;
    const fs::path other = dirs[1] / entry.path().filename();
    identical += fs::exists(other) && read_file(entry.path()) == read_file(other);
  }
  const bool bytes_ok = files > 0 && identical == files;

  EnsembleOptions seq;
  EnsembleOptions par;
  par.threads = 4;
  par.sequential_reduction = false;
  const auto a = run_ensemble(c, seeds, kHorizon, seq);
  const auto b = run_ensemble(c, seeds, kHorizon, par);
  double worst = 0.0;
  for (std::size_t t = 0; t < a.stats.steps(); ++t) worst = std::max(worst, std::abs(a.stats.mean[t] - b.stats.mean[t]));
  fs::remove_all(root);
  const bool agg_ok = worst <= kAggregationTol && a.stats.steps() == b.stats.steps();
  return {bytes_ok && agg_ok, fmt::format("{}/{} files byte-identical; max |mean_seq - mean_par| = {:.3e} (tol {:.0e})",
                                          identical, files, worst, kAggregationTol)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::function<Outcome()>> criteria{{1, criterion1}, {2, criterion2}, {3, criterion3},
                                                         {4, criterion4}, {5, criterion5}, {6, criterion6},
                                                         {7, criterion7}, {8, criterion8}, {9, criterion9}};
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--criterion N]\n";
      return 2;
    }
  }
  if (only != 0 && !criteria.contains(only)) {
    std::cerr << "unknown criterion " << only << "\n";
    return 2;
  }
  bool all = true;
  for (const auto& [id, run] : criteria) {
    if (only != 0 && id != only) continue;
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out = {false, fmt::format("error: {}", e.what())};
    }
    all = all && out.pass;
    std::cout << fmt::format("criterion {}: {}  {}", id, out.pass ? "PASS" : "FAIL", out.detail) << std::endl;
  }
  return all ? 0 : 1;
}
