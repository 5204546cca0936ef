// bcsync: simulate, aggregate, verify and plot bounded-confidence dynamics.
//
// Exit status: 0 success / verdict pass, 1 verdict fail, 2 usage or input error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "bcsync/harness.hpp"
#include "bcsync/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitError = 2;

std::uint64_t base_seed(const std::optional<std::uint64_t>& flag, const bcsync::RunConfig& rc) {
  if (flag) return *flag;
  if (rc.seed) return *rc.seed;
  if (const char* env = std::getenv("BCSYNC_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw bcsync::ModelError(fmt::format("BCSYNC_SEED=\"{}\" is not an unsigned integer", env));
  }
  return 1;
}

fs::path default_out(const std::string& kind, const bcsync::ModelConfig& model, std::uint64_t seed) {
  return fs::path("runs") / fmt::format("{}-{}-s{}", kind, bcsync::fingerprint(model), seed);
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed_flag,
            std::optional<std::size_t> horizon_flag, std::optional<std::string> out_flag) {
  const auto rc = bcsync::load_config(config_path);
  const std::uint64_t seed = base_seed(seed_flag, rc);
  const std::size_t horizon = horizon_flag.value_or(rc.horizon);
  if (horizon == 0) throw bcsync::ModelError("horizon must be >= 1");
  const fs::path out = out_flag ? fs::path(*out_flag) : default_out("run", rc.model, seed);

  bcsync::TrajectoryOptions opt;
  opt.snapshot_stride = rc.snapshot_stride ? rc.snapshot_stride : bcsync::default_snapshot_stride(horizon);
  opt.initial = rc.initial;

  bcsync::RunManifest manifest;
  manifest.config_path = config_path;
  manifest.seeds = {seed};
  manifest.replicas = 1;
  manifest.horizon = horizon;
  manifest.output_dir = out.string();
  manifest.fingerprint = bcsync::fingerprint(rc.model);

  bcsync::StagedOutput staged(out);
  staged.write("manifest.json", bcsync::to_json(manifest).dump(2) + "\n");
  const auto rec = bcsync::run_trajectory(rc.model, seed, horizon, opt);
  const auto stem = bcsync::replica_file_stem(0);
  staged.write(stem + ".csv", bcsync::csv_text(rec));
  staged.write(stem + "_snapshots.csv", bcsync::snapshots_csv_text(rec));
  staged.commit();

  const auto& d = rec.diameter;
  fmt::print("{}\n", json{{"output_dir", out.string()},
                          {"seed", seed},
                          {"horizon", horizon},
                          {"fingerprint", rec.fingerprint},
                          {"final_diameter", d.back()},
                          {"stopping_time_epsilon", bcsync::stopping_time(d, rc.model.epsilon).has_value()
                                                        ? json(*bcsync::stopping_time(d, rc.model.epsilon))
                                                        : json(nullptr)}}
                         .dump(2));
  return 0;
}

int cmd_ensemble(const std::string& config_path, std::optional<std::size_t> replicas_flag,
                 std::vector<std::uint64_t> seeds_flag, std::optional<std::uint64_t> seed_flag,
                 std::optional<std::size_t> horizon_flag, std::size_t threads, std::optional<std::string> out_flag) {
  const auto rc = bcsync::load_config(config_path);
  const std::size_t horizon = horizon_flag.value_or(rc.horizon);
  if (horizon == 0) throw bcsync::ModelError("horizon must be >= 1");

  std::vector<std::uint64_t> seeds = !seeds_flag.empty() ? seeds_flag : rc.seeds;
  if (seeds.empty()) seeds = bcsync::derive_seeds(base_seed(seed_flag, rc), replicas_flag.value_or(rc.replicas));
  if (replicas_flag && *replicas_flag != seeds.size()) {
    throw bcsync::ModelError(fmt::format("--replicas {} disagrees with {} listed seeds", *replicas_flag, seeds.size()));
  }
  const fs::path out = out_flag ? fs::path(*out_flag) : default_out("ensemble", rc.model, seeds.front());

  bcsync::RunManifest manifest;
  manifest.config_path = config_path;
  manifest.seeds = seeds;
  manifest.replicas = seeds.size();
  manifest.horizon = horizon;
  manifest.output_dir = out.string();
  manifest.fingerprint = bcsync::fingerprint(rc.model);

  bcsync::EnsembleOptions eo;
  eo.threads = threads;
  eo.snapshot_stride = rc.snapshot_stride ? rc.snapshot_stride : bcsync::default_snapshot_stride(horizon);
  eo.initial = rc.initial;

  const auto result = bcsync::run_and_write(out, manifest, rc.model, rc.tail_fraction,
                                            [&] { return bcsync::run_ensemble(rc.model, seeds, horizon, eo); });
  const auto verdict = bcsync::quasi_sync_im_check(result.stats, rc.model.epsilon, rc.tail_fraction);
  fmt::print("{}\n", json{{"output_dir", out.string()},
                          {"replicas", seeds.size()},
                          {"horizon", horizon},
                          {"fingerprint", manifest.fingerprint},
                          {"quasi_sync_im", verdict.pass},
                          {"margin", verdict.margin},
                          {"worst_upper", verdict.worst_upper}}
                         .dump(2));
  return 0;
}

int cmd_plot(const std::string& input, const std::string& mode, const std::string& out, std::size_t replica) {
  const fs::path dir(input);
  bcsync::SvgOptions opt;
  if (mode == "agents") {
    const fs::path snaps = dir / (bcsync::replica_file_stem(replica) + "_snapshots.csv");
    if (!fs::exists(snaps)) throw bcsync::ModelError(fmt::format("{} has no snapshots for replica {}", input, replica));
    bcsync::TrajectoryRecord rec;
    bcsync::parse_snapshots_csv_text(bcsync::read_file(snaps), rec);
    opt.title = fmt::format("opinions, replica {}", replica);
    bcsync::render_svg(rec, out, opt);
  } else {
    const fs::path summary = dir / "summary.json";
    if (!fs::exists(summary)) throw bcsync::ModelError(fmt::format("{} has no summary.json", input));
    const json doc = json::parse(bcsync::read_file(summary));
    opt.title = fmt::format("mean diameter, {} replicas", doc.at("replicas").get<std::size_t>());
    bcsync::render_svg(bcsync::stats_from_summary(doc), doc.at("epsilon").get<double>(), out, opt);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bounded-confidence opinion dynamics with random communication and bounded noise"};
  app.set_version_flag("--version", std::string(bcsync::kToolVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> horizon;
  std::optional<std::string> out;

  auto* run = app.add_subcommand("run", "Simulate one trajectory");
  run->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Seed (default: config seed, then BCSYNC_SEED, then 1)");
  run->add_option("--horizon", horizon, "Number of steps");
  run->add_option("--out", out, "Output directory");

  std::optional<std::size_t> replicas;
  std::vector<std::uint64_t> seeds;
  std::size_t threads = 1;
  auto* ensemble = app.add_subcommand("ensemble", "Simulate independent replicas and aggregate d_V");
  ensemble->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  ensemble->add_option("--replicas", replicas, "Replica count")->check(CLI::Range(2, 1 << 30));
  ensemble->add_option("--seeds", seeds, "Explicit distinct seeds")->delimiter(',');
  ensemble->add_option("--seed", seed, "Base seed for derived seeds");
  ensemble->add_option("--horizon", horizon, "Number of steps");
  ensemble->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  ensemble->add_option("--out", out, "Output directory");

  std::string check;
  bcsync::VerifyOptions vo;
  std::optional<std::size_t> v_replicas;
  std::optional<double> v_tail;
  auto* verify = app.add_subcommand("verify", "Check a synchronization result empirically");
  verify->add_option("check", check, "Which result")->required()->check(CLI::IsMember(bcsync::verify_subcommands()));
  verify->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  verify->add_flag("--strict", vo.strict, "Reject options outside the hypotheses");
  verify->add_option("--seed", seed, "Base seed");
  verify->add_option("--replicas", v_replicas, "Replicas (im, large-noise)");
  verify->add_option("--horizon", horizon, "Horizon (im, large-noise)");
  verify->add_option("--tail-fraction", v_tail, "Tail window fraction");
  verify->add_option("--threads", vo.threads, "Worker threads")->check(CLI::PositiveNumber);
  verify->add_option("--z", vo.z, "Confidence multiplier");
  verify->add_option("--mu", vo.mu, "Target level mu in (0,1]");
  verify->add_option("--lambda", vo.lambda, "Region size lambda in (0,1]");
  verify->add_option("--a", vo.a, "Protocol noise atom");
  verify->add_option("--runs", vo.runs, "Runs (lemma3, lemma2)");
  verify->add_option("--lemma2-horizon", vo.lemma2_horizon, "Hitting horizon (lemma2)");
  verify->add_option("--windows", vo.windows, "Restart windows (as-failure)");
  verify->add_option("--p", vo.p, "Tail mass (large-noise)");
  verify->add_option("--steps", vo.steps, "Samples (prob-A)");
  verify->add_option("--adaptive-threshold", vo.adaptive_threshold, "Grow the horizon until d_V hits this (im)");
  verify->add_option("--horizon-cap", vo.horizon_cap, "Adaptive horizon cap (im)");
  verify->add_option("--out", out, "Also write the verdict JSON here");

  std::string input;
  std::string mode;
  std::string plot_out;
  std::size_t replica = 0;
  auto* plot = app.add_subcommand("plot", "Render an SVG from an output directory");
  plot->add_option("--input", input, "Output directory of run or ensemble")->required()->check(CLI::ExistingDirectory);
  plot->add_option("--mode", mode, "agents or diameter")->required()->check(CLI::IsMember({"agents", "diameter"}));
  plot->add_option("--out", plot_out, "SVG path")->required();
  plot->add_option("--replica", replica, "Replica for agents mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  try {
    if (*run) return cmd_run(config_path, seed, horizon, out);
    if (*ensemble) return cmd_ensemble(config_path, replicas, seeds, seed, horizon, threads, out);
    if (*plot) return cmd_plot(input, mode, plot_out, replica);

    const auto rc = bcsync::load_config(config_path);
    vo.seed = base_seed(seed, rc);
    vo.replicas = v_replicas.value_or(rc.replicas);
    vo.horizon = horizon.value_or(rc.horizon);
    vo.tail_fraction = v_tail.value_or(rc.tail_fraction);
    vo.initial = rc.initial;
    const json verdict = bcsync::verify(check, rc.model, vo);
    const std::string text = verdict.dump(2) + "\n";
    if (out) bcsync::write_file_atomic(*out, text);
    std::cout << text;
    return verdict.at("pass").get<bool>() ? 0 : kExitFail;
  } catch (const bcsync::InfeasibleOptions& e) {
    std::cerr << "bcsync: infeasible options: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "bcsync: " << e.what() << "\n";
    return kExitError;
  }
}
