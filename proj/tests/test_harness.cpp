#include <gtest/gtest.h>

#include <filesystem>

#include "bcsync/harness.hpp"
#include "bcsync/presets.hpp"

using namespace bcsync;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bcsync_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ModelConfig small_async() {
  return general_preset(6, 0.2, 0.02, CommunicationRule::uniform(6), InertiaPolicy::hk_rule());
}

}  // namespace

TEST(Config, ParsesPresetsAndShorthands) {
  const auto hk = parse_config(json::parse(R"({"preset":"hk","n":5,"epsilon":0.3,"delta":0.01,"horizon":50})"));
  EXPECT_EQ(hk.model.preset, PresetName::hk);
  EXPECT_EQ(hk.model.comm.p(5), 1.0);
  EXPECT_EQ(hk.horizon, 50u);

  const auto dw = parse_config(json::parse(R"({"preset":"dw","n":4,"epsilon":0.2,"beta":0.5,"delta":0.01})"));
  EXPECT_EQ(dw.model.comm.p(2), 1.0);
  EXPECT_EQ(*dw.model.beta, 0.5);

  const auto g = parse_config(json::parse(
      R"({"n":3,"epsilon":0.3,"noise":{"kind":"two_point","delta":0.25},"size_probs":"fixed:2","inertia":0.3,"alpha":0.3})"));
  EXPECT_EQ(g.model.noise.kind(), NoiseKind::two_point);
  EXPECT_EQ(g.model.comm.p(2), 1.0);
  EXPECT_EQ(g.model.inertia.kind, InertiaKind::constant);

  const auto arr = parse_config(json::parse(R"({"n":2,"epsilon":0.3,"delta":0.1,"size_probs":[0,0.2,0.8]})"));
  EXPECT_DOUBLE_EQ(arr.model.comm.p(1), 0.2);

  const auto init = parse_config(json::parse(R"({"n":2,"epsilon":0.3,"delta":0.1,"initial":[0.1,0.9]})"));
  ASSERT_TRUE(init.initial.has_value());
  EXPECT_EQ((*init.initial)[1], 0.9);
}

TEST(Config, RejectsBadInput) {
  const auto bad = [](const char* text) { return parse_config(json::parse(text)); };
  EXPECT_THROW(bad(R"({"n":3,"epsilon":0.3,"delta":0.1,"colour":1})"), ModelError);
  EXPECT_THROW(bad(R"({"epsilon":0.3,"delta":0.1})"), ModelError);
  EXPECT_THROW(bad(R"({"preset":"hk","n":3,"epsilon":0.3,"delta":0.1,"size_probs":"uniform"})"), ModelError);
  EXPECT_THROW(bad(R"({"preset":"xx","n":3,"epsilon":0.3,"delta":0.1})"), ModelError);
  EXPECT_THROW(bad(R"({"n":3,"epsilon":0.3,"delta":0.1,"size_probs":[0.5,0.5,0,0]})"), ModelError);
  EXPECT_THROW(bad(R"({"n":3,"epsilon":0.3,"delta":0.1,"size_probs":"fixed:x"})"), ModelError);
  EXPECT_THROW(bad(R"({"n":3,"epsilon":0.3,"delta":0.1,"horizon":0})"), ModelError);
  EXPECT_THROW(bad(R"({"n":3,"epsilon":"wide","delta":0.1})"), ModelError);
  EXPECT_THROW(bad(R"({"n":2,"epsilon":0.3,"delta":0.1,"initial":[0.1]})"), ModelError);
  EXPECT_THROW(bad(R"({"n":2,"epsilon":0.3,"delta":0.1,"tail_fraction":1.0})"), ModelError);
}

TEST(Fingerprint, StableAndSensitive) {
  const ModelConfig a = small_async();
  EXPECT_EQ(fingerprint(a), fingerprint(small_async()));
  EXPECT_EQ(fingerprint(a).size(), 16u);
  EXPECT_NE(fingerprint(a), fingerprint(with_noise(a, NoiseModel::uniform(0.03))));
}

TEST(Seeds, DerivedAreDistinct) {
  const auto s = derive_seeds(10, 4);
  EXPECT_EQ(s, (std::vector<std::uint64_t>{10, 11, 12, 13}));
}

TEST(RunTrajectory, DeterministicAndShaped) {
  TrajectoryOptions opt;
  opt.snapshot_stride = 7;
  const auto a = run_trajectory(small_async(), 5, 50, opt);
  const auto b = run_trajectory(small_async(), 5, 50, opt);
  EXPECT_EQ(a.diameter, b.diameter);
  EXPECT_EQ(a.snapshots, b.snapshots);
  EXPECT_EQ(a.diameter.size(), 51u);
  EXPECT_EQ(a.fingerprint, fingerprint(small_async()));
  EXPECT_EQ(a.snapshot_times.front(), 0u);
  EXPECT_EQ(a.snapshot_times.back(), 50u);
  for (std::size_t t = 0; t <= 50; ++t) {
    EXPECT_GE(a.diameter[t], 0.0);
    EXPECT_LE(a.diameter[t], 1.0);
    EXPECT_NEAR(a.diameter[t], a.max_opinion[t] - a.min_opinion[t], 1e-15);
  }
  const auto c = run_trajectory(small_async(), 6, 50, opt);
  EXPECT_NE(a.diameter, c.diameter);
  EXPECT_THROW(run_trajectory(small_async(), 5, 0), ModelError);
}

TEST(RunTrajectory, ExplicitInitialState) {
  TrajectoryOptions opt;
  opt.initial = std::vector<double>{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  const auto r = run_trajectory(small_async(), 1, 3, opt);
  EXPECT_EQ(r.diameter[0], 1.0);
  opt.initial = std::vector<double>{0.5};
  EXPECT_THROW(run_trajectory(small_async(), 1, 3, opt), ModelError);
}

TEST(RunTrajectory, NoiseFreeHkDiameterNonIncreasing) {
  for (std::size_t n = 2; n <= 5; ++n) {
    const ModelConfig c = with_noise(hk_preset(n, 0.25, 0.01), NoiseModel::none());
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto r = run_trajectory(c, seed, 30);
      for (std::size_t t = 1; t < r.diameter.size(); ++t) EXPECT_LE(r.diameter[t], r.diameter[t - 1] + 1e-15);
    }
  }
}

TEST(RunEnsemble, BasicContract) {
  const std::vector<std::uint64_t> two{1, 2};
  const auto res = run_ensemble(small_async(), two, 20);
  EXPECT_EQ(res.stats.replicas, 2u);
  EXPECT_EQ(res.records.size(), 2u);
  EXPECT_EQ(res.records[1].replica, 1u);
  const std::vector<std::uint64_t> dup{3, 3};
  EXPECT_THROW(run_ensemble(small_async(), dup, 20), ModelError);
  const std::vector<std::uint64_t> one{3};
  EXPECT_THROW(run_ensemble(small_async(), one, 20), ModelError);
}

TEST(RunEnsemble, ParallelMatchesSequential) {
  const auto seeds = derive_seeds(40, 12);
  EnsembleOptions seq;
  const auto a = run_ensemble(small_async(), seeds, 300, seq);
  EnsembleOptions par;
  par.threads = 4;
  par.sequential_reduction = false;
  const auto b = run_ensemble(small_async(), seeds, 300, par);
  for (std::size_t r = 0; r < seeds.size(); ++r) EXPECT_EQ(a.records[r].diameter, b.records[r].diameter);
  for (std::size_t t = 0; t <= 300; ++t) {
    EXPECT_NEAR(a.stats.mean[t], b.stats.mean[t], 1e-12);
    EXPECT_NEAR(a.stats.variance[t], b.stats.variance[t], 1e-12);
  }
  par.sequential_reduction = true;
  const auto c = run_ensemble(small_async(), seeds, 300, par);
  EXPECT_EQ(a.stats.mean, c.stats.mean);
}

TEST(RunEnsemble, StreamingRecordsMatchKept) {
  const auto seeds = derive_seeds(7, 5);
  const auto kept = run_ensemble(small_async(), seeds, 100);
  EnsembleOptions opt;
  opt.keep_records = false;
  std::vector<double> finals(seeds.size());
  opt.on_record = [&](const TrajectoryRecord& r) { finals[r.replica] = r.diameter.back(); };
  const auto streamed = run_ensemble(small_async(), seeds, 100, opt);
  EXPECT_EQ(kept.stats.mean, streamed.stats.mean);
  for (std::size_t r = 0; r < seeds.size(); ++r) {
    EXPECT_EQ(finals[r], kept.records[r].diameter.back());
    EXPECT_TRUE(streamed.records[r].diameter.empty());
  }
}

TEST(Csv, LayoutAndRoundTrip) {
  const auto rec = run_trajectory(small_async(), 3, 10);
  const std::string text = csv_text(rec);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 12);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,d_V,min_opinion,max_opinion,mean_opinion");

  const fs::path dir = scratch("csv");
  export_csv(rec, dir / "a.csv");
  const std::string first = read_file(dir / "a.csv");
  export_csv(rec, dir / "a.csv");
  EXPECT_EQ(first, read_file(dir / "a.csv"));

  const CsvSeries back = parse_csv(dir / "a.csv");
  EXPECT_EQ(back.diameter, rec.diameter);
  EXPECT_EQ(back.min_opinion, rec.min_opinion);
  EXPECT_EQ(back.max_opinion, rec.max_opinion);
  EXPECT_EQ(back.mean_opinion, rec.mean_opinion);
  EXPECT_EQ(back.t.back(), 10u);
  EXPECT_THROW(parse_csv_text("t,d_V\n0,abc\n"), ModelError);
}

TEST(Csv, SnapshotsRoundTrip) {
  TrajectoryOptions opt;
  opt.snapshot_stride = 3;
  const auto rec = run_trajectory(small_async(), 3, 10, opt);
  TrajectoryRecord back;
  parse_snapshots_csv_text(snapshots_csv_text(rec), back);
  EXPECT_EQ(back.snapshot_times, rec.snapshot_times);
  EXPECT_EQ(back.snapshots, rec.snapshots);
}

TEST(Summary, RoundTripsStats) {
  const auto res = run_ensemble(small_async(), derive_seeds(1, 3), 40);
  const json doc = summary_json(res, small_async(), 0.25);
  EXPECT_EQ(doc.at("schema"), "bcsync.summary/1");
  const EnsembleStats back = stats_from_summary(json::parse(doc.dump()));
  EXPECT_EQ(back.mean, res.stats.mean);
  EXPECT_EQ(back.half_width, res.stats.half_width);
  EXPECT_EQ(back.replicas, 3u);
}

TEST(Svg, DeterministicAndValidated) {
  TrajectoryOptions opt;
  opt.snapshot_stride = 5;
  const auto rec = run_trajectory(small_async(), 3, 100, opt);
  const std::string a = render_svg_agents(rec);
  EXPECT_EQ(a, render_svg_agents(rec));
  EXPECT_NE(a.find("<svg"), std::string::npos);
  EXPECT_NE(a.find("</svg>"), std::string::npos);

  const auto no_snaps = run_trajectory(small_async(), 3, 100);
  EXPECT_THROW(render_svg_agents(no_snaps), ModelError);

  const auto res = run_ensemble(small_async(), derive_seeds(1, 4), 100);
  const std::string d = render_svg_diameter(res.stats, 0.2);
  EXPECT_EQ(d, render_svg_diameter(res.stats, 0.2));
  EXPECT_THROW(render_svg_diameter(EnsembleStats{}, 0.2), ModelError);
}

TEST(StagedOutput, CommitsAtomicallyAndCleansUp) {
  const fs::path root = scratch("staged");
  const fs::path dir = root / "out";
  {
    StagedOutput s(dir);
    s.write("manifest.json", "{}\n");
    EXPECT_FALSE(fs::exists(dir));
  }
  EXPECT_FALSE(fs::exists(dir));
  EXPECT_TRUE(fs::is_empty(root));

  RunManifest m;
  m.seeds = {1, 2};
  m.replicas = 2;
  m.horizon = 10;
  const auto res = run_and_write(dir, m, small_async(), 0.25,
                                 [&] { return run_ensemble(small_async(), m.seeds, m.horizon); });
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "replica_0001.csv"));
  EXPECT_TRUE(fs::exists(dir / "summary.json"));

  EXPECT_THROW(run_and_write(dir, m, small_async(), 0.25,
                             [&]() -> EnsembleResult { throw ModelError("boom"); }),
               ModelError);
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
  EXPECT_FALSE(fs::exists(root / ".out.partial"));

  const fs::path foreign = root / "foreign";
  fs::create_directories(foreign);
  StagedOutput s(foreign);
  EXPECT_THROW(s.commit(), std::runtime_error);
}
