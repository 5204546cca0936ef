#pragma once

// Configuration ingestion, seeded trajectory and ensemble execution, and
// persistence of results (CSV, summary JSON, SVG).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bcsync/metrics.hpp"
#include "bcsync/model.hpp"

namespace bcsync {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Everything a config file specifies: the model plus run parameters.
struct RunConfig {
  ModelConfig model;
  std::size_t horizon = 1000;
  std::size_t replicas = 100;
  std::vector<std::uint64_t> seeds;
  std::optional<std::uint64_t> seed;
  std::size_t snapshot_stride = 0;  // 0 selects default_snapshot_stride(horizon)
  double tail_fraction = 0.25;
  std::optional<std::vector<double>> initial;
};

RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

/// Parses "uniform", "fixed:k" or an explicit array of n+1 probabilities.
CommunicationRule parse_size_probs(const nlohmann::json& value, std::size_t n);

nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const TheoryConstants& constants);

/// FNV-1a 64 over the canonical JSON of the model, as 16 hex digits.
std::string fingerprint(const ModelConfig& config);

std::size_t default_snapshot_stride(std::size_t horizon);

/// Distinct seeds base, base+1, ...
std::vector<std::uint64_t> derive_seeds(std::uint64_t base, std::size_t count);

/// One trajectory of the stochastic dynamics. Communicating sets, inertia
/// and noise come from separate streams keyed by (seed, replica).
class Simulation {
 public:
  Simulation(ModelConfig config, std::uint64_t seed, std::size_t replica = 0,
             const std::optional<std::vector<double>>& initial = std::nullopt);

  const ModelConfig& config() const noexcept { return config_; }
  const OpinionState& state() const noexcept { return state_; }
  RngStream& stream(StreamPurpose purpose);

  /// Samples U(t), then alpha_i(t), then xi(t+1).
  StepInputs draw_inputs();
  void apply(const StepInputs& inputs) { state_ = step(state_, inputs, config_); }
  void advance() { apply(draw_inputs()); }

 private:
  ModelConfig config_;
  OpinionState state_;
  RngStream comm_;
  RngStream inertia_;
  RngStream noise_;
  RngStream protocol_;
  RngStream aux_;
};

struct TrajectoryRecord {
  std::string fingerprint;
  std::uint64_t seed = 0;
  std::size_t replica = 0;
  std::size_t horizon = 0;
  DiameterSeries diameter;  // t = 0..horizon
  std::vector<double> min_opinion;
  std::vector<double> max_opinion;
  std::vector<double> mean_opinion;
  std::size_t snapshot_stride = 0;
  std::vector<std::size_t> snapshot_times;
  std::vector<std::vector<double>> snapshots;
};

struct TrajectoryOptions {
  std::size_t replica = 0;
  std::size_t snapshot_stride = 0;  // 0: no snapshots
  std::optional<std::vector<double>> initial;
};

TrajectoryRecord run_trajectory(const ModelConfig& config, std::uint64_t seed, std::size_t horizon,
                                const TrajectoryOptions& options = {});

struct EnsembleOptions {
  /// Worker threads; 1 runs replicas in order on the calling thread.
  std::size_t threads = 1;
  /// Fold replicas in index order regardless of threads (bit-exact).
  bool sequential_reduction = true;
  std::size_t snapshot_stride = 0;
  std::optional<std::vector<double>> initial;
  double z = 3.0;
  /// When false, per-replica series are released once folded; records keep
  /// only their metadata. Forces merge reduction when threads > 1.
  bool keep_records = true;
  /// Called once per finished replica, possibly from a worker thread.
  std::function<void(const TrajectoryRecord&)> on_record;
};

struct EnsembleResult {
  EnsembleStats stats;
  std::vector<TrajectoryRecord> records;
};

/// Replica r uses seeds[r] and stream id r. Seeds must be distinct.
EnsembleResult run_ensemble(const ModelConfig& config, std::span<const std::uint64_t> seeds, std::size_t horizon,
                            const EnsembleOptions& options = {});

struct RunManifest {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::size_t replicas = 0;
  std::size_t horizon = 0;
  std::string output_dir;
  std::string fingerprint;
  std::string tool_version{kToolVersion};
};

nlohmann::json to_json(const RunManifest& manifest);

// ---------------------------------------------------------------------------
// Files

/// Columns t, d_V, min_opinion, max_opinion, mean_opinion; LF endings;
/// shortest round-trip decimals.
std::string csv_text(const TrajectoryRecord& record);
void export_csv(const TrajectoryRecord& record, const std::filesystem::path& path);

struct CsvSeries {
  std::vector<std::size_t> t;
  std::vector<double> diameter;
  std::vector<double> min_opinion;
  std::vector<double> max_opinion;
  std::vector<double> mean_opinion;
};

CsvSeries parse_csv_text(std::string_view text);
CsvSeries parse_csv(const std::filesystem::path& path);

/// Columns t, x0..x{n-1}, one row per snapshot.
std::string snapshots_csv_text(const TrajectoryRecord& record);
/// Restores snapshot_times and snapshots from snapshots_csv_text output.
void parse_snapshots_csv_text(std::string_view text, TrajectoryRecord& record);

nlohmann::json summary_json(const EnsembleResult& result, const ModelConfig& config, double tail_fraction);
/// Rebuilds the per-step stats stored by summary_json.
EnsembleStats stats_from_summary(const nlohmann::json& summary);

struct SvgOptions {
  int width = 800;
  int height = 480;
  std::string title;
};

/// Every agent's opinion over time from the snapshots.
std::string render_svg_agents(const TrajectoryRecord& record, const SvgOptions& options = {});
/// Ensemble mean d_V with its confidence band and a horizontal epsilon line.
std::string render_svg_diameter(const EnsembleStats& stats, double epsilon, const SvgOptions& options = {});

void render_svg(const TrajectoryRecord& record, const std::filesystem::path& path, const SvgOptions& options = {});
void render_svg(const EnsembleStats& stats, double epsilon, const std::filesystem::path& path,
                const SvgOptions& options = {});

std::string read_file(const std::filesystem::path& path);
/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// An output directory assembled in a staging sibling and renamed into
/// place on commit. Uncommitted staging directories are removed.
class StagedOutput {
 public:
  explicit StagedOutput(std::filesystem::path final_dir);
  ~StagedOutput();
  StagedOutput(const StagedOutput&) = delete;
  StagedOutput& operator=(const StagedOutput&) = delete;

  const std::filesystem::path& staging_dir() const noexcept { return staging_; }
  void write(const std::string& name, std::string_view content);
  /// Replaces final_dir. An existing final_dir must hold a manifest.json.
  void commit();

 private:
  std::filesystem::path final_;
  std::filesystem::path staging_;
  bool committed_ = false;
};

/// Writes manifest.json, replica_XXXX.csv (+ _snapshots.csv when present)
/// and summary.json into `dir` atomically. The manifest is staged before
/// `compute` runs.
template <class Compute>
EnsembleResult run_and_write(const std::filesystem::path& dir, const RunManifest& manifest, const ModelConfig& config,
                             double tail_fraction, Compute&& compute);

std::string replica_file_stem(std::size_t replica);
void write_ensemble_files(StagedOutput& out, const EnsembleResult& result, const ModelConfig& config,
                          double tail_fraction);

template <class Compute>
EnsembleResult run_and_write(const std::filesystem::path& dir, const RunManifest& manifest, const ModelConfig& config,
                             double tail_fraction, Compute&& compute) {
  StagedOutput out(dir);
  out.write("manifest.json", to_json(manifest).dump(2) + "\n");
  EnsembleResult result = compute();
  write_ensemble_files(out, result, config, tail_fraction);
  out.commit();
  return result;
}

}  // namespace bcsync
