#include "bcsync/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "bcsync/presets.hpp"

namespace bcsync {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

namespace {

template <class T>
T require(const json& doc, const char* key) {
  if (!doc.contains(key)) throw ModelError(fmt::format("config is missing required key \"{}\"", key));
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ModelError(fmt::format("config key \"{}\" has the wrong type: {}", key, e.what()));
  }
}

NoiseModel parse_noise(const json& doc) {
  const json spec = doc.contains("noise") ? doc.at("noise") : json("uniform");
  std::string kind;
  const json* holder = &doc;
  if (spec.is_string()) {
    kind = spec.get<std::string>();
  } else if (spec.is_object()) {
    kind = require<std::string>(spec, "kind");
    holder = &spec;
  } else {
    throw ModelError("config key \"noise\" must be a kind name or an object");
  }
  if (kind == "none") return NoiseModel::none();
  if (kind == "custom_discrete") {
    return NoiseModel::discrete(require<std::vector<double>>(*holder, "atoms"),
                                require<std::vector<double>>(*holder, "weights"));
  }
  const double delta = holder->contains("delta") ? require<double>(*holder, "delta") : require<double>(doc, "delta");
  if (kind == "uniform") return NoiseModel::uniform(delta);
  if (kind == "two_point") return NoiseModel::two_point(delta);
  throw ModelError(fmt::format("unknown noise kind \"{}\" (expected none, uniform, two_point, custom_discrete)", kind));
}

InertiaPolicy parse_inertia(const json& value, double alpha) {
  if (value.is_number()) return InertiaPolicy::constant(value.get<double>());
  std::string kind;
  if (value.is_string()) {
    kind = value.get<std::string>();
  } else if (value.is_object()) {
    kind = require<std::string>(value, "kind");
  } else {
    throw ModelError("config key \"inertia\" must be a kind name, a number or an object");
  }
  if (kind == "hk_rule") return InertiaPolicy::hk_rule();
  if (kind == "constant") return InertiaPolicy::constant(require<double>(value, "value"));
  if (kind == "uniform_interval") return InertiaPolicy::uniform_interval(alpha);
  throw ModelError(fmt::format("unknown inertia kind \"{}\" (expected hk_rule, constant, uniform_interval)", kind));
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "preset", "n",        "epsilon", "delta",           "noise",         "size_probs", "inertia", "beta",
      "alpha",  "horizon",  "replicas", "seeds",          "seed",          "snapshot_stride", "tail_fraction",
      "initial", "degenerate"};
  return keys;
}

}  // namespace

CommunicationRule parse_size_probs(const json& value, std::size_t n) {
  if (value.is_array()) {
    auto probs = value.get<std::vector<double>>();
    if (probs.size() != n + 1) {
      throw ModelError(fmt::format("size_probs needs n+1 = {} entries, got {}", n + 1, probs.size()));
    }
    return CommunicationRule(std::move(probs));
  }
  if (!value.is_string()) throw ModelError("size_probs must be an array, \"uniform\" or \"fixed:k\"");
  const auto text = value.get<std::string>();
  if (text == "uniform") return CommunicationRule::uniform(n);
  if (text.rfind("fixed:", 0) == 0) {
    std::size_t k = 0;
    const char* first = text.data() + 6;
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, k);
    if (ec != std::errc{} || ptr != last || first == last) throw ModelError("malformed size_probs \"" + text + "\"");
    return CommunicationRule::fixed(n, k);
  }
  throw ModelError("unknown size_probs shorthand \"" + text + "\"");
}

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ModelError("config must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!known_keys().contains(key)) throw ModelError(fmt::format("unknown config key \"{}\"", key));
  }
  const auto preset = doc.value("preset", std::string("general"));
  const auto n = require<std::size_t>(doc, "n");
  const auto epsilon = require<double>(doc, "epsilon");
  const NoiseModel noise = parse_noise(doc);
  const auto reject = [&](const char* key) {
    if (doc.contains(key)) throw ModelError(fmt::format("\"{}\" is fixed by the {} preset", key, preset));
  };

  RunConfig rc;
  if (preset == "hk") {
    reject("size_probs");
    reject("inertia");
    reject("beta");
    rc.model = with_noise(hk_preset(n, epsilon, 1.0), noise);
  } else if (preset == "dw") {
    reject("size_probs");
    reject("inertia");
    rc.model = with_noise(dw_preset(n, epsilon, require<double>(doc, "beta"), 1.0, doc.value("degenerate", false)), noise);
  } else if (preset == "general") {
    reject("beta");
    const double alpha = doc.contains("alpha") ? require<double>(doc, "alpha") : 1.0 / static_cast<double>(n);
    const auto rule = parse_size_probs(doc.contains("size_probs") ? doc.at("size_probs") : json("uniform"), n);
    const auto inertia = parse_inertia(doc.contains("inertia") ? doc.at("inertia") : json("hk_rule"), alpha);
    const std::optional<double> alpha_opt =
        doc.contains("alpha") ? std::optional<double>(alpha) : std::optional<double>();
    rc.model = with_noise(general_preset(n, epsilon, 1.0, rule, inertia, alpha_opt), noise);
  } else {
    throw ModelError(fmt::format("unknown preset \"{}\" (expected hk, dw, general)", preset));
  }
  if (preset != "general" && doc.contains("alpha")) {
    rc.model.alpha = require<double>(doc, "alpha");
    rc.model.validate();
  }

  rc.horizon = doc.value("horizon", rc.horizon);
  if (rc.horizon == 0) throw ModelError("horizon must be >= 1");
  rc.replicas = doc.value("replicas", rc.replicas);
  if (doc.contains("seeds")) rc.seeds = require<std::vector<std::uint64_t>>(doc, "seeds");
  if (doc.contains("seed")) rc.seed = require<std::uint64_t>(doc, "seed");
  rc.snapshot_stride = doc.value("snapshot_stride", std::size_t{0});
  rc.tail_fraction = doc.value("tail_fraction", rc.tail_fraction);
  if (!(rc.tail_fraction > 0.0 && rc.tail_fraction < 1.0)) throw ModelError("tail_fraction must lie in (0,1)");
  if (doc.contains("initial")) {
    auto init = require<std::vector<double>>(doc, "initial");
    if (init.size() != n) throw ModelError(fmt::format("initial needs {} opinions, got {}", n, init.size()));
    (void)OpinionState(init);
    rc.initial = std::move(init);
  }
  return rc;
}

RunConfig load_config(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ModelError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }
  return parse_config(doc);
}

json to_json(const ModelConfig& c) {
  json j;
  j["preset"] = to_string(c.preset);
  j["n"] = c.n;
  j["epsilon"] = c.epsilon;
  j["alpha"] = c.alpha;
  j["inertia"] = {{"kind", to_string(c.inertia.kind)}, {"value", c.inertia.value}, {"lo", c.inertia.lo},
                  {"hi", c.inertia.hi}};
  j["noise"] = {{"kind", to_string(c.noise.kind())},
                {"delta", c.noise.delta()},
                {"atoms", std::vector<double>(c.noise.atoms().begin(), c.noise.atoms().end())},
                {"weights", std::vector<double>(c.noise.weights().begin(), c.noise.weights().end())}};
  j["size_probs"] = std::vector<double>(c.comm.size_probs().begin(), c.comm.size_probs().end());
  j["beta"] = c.beta ? json(*c.beta) : json(nullptr);
  j["allow_unit_inertia"] = c.allow_unit_inertia;
  return j;
}

json to_json(const TheoryConstants& c) {
  json j;
  j["mu"] = c.mu;
  j["lambda"] = c.lambda;
  j["L0"] = c.L0;
  j["p_tilde"] = c.p_tilde;
  j["L"] = c.L;
  j["delta_bar"] = c.delta_bar;
  j["escape_p_tilde"] = c.escape_p_tilde;
  j["a"] = c.a ? json(*c.a) : json(nullptr);
  j["p_bar"] = c.p_bar ? json(*c.p_bar) : json(nullptr);
  j["t_L"] = c.t_L ? json(*c.t_L) : json(nullptr);
  j["lemma3_delta_max"] = c.lemma3_delta_max;
  j["lemma3_start_max"] = c.lemma3_start_max;
  j["lemma3_contracted"] = c.lemma3_contracted;
  j["lemma2_delta_max"] = c.lemma2_delta_max;
  return j;
}

std::string fingerprint(const ModelConfig& config) {
  const std::string canonical = to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return fmt::format("{:016x}", h);
}

std::size_t default_snapshot_stride(std::size_t horizon) { return std::max<std::size_t>(1, horizon / 400); }

std::vector<std::uint64_t> derive_seeds(std::uint64_t base, std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t i = 0; i < count; ++i) seeds[i] = base + i;
  return seeds;
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

OpinionState initial_state(const ModelConfig& config, std::uint64_t seed, std::size_t replica,
                           const std::optional<std::vector<double>>& initial) {
  if (initial) {
    if (initial->size() != config.n) {
      throw ModelError(fmt::format("initial state has {} opinions, expected {}", initial->size(), config.n));
    }
    return OpinionState(*initial);
  }
  RngStream rng(seed, replica, StreamPurpose::init);
  std::vector<double> x(config.n);
  for (double& v : x) v = rng.uniform01();
  return OpinionState(std::move(x));
}

}  // namespace

Simulation::Simulation(ModelConfig config, std::uint64_t seed, std::size_t replica,
                       const std::optional<std::vector<double>>& initial)
    : config_(std::move(config)),
      comm_(seed, replica, StreamPurpose::comm),
      inertia_(seed, replica, StreamPurpose::inertia),
      noise_(seed, replica, StreamPurpose::noise),
      protocol_(seed, replica, StreamPurpose::protocol),
      aux_(seed, replica, StreamPurpose::aux) {
  config_.validate();
  state_ = initial_state(config_, seed, replica, initial);
}

RngStream& Simulation::stream(StreamPurpose purpose) {
  switch (purpose) {
    case StreamPurpose::comm: return comm_;
    case StreamPurpose::inertia: return inertia_;
    case StreamPurpose::noise: return noise_;
    case StreamPurpose::protocol: return protocol_;
    default: return aux_;
  }
}

StepInputs Simulation::draw_inputs() {
  StepInputs in;
  in.comm_set = sample_comm_set(comm_, config_.comm, config_.n);
  in.inertia = inertia_coefficients(inertia_, config_.inertia, state_, in.comm_set, config_.epsilon);
  in.noise = sample_noise(noise_, config_.noise, config_.n);
  return in;
}

TrajectoryRecord run_trajectory(const ModelConfig& config, std::uint64_t seed, std::size_t horizon,
                                const TrajectoryOptions& options) {
  if (horizon == 0) throw ModelError("horizon must be >= 1");
  Simulation sim(config, seed, options.replica, options.initial);

  TrajectoryRecord rec;
  rec.fingerprint = fingerprint(config);
  rec.seed = seed;
  rec.replica = options.replica;
  rec.horizon = horizon;
  rec.snapshot_stride = options.snapshot_stride;
  rec.diameter.resize(horizon + 1);
  rec.min_opinion.resize(horizon + 1);
  rec.max_opinion.resize(horizon + 1);
  rec.mean_opinion.resize(horizon + 1);

  const auto observe = [&](std::size_t t) {
    const auto x = sim.state().values();
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    double sum = 0.0;
    for (double v : x) sum += v;
    rec.min_opinion[t] = *lo;
    rec.max_opinion[t] = *hi;
    rec.diameter[t] = *hi - *lo;
    rec.mean_opinion[t] = sum / static_cast<double>(x.size());
    if (options.snapshot_stride > 0 && (t % options.snapshot_stride == 0 || t == horizon)) {
      rec.snapshot_times.push_back(t);
      rec.snapshots.emplace_back(x.begin(), x.end());
    }
  };

  observe(0);
  for (std::size_t t = 1; t <= horizon; ++t) {
    sim.advance();
    observe(t);
  }
  return rec;
}

EnsembleResult run_ensemble(const ModelConfig& config, std::span<const std::uint64_t> seeds, std::size_t horizon,
                            const EnsembleOptions& options) {
  if (seeds.size() < 2) throw ModelError("an ensemble needs at least 2 seeds");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw ModelError("ensemble seeds must be distinct");
  if (horizon == 0) throw ModelError("horizon must be >= 1");
  config.validate();

  const std::size_t replicas = seeds.size();
  EnsembleResult result;
  result.records.resize(replicas);

  const auto run_one = [&](std::size_t r) -> TrajectoryRecord& {
    TrajectoryOptions opt;
    opt.replica = r;
    opt.snapshot_stride = options.snapshot_stride;
    opt.initial = options.initial;
    result.records[r] = run_trajectory(config, seeds[r], horizon, opt);
    if (options.on_record) options.on_record(result.records[r]);
    return result.records[r];
  };
  const auto release = [&](TrajectoryRecord& rec) {
    if (options.keep_records) return;
    rec.diameter = {};
    rec.min_opinion = {};
    rec.max_opinion = {};
    rec.mean_opinion = {};
    rec.snapshots = {};
    rec.snapshot_times = {};
  };

  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, replicas);
  if (threads == 1) {
    EnsembleAccumulator acc(horizon + 1);
    for (std::size_t r = 0; r < replicas; ++r) {
      auto& rec = run_one(r);
      acc.add(rec.diameter);
      release(rec);
    }
    result.stats = acc.finish(options.z);
    return result;
  }

  const bool fold_in_order = options.sequential_reduction && options.keep_records;
  std::atomic<std::size_t> next{0};
  std::vector<EnsembleAccumulator> partial(threads, EnsembleAccumulator(horizon + 1));
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t r = next.fetch_add(1); r < replicas; r = next.fetch_add(1)) {
            auto& rec = run_one(r);
            if (!fold_in_order) {
              partial[w].add(rec.diameter);
              release(rec);
            }
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EnsembleAccumulator acc(horizon + 1);
  if (fold_in_order) {
    for (const auto& rec : result.records) acc.add(rec.diameter);
  } else {
    for (const auto& p : partial) acc.merge(p);
  }
  result.stats = acc.finish(options.z);
  return result;
}

json to_json(const RunManifest& m) {
  return json{{"schema", "bcsync.manifest/1"},
              {"config_path", m.config_path},
              {"seeds", m.seeds},
              {"replicas", m.replicas},
              {"horizon", m.horizon},
              {"output_dir", m.output_dir},
              {"fingerprint", m.fingerprint},
              {"tool_version", m.tool_version}};
}

// ---------------------------------------------------------------------------
// Files

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

std::string csv_text(const TrajectoryRecord& rec) {
  std::string out = "t,d_V,min_opinion,max_opinion,mean_opinion\n";
  out.reserve(out.size() + rec.diameter.size() * 80);
  for (std::size_t t = 0; t < rec.diameter.size(); ++t) {
    fmt::format_to(std::back_inserter(out), "{},{},{},{},{}\n", t, rec.diameter[t], rec.min_opinion[t],
                   rec.max_opinion[t], rec.mean_opinion[t]);
  }
  return out;
}

void export_csv(const TrajectoryRecord& record, const fs::path& path) { write_file_atomic(path, csv_text(record)); }

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

double to_double(std::string_view field) {
  const std::string s(field);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ModelError("malformed number \"" + s + "\" in CSV");
  return v;
}

template <class Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    fn(text.substr(start, end - start));
    start = end + 1;
  }
}

}  // namespace

CsvSeries parse_csv_text(std::string_view text) {
  CsvSeries s;
  bool header = true;
  for_each_line(text, [&](std::string_view line) {
    if (header) {
      if (line != "t,d_V,min_opinion,max_opinion,mean_opinion") throw ModelError("unexpected trajectory CSV header");
      header = false;
      return;
    }
    const auto f = split(line, ',');
    if (f.size() != 5) throw ModelError("trajectory CSV rows need 5 columns");
    s.t.push_back(static_cast<std::size_t>(to_double(f[0])));
    s.diameter.push_back(to_double(f[1]));
    s.min_opinion.push_back(to_double(f[2]));
    s.max_opinion.push_back(to_double(f[3]));
    s.mean_opinion.push_back(to_double(f[4]));
  });
  return s;
}

CsvSeries parse_csv(const fs::path& path) { return parse_csv_text(read_file(path)); }

std::string snapshots_csv_text(const TrajectoryRecord& rec) {
  std::string out = "t";
  const std::size_t n = rec.snapshots.empty() ? 0 : rec.snapshots.front().size();
  for (std::size_t i = 0; i < n; ++i) fmt::format_to(std::back_inserter(out), ",x{}", i);
  out += '\n';
  for (std::size_t s = 0; s < rec.snapshots.size(); ++s) {
    fmt::format_to(std::back_inserter(out), "{}", rec.snapshot_times[s]);
    for (double v : rec.snapshots[s]) fmt::format_to(std::back_inserter(out), ",{}", v);
    out += '\n';
  }
  return out;
}

void parse_snapshots_csv_text(std::string_view text, TrajectoryRecord& rec) {
  rec.snapshot_times.clear();
  rec.snapshots.clear();
  bool header = true;
  std::size_t columns = 0;
  for_each_line(text, [&](std::string_view line) {
    const auto f = split(line, ',');
    if (header) {
      if (f.empty() || f[0] != "t") throw ModelError("unexpected snapshot CSV header");
      columns = f.size();
      header = false;
      return;
    }
    if (f.size() != columns) throw ModelError("snapshot CSV row has the wrong number of columns");
    rec.snapshot_times.push_back(static_cast<std::size_t>(to_double(f[0])));
    std::vector<double> x;
    x.reserve(columns - 1);
    for (std::size_t i = 1; i < f.size(); ++i) x.push_back(to_double(f[i]));
    rec.snapshots.push_back(std::move(x));
  });
  if (!rec.snapshot_times.empty()) rec.horizon = rec.snapshot_times.back();
}

json summary_json(const EnsembleResult& result, const ModelConfig& config, double tail_fraction) {
  const auto& s = result.stats;
  const ImVerdict v = quasi_sync_im_check(s, config.epsilon, tail_fraction);
  std::size_t above = 0;
  std::vector<std::uint64_t> seeds;
  for (const auto& rec : result.records) {
    seeds.push_back(rec.seed);
    const auto tail_max = *std::max_element(rec.diameter.begin() + static_cast<std::ptrdiff_t>(v.tail_start),
                                            rec.diameter.end());
    if (tail_max > config.epsilon) ++above;
  }
  json j;
  j["schema"] = "bcsync.summary/1";
  j["tool_version"] = std::string(kToolVersion);
  j["fingerprint"] = fingerprint(config);
  j["config"] = to_json(config);
  j["horizon"] = s.steps() - 1;
  j["replicas"] = s.replicas;
  j["seeds"] = seeds;
  j["confidence_z"] = s.z;
  j["epsilon"] = config.epsilon;
  j["tail_fraction"] = tail_fraction;
  j["verdict"] = {{"quasi_sync_im", v.pass},
                  {"margin", v.margin},
                  {"worst_upper", v.worst_upper},
                  {"worst_step", v.worst_step},
                  {"tail_start", v.tail_start},
                  {"replicas_tail_max_above_epsilon", above}};
  j["steps"] = {{"mean", s.mean},       {"variance", s.variance}, {"min", s.min},
                {"max", s.max},         {"half_width", s.half_width}};
  return j;
}

EnsembleStats stats_from_summary(const json& summary) {
  EnsembleStats s;
  const auto& steps = summary.at("steps");
  s.replicas = summary.at("replicas").get<std::size_t>();
  s.z = summary.at("confidence_z").get<double>();
  s.mean = steps.at("mean").get<std::vector<double>>();
  s.variance = steps.at("variance").get<std::vector<double>>();
  s.min = steps.at("min").get<std::vector<double>>();
  s.max = steps.at("max").get<std::vector<double>>();
  s.half_width = steps.at("half_width").get<std::vector<double>>();
  return s;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

struct Frame {
  double left = 60, right = 20, top = 36, bottom = 44;
  double width, height;
  double t_max;
  double y_max;

  double x(double t) const { return left + (t_max > 0 ? t / t_max : 0.0) * (width - left - right); }
  double y(double v) const { return top + (1.0 - v / y_max) * (height - top - bottom); }
};

std::string svg_open(const Frame& f, const std::string& title) {
  std::string out = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\">\n"
      "<rect x=\"0\" y=\"0\" width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n",
      f.width, f.height);
  if (!title.empty()) {
    fmt::format_to(std::back_inserter(out),
                   "<text x=\"{:.2f}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" "
                   "text-anchor=\"middle\">{}</text>\n",
                   f.width / 2, title);
  }
  return out;
}

void svg_axes(std::string& out, const Frame& f, const std::string& y_label) {
  fmt::format_to(std::back_inserter(out),
                 "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" stroke=\"black\"/>\n",
                 f.left, f.top, f.width - f.left - f.right, f.height - f.top - f.bottom);
  for (int i = 0; i <= 4; ++i) {
    const double v = f.y_max * i / 4.0;
    fmt::format_to(std::back_inserter(out),
                   "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
                   "text-anchor=\"end\">{:.3g}</text>\n",
                   f.left - 6, f.y(v) + 4, v);
  }
  for (int i = 0; i <= 5; ++i) {
    const double t = f.t_max * i / 5.0;
    fmt::format_to(std::back_inserter(out),
                   "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
                   "text-anchor=\"middle\">{:.0f}</text>\n",
                   f.x(t), f.height - f.bottom + 16, t);
  }
  fmt::format_to(std::back_inserter(out),
                 "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
                 "text-anchor=\"middle\">t</text>\n",
                 (f.left + f.width - f.right) / 2, f.height - 8);
  fmt::format_to(std::back_inserter(out),
                 "<text x=\"14\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
                 "transform=\"rotate(-90 14 {:.2f})\">{}</text>\n",
                 (f.top + f.height - f.bottom) / 2, (f.top + f.height - f.bottom) / 2, y_label);
}

std::vector<std::size_t> plot_indices(std::size_t count, std::size_t max_points) {
  std::vector<std::size_t> idx;
  const std::size_t stride = std::max<std::size_t>(1, (count + max_points - 1) / max_points);
  for (std::size_t i = 0; i < count; i += stride) idx.push_back(i);
  if (count > 0 && idx.back() != count - 1) idx.push_back(count - 1);
  return idx;
}

}  // namespace

std::string render_svg_agents(const TrajectoryRecord& rec, const SvgOptions& options) {
  if (rec.snapshots.empty()) throw ModelError("agent-trajectory plot needs state snapshots (set snapshot_stride)");
  Frame f{.width = static_cast<double>(options.width),
          .height = static_cast<double>(options.height),
          .t_max = static_cast<double>(rec.snapshot_times.back()),
          .y_max = 1.0};
  std::string out = svg_open(f, options.title);
  svg_axes(out, f, "opinion");
  const std::size_t n = rec.snapshots.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    fmt::format_to(std::back_inserter(out),
                   "<polyline fill=\"none\" stroke=\"hsl({},65%,40%)\" stroke-width=\"0.8\" stroke-opacity=\"0.8\" "
                   "points=\"",
                   (i * 360) / n);
    for (std::size_t s = 0; s < rec.snapshots.size(); ++s) {
      fmt::format_to(std::back_inserter(out), "{}{:.2f},{:.2f}", s == 0 ? "" : " ",
                     f.x(static_cast<double>(rec.snapshot_times[s])), f.y(rec.snapshots[s][i]));
    }
    out += "\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string render_svg_diameter(const EnsembleStats& stats, double epsilon, const SvgOptions& options) {
  if (stats.steps() == 0 || stats.replicas == 0) throw ModelError("diameter plot needs a non-empty ensemble");
  double top = epsilon * 1.5;
  for (std::size_t t = 0; t < stats.steps(); ++t) top = std::max(top, stats.mean[t] + stats.half_width[t]);
  Frame f{.width = static_cast<double>(options.width),
          .height = static_cast<double>(options.height),
          .t_max = static_cast<double>(stats.steps() - 1),
          .y_max = std::min(1.0, top * 1.05)};
  std::string out = svg_open(f, options.title);
  svg_axes(out, f, "E d_V(t)");

  const auto idx = plot_indices(stats.steps(), 1000);
  const auto clip = [&](double v) { return std::clamp(v, 0.0, f.y_max); };
  out += "<polygon fill=\"steelblue\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t t = idx[k];
    fmt::format_to(std::back_inserter(out), "{}{:.2f},{:.2f}", k == 0 ? "" : " ", f.x(static_cast<double>(t)),
                   f.y(clip(stats.mean[t] + stats.half_width[t])));
  }
  for (std::size_t k = idx.size(); k-- > 0;) {
    const std::size_t t = idx[k];
    fmt::format_to(std::back_inserter(out), " {:.2f},{:.2f}", f.x(static_cast<double>(t)),
                   f.y(clip(stats.mean[t] - stats.half_width[t])));
  }
  out += "\"/>\n<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.2\" points=\"";
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t t = idx[k];
    fmt::format_to(std::back_inserter(out), "{}{:.2f},{:.2f}", k == 0 ? "" : " ", f.x(static_cast<double>(t)),
                   f.y(clip(stats.mean[t])));
  }
  out += "\"/>\n";
  fmt::format_to(std::back_inserter(out),
                 "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"firebrick\" "
                 "stroke-dasharray=\"6,4\"/>\n"
                 "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"firebrick\" "
                 "text-anchor=\"end\">epsilon = {}</text>\n",
                 f.x(0), f.y(clip(epsilon)), f.x(f.t_max), f.y(clip(epsilon)), f.x(f.t_max) - 4,
                 f.y(clip(epsilon)) - 4, epsilon);
  out += "</svg>\n";
  return out;
}

void render_svg(const TrajectoryRecord& record, const fs::path& path, const SvgOptions& options) {
  write_file_atomic(path, render_svg_agents(record, options));
}

void render_svg(const EnsembleStats& stats, double epsilon, const fs::path& path, const SvgOptions& options) {
  write_file_atomic(path, render_svg_diameter(stats, epsilon, options));
}

// ---------------------------------------------------------------------------
// Staged output directories

StagedOutput::StagedOutput(fs::path final_dir) : final_(std::move(final_dir)) {
  if (final_.filename().empty()) final_ = final_.parent_path();
  staging_ = final_.parent_path() / ("." + final_.filename().string() + ".partial");
  fs::remove_all(staging_);
  fs::create_directories(staging_);
}

StagedOutput::~StagedOutput() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

void StagedOutput::write(const std::string& name, std::string_view content) {
  write_file_atomic(staging_ / name, content);
}

void StagedOutput::commit() {
  if (fs::exists(final_)) {
    if (!fs::exists(final_ / "manifest.json")) {
      throw std::runtime_error("refusing to replace " + final_.string() + ": it is not a bcsync output directory");
    }
    fs::remove_all(final_);
  }
  fs::rename(staging_, final_);
  committed_ = true;
}

std::string replica_file_stem(std::size_t replica) { return fmt::format("replica_{:04}", replica); }

void write_ensemble_files(StagedOutput& out, const EnsembleResult& result, const ModelConfig& config,
                          double tail_fraction) {
  for (const auto& rec : result.records) {
    const auto stem = replica_file_stem(rec.replica);
    out.write(stem + ".csv", csv_text(rec));
    if (!rec.snapshots.empty()) out.write(stem + "_snapshots.csv", snapshots_csv_text(rec));
  }
  out.write("summary.json", summary_json(result, config, tail_fraction).dump(2) + "\n");
}

}  // namespace bcsync
