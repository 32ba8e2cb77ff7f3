#include "abrsim/cli.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <unistd.h>

#include "abrsim/csv.h"
#include "abrsim/error.h"
#include "abrsim/qoe.h"
#include "abrsim/rdos.h"
#include "abrsim/session.h"
#include "abrsim/stats.h"
#include "abrsim/subjective.h"

namespace abrsim {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

template <typename T>
T Get(const json& block, const char* key, T fallback) {
  if (!block.is_object() || !block.contains(key) || block[key].is_null()) return fallback;
  try {
    return block[key].get<T>();
  } catch (const json::exception&) {
    throw Error(std::string("config key '") + key + "' has the wrong type");
  }
}

// Runs fn(0..count) on up to `jobs` threads; exceptions stay inside fn.
void ParallelFor(size_t count, int jobs, const std::function<void(size_t)>& fn) {
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i; (i = next++) < count;) fn(i);
  };
  std::vector<std::jthread> pool;
  const size_t extra = std::min<size_t>(count, static_cast<size_t>(std::max(1, jobs))) - (count > 0);
  for (size_t t = 0; t < extra; ++t) pool.emplace_back(worker);
  worker();
}

uint64_t DeriveSeed(uint64_t seed, uint64_t index) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string Extension(OutputFormat f) { return f == OutputFormat::kCsv ? ".csv" : ".json"; }

std::string SafeLabel(std::string s) {
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return s;
}

MpcObjectiveParams ReadObjective(const json& block) {
  MpcObjectiveParams p;
  p.lambda_switch = Get(block, "lambda_switch", p.lambda_switch);
  p.mu_rebuf = Get(block, "mu_rebuf", p.mu_rebuf);
  p.horizon = Get(block, "horizon", p.horizon);
  p.exact_future_sizes = Get(block, "exact_future_sizes", p.exact_future_sizes);
  p.Validate();
  return p;
}

double SwitchMagnitudeKbps(const Manifest& m, const std::vector<int>& choices) {
  if (choices.size() < 2) return 0.0;
  double sum = 0.0;
  for (size_t k = 1; k < choices.size(); ++k) {
    sum += std::abs(m.nominal_kbps(choices[k]) - m.nominal_kbps(choices[k - 1]));
  }
  return sum / static_cast<double>(choices.size() - 1);
}

std::vector<fs::path> RecordPaths(const ExperimentConfig& config, const json& block) {
  std::vector<fs::path> paths;
  if (block.contains("records")) {
    for (const auto& p : block["records"]) paths.push_back(config.Resolve(p.get<std::string>()));
  }
  if (block.contains("records_dir")) {
    const auto dir = config.Resolve(block["records_dir"].get<std::string>());
    if (!fs::is_directory(dir)) throw Error("records_dir '" + dir.string() + "' is not a directory");
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.size() > 12 && name.ends_with(".record.json")) found.push_back(entry.path());
    }
    std::sort(found.begin(), found.end());
    paths.insert(paths.end(), found.begin(), found.end());
  }
  return paths;
}

std::string RecordLabel(const fs::path& p) {
  auto name = p.filename().string();
  if (name.ends_with(".record.json")) return name.substr(0, name.size() - 12);
  return p.stem().string();
}

}  // namespace

ExperimentConfig ExperimentConfig::Load(const fs::path& path) {
  const auto text = ReadFile(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return FromJson(std::move(doc), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

ExperimentConfig ExperimentConfig::FromJson(json doc, fs::path base_dir) {
  if (!doc.is_object()) throw Error("config must be a JSON object");
  ExperimentConfig c;
  c.doc = std::move(doc);
  c.base_dir = std::move(base_dir);
  return c;
}

fs::path ExperimentConfig::Resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

const json& ExperimentConfig::Section(const std::string& name) const {
  static const json empty = json::object();
  return doc.contains(name) ? doc[name] : empty;
}

void ResultTable::AddRow(std::vector<json> row) {
  if (row.size() != columns_.size()) throw Error("result row has the wrong width");
  rows_.push_back(std::move(row));
}

std::string ResultTable::Render(OutputFormat format) const {
  if (format == OutputFormat::kJson) {
    json out = json::array();
    for (const auto& row : rows_) {
      json obj = json::object();
      for (size_t i = 0; i < columns_.size(); ++i) obj[columns_[i]] = row[i];
      out.push_back(std::move(obj));
    }
    return out.dump(2) + "\n";
  }
  std::ostringstream out;
  for (size_t i = 0; i < columns_.size(); ++i) out << (i ? "," : "") << columns_[i];
  out << '\n';
  for (const auto& row : rows_) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      const auto& cell = row[i];
      if (cell.is_null()) continue;
      if (cell.is_number_float()) {
        out << FormatNumber(cell.get<double>());
      } else if (cell.is_string()) {
        auto s = cell.get<std::string>();
        std::replace(s.begin(), s.end(), ',', ';');
        std::replace(s.begin(), s.end(), '\n', ' ');
        out << s;
      } else {
        out << cell.dump();
      }
    }
    out << '\n';
  }
  return out.str();
}

void WriteFileAtomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(getpid()) + "." +
         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<NamedManifest> LoadManifests(const ExperimentConfig& config, uint64_t seed) {
  (void)seed;
  std::vector<NamedManifest> out;
  if (!config.doc.contains("manifests")) throw Error("config has no 'manifests'");
  for (const auto& entry : config.doc["manifests"]) {
    if (entry.is_string()) {
      const auto path = config.Resolve(entry.get<std::string>());
      out.push_back({path.stem().string(), ParseManifest(ReadFile(path))});
      continue;
    }
    if (entry.contains("synthetic")) {
      const auto& s = entry["synthetic"];
      std::vector<Representation> ladder = DefaultLadder();
      if (s.contains("ladder_kbps")) {
        ladder.clear();
        int idx = 1;
        for (double r : s["ladder_kbps"].get<std::vector<double>>()) {
          ladder.push_back({idx++, 0, 0, r});
        }
      }
      const int segments = Get(s, "segments", 65);
      const double seg = Get(s, "segment_duration_s", 4.0);
      out.push_back({Get<std::string>(entry, "label", "synthetic" + std::to_string(out.size())),
                     SyntheticManifest(segments, std::move(ladder), seg)});
      continue;
    }
    const auto path = config.Resolve(entry.at("path").get<std::string>());
    out.push_back({Get<std::string>(entry, "label", path.stem().string()),
                   ParseManifest(ReadFile(path))});
  }
  return out;
}

std::vector<NamedTrace> LoadTraces(const ExperimentConfig& config, uint64_t seed) {
  std::vector<NamedTrace> out;
  if (!config.doc.contains("traces")) throw Error("config has no 'traces'");
  const auto default_format = Get<std::string>(config.doc, "trace_format", "pairs");
  uint64_t synthetic_index = 0;
  for (const auto& entry : config.doc["traces"]) {
    if (entry.is_string()) {
      const auto path = config.Resolve(entry.get<std::string>());
      out.push_back({path.stem().string(),
                     ParseTrace(ReadFile(path), ParseTraceFormat(default_format))});
      continue;
    }
    if (entry.contains("synthetic")) {
      const auto& s = entry["synthetic"];
      SyntheticTraceSpec spec;
      spec.cv = Get(s, "cv", spec.cv);
      spec.rho = Get(s, "rho", spec.rho);
      spec.duration_s = Get(s, "duration_s", spec.duration_s);
      spec.sample_s = Get(s, "sample_s", spec.sample_s);
      spec.floor_kbps = Get(s, "floor_kbps", spec.floor_kbps);
      std::vector<double> means;
      if (s.contains("mean_kbps") && s["mean_kbps"].is_array()) {
        means = s["mean_kbps"].get<std::vector<double>>();
      } else {
        means.push_back(Get(s, "mean_kbps", spec.mean_kbps));
      }
      if (means.empty()) throw Error("synthetic mean_kbps list is empty");
      const int count = Get(s, "count", 1);
      const auto prefix = Get<std::string>(entry, "label", "synthetic");
      for (int i = 0; i < count; ++i) {
        spec.mean_kbps = means[static_cast<size_t>(i) % means.size()];
        out.push_back({prefix + std::to_string(i),
                       SyntheticTrace(spec, DeriveSeed(seed, synthetic_index++))});
      }
      continue;
    }
    const auto path = config.Resolve(entry.at("path").get<std::string>());
    const auto format = Get<std::string>(entry, "format", default_format);
    out.push_back({Get<std::string>(entry, "label", path.stem().string()),
                   ParseTrace(ReadFile(path), ParseTraceFormat(format))});
  }
  return out;
}

PlayerConfig LoadPlayerConfig(const ExperimentConfig& config) {
  const auto& p = config.Section("player");
  PlayerConfig c;
  c.max_buffer_s = Get(p, "max_buffer_s", c.max_buffer_s);
  c.initial_rep = Get(p, "initial_rep", c.initial_rep);
  c.drop_first_chunk = Get(p, "drop_first_chunk", c.drop_first_chunk);
  c.channel.rtt_s = Get(p, "rtt_s", c.channel.rtt_s);
  c.channel.loop_trace = Get(p, "loop_trace", c.channel.loop_trace);
  return c;
}

MpcTableSpec LoadTableSpec(const ExperimentConfig& config) {
  const auto& t = config.Section("mpc_table");
  MpcTableSpec spec;
  spec.binning.tput_bins = Get(t, "tput_bins", spec.binning.tput_bins);
  spec.binning.tput_max_kbps = Get(t, "tput_max_kbps", spec.binning.tput_max_kbps);
  spec.binning.buffer_bins = Get(t, "buffer_bins", spec.binning.buffer_bins);
  spec.binning.max_buffer_s = Get(t, "max_buffer_s", spec.binning.max_buffer_s);
  spec.params = ReadObjective(t);
  for (const auto& rep : DefaultLadder()) spec.bitrates_kbps.push_back(rep.bitrate_kbps);
  if (t.contains("ladder_kbps")) spec.bitrates_kbps = t["ladder_kbps"].get<std::vector<double>>();
  spec.segment_duration_s = Get(t, "segment_duration_s", spec.segment_duration_s);
  spec.rtt_s = Get(t, "rtt_s", spec.rtt_s);
  spec.Validate();
  return spec;
}

std::string PolicyLabel(const json& block) {
  if (block.is_string()) return block.get<std::string>();
  return Get<std::string>(block, "label", block.at("id").get<std::string>());
}

std::unique_ptr<AbrPolicy> MakePolicy(const json& block, const ExperimentConfig& config,
                                      const Trace& trace, const PlayerConfig& player, int jobs) {
  const json b = block.is_string() ? json{{"id", block}} : block;
  const auto id = b.at("id").get<std::string>();
  if (id == "fixed") return std::make_unique<FixedPolicy>(Get(b, "rep", 1));
  if (id == "rb") return std::make_unique<RateBasedPolicy>(Get(b, "strict", true));
  if (id == "bb") {
    return std::make_unique<BufferBasedPolicy>(Get(b, "reservoir_s", 5.0),
                                               Get(b, "cushion_s", 10.0));
  }
  if (id == "mpc") return std::make_unique<MpcPolicy>(ReadObjective(b));
  if (id == "mpc_clairvoyant") {
    return std::make_unique<ClairvoyantMpcPolicy>(trace, player.channel, ReadObjective(b));
  }
  if (id == "fastmpc") {
    if (b.contains("table")) {
      return std::make_unique<FastMpcPolicy>(
          ParseTable(ReadFile(config.Resolve(b["table"].get<std::string>()))));
    }
    return std::make_unique<FastMpcPolicy>(BuildMpcTable(LoadTableSpec(config), jobs));
  }
  if (id == "rdos") {
    RdosParams p;
    p.gamma_rate = Get(b, "gamma_rate", p.gamma_rate);
    p.horizon = Get(b, "horizon", p.horizon);
    p.exact_future_sizes = Get(b, "exact_future_sizes", p.exact_future_sizes);
    if (b.contains("ksqi")) p.ksqi = QoeParamsFromJson(json{{"ksqi", b["ksqi"]}}.dump()).ksqi;
    return std::make_unique<RdosPolicy>(p);
  }
  if (id == "external") {
    return std::make_unique<ExternalPolicy>(b.at("command").get<std::string>(),
                                            Get<std::string>(b, "label", "external"));
  }
  throw Error("unknown policy id '" + id + "'");
}

CommandReport CmdSimulate(const ExperimentConfig& config, const RunOptions& options) {
  const auto manifests = LoadManifests(config, options.seed);
  const auto traces = LoadTraces(config, options.seed);
  const auto player = LoadPlayerConfig(config);
  if (!config.doc.contains("policies")) throw Error("config has no 'policies'");
  const auto& blocks = config.doc["policies"];
  std::vector<std::string> labels;
  std::set<std::string> seen;
  for (const auto& b : blocks) {
    labels.push_back(PolicyLabel(b));
    if (!seen.insert(labels.back()).second) throw Error("duplicate policy label '" + labels.back() + "'");
  }

  // Trace-independent policies are shared across cells.
  std::vector<std::shared_ptr<AbrPolicy>> shared(blocks.size());
  const Trace placeholder({{0.0, 1.0}}, 1.0);
  for (size_t p = 0; p < blocks.size(); ++p) {
    const auto id = blocks[p].is_string() ? blocks[p].get<std::string>()
                                          : blocks[p].at("id").get<std::string>();
    if (id != "mpc_clairvoyant") {
      shared[p] = MakePolicy(blocks[p], config, placeholder, player, options.jobs);
    }
  }

  struct Cell {
    size_t m = 0, t = 0, p = 0;
    bool ok = false;
    std::string error;
    double avg_kbps = 0.0, stall_s = 0.0, switch_kbps = 0.0, startup_s = 0.0;
    size_t stall_count = 0;
  };
  std::vector<Cell> cells;
  for (size_t m = 0; m < manifests.size(); ++m) {
    for (size_t t = 0; t < traces.size(); ++t) {
      for (size_t p = 0; p < blocks.size(); ++p) {
        Cell c;
        c.m = m;
        c.t = t;
        c.p = p;
        cells.push_back(std::move(c));
      }
    }
  }
  const auto session_dir = options.out_dir / "sessions";
  ParallelFor(cells.size(), options.jobs, [&](size_t i) {
    auto& c = cells[i];
    try {
      const auto& manifest = manifests[c.m].manifest;
      const auto& trace = traces[c.t].trace;
      std::shared_ptr<AbrPolicy> policy = shared[c.p];
      if (!policy) policy = MakePolicy(blocks[c.p], config, trace, player, 1);
      const auto log = RunSession(manifest, trace, *policy, player);
      const auto record = ToRecord(log, manifest, player);
      const auto stem = SafeLabel(manifests[c.m].label) + "__" + SafeLabel(traces[c.t].label) +
                        "__" + SafeLabel(labels[c.p]);
      WriteFileAtomic(session_dir / (stem + ".log.json"), SessionLogToJson(log));
      WriteFileAtomic(session_dir / (stem + ".record.json"), SessionRecordToJson(record));
      c.avg_kbps = AverageBitrateKbps(manifest, log.choices);
      c.stall_s = record.total_stall_s();
      c.stall_count = record.stalls.size();
      c.switch_kbps = SwitchMagnitudeKbps(manifest, log.choices);
      c.startup_s = log.startup_delay_s;
      c.ok = true;
    } catch (const std::exception& e) {
      c.error = e.what();
    }
  });

  ResultTable summary({"manifest", "trace", "policy", "status", "avg_bitrate_kbps",
                       "total_stall_s", "stall_count", "switch_magnitude_kbps",
                       "startup_delay_s", "error"});
  CommandReport report;
  for (const auto& c : cells) {
    ++report.cells;
    if (!c.ok) {
      ++report.failures;
      report.messages.push_back(manifests[c.m].label + "/" + traces[c.t].label + "/" +
                                labels[c.p] + ": " + c.error);
      summary.AddRow({manifests[c.m].label, traces[c.t].label, labels[c.p], "error", nullptr,
                      nullptr, nullptr, nullptr, nullptr, c.error});
      continue;
    }
    summary.AddRow({manifests[c.m].label, traces[c.t].label, labels[c.p], "ok", c.avg_kbps,
                    c.stall_s, c.stall_count, c.switch_kbps, c.startup_s, ""});
  }
  WriteFileAtomic(options.out_dir / ("summary" + Extension(options.format)),
                  summary.Render(options.format));
  report.messages.insert(report.messages.begin(),
                         "cells: " + std::to_string(report.cells) +
                             ", failed: " + std::to_string(report.failures));
  return report;
}

CommandReport CmdMpcTable(const ExperimentConfig& config, const RunOptions& options) {
  const auto spec = LoadTableSpec(config);
  const auto table = BuildMpcTable(spec, options.jobs);
  const auto name = Get<std::string>(config.Section("mpc_table"), "output", "mpc_table.txt");
  WriteFileAtomic(options.out_dir / name, SerializeTable(table));
  CommandReport report;
  report.cells = 1;
  report.messages.push_back("cells: " + std::to_string(table.cell_count()));
  return report;
}

CommandReport CmdQoe(const ExperimentConfig& config, const RunOptions& options) {
  const auto& block = config.Section("qoe");
  QoeParams params;
  if (block.contains("params")) params = QoeParamsFromJson(block["params"].dump());
  if (block.contains("params_file")) {
    params = QoeParamsFromJson(ReadFile(config.Resolve(block["params_file"].get<std::string>())));
  }
  params.Validate();
  std::vector<std::string> models;
  if (block.contains("models")) {
    models = block["models"].get<std::vector<std::string>>();
  } else {
    for (auto id : KnowledgeDrivenModels()) models.emplace_back(id);
  }
  for (const auto& id : models) {
    if (!IsKnownModel(id)) throw Error("unknown QoE model '" + id + "'");
  }
  std::vector<ExternalQoeModel> external;
  if (block.contains("external")) {
    for (const auto& e : block["external"]) {
      external.emplace_back(e.at("id").get<std::string>(), e.at("command").get<std::string>());
    }
  }
  const auto paths = RecordPaths(config, block);
  if (paths.empty()) throw Error("qoe section lists no records");

  const size_t per_record = models.size() + external.size();
  struct Row {
    std::string record, model;
    bool ok = false;
    double score = 0.0;
    std::string error;
  };
  std::vector<Row> rows(paths.size() * per_record);
  ParallelFor(paths.size(), options.jobs, [&](size_t r) {
    const auto label = RecordLabel(paths[r]);
    std::optional<SessionRecord> record;
    std::string load_error;
    try {
      record = SessionRecordFromJson(ReadFile(paths[r]));
    } catch (const std::exception& e) {
      load_error = e.what();
    }
    for (size_t k = 0; k < per_record; ++k) {
      auto& row = rows[r * per_record + k];
      row.record = label;
      row.model = k < models.size() ? models[k] : external[k - models.size()].model_id();
      if (!record) {
        row.error = load_error;
        continue;
      }
      try {
        row.score = k < models.size() ? Evaluate(models[k], *record, params).value
                                      : external[k - models.size()].Score(*record).value;
        row.ok = true;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
  });
  ResultTable table({"record", "model", "status", "score", "error"});
  CommandReport report;
  for (const auto& row : rows) {
    ++report.cells;
    if (!row.ok) {
      ++report.failures;
      report.messages.push_back(row.record + "/" + row.model + ": " + row.error);
    }
    table.AddRow({row.record, row.model, row.ok ? "ok" : "error",
                  row.ok ? json(row.score) : json(nullptr), row.error});
  }
  WriteFileAtomic(options.out_dir / ("qoe_scores" + Extension(options.format)),
                  table.Render(options.format));
  return report;
}

CommandReport CmdSubjective(const ExperimentConfig& config, const RunOptions& options) {
  const auto& block = config.Section("subjective");
  if (!block.contains("ratings")) throw Error("subjective section needs 'ratings'");
  const auto ratings_path = config.Resolve(block["ratings"].get<std::string>());
  RatingsMatrix matrix = ParseRatingsCsv(ReadFile(ratings_path), ratings_path.string());
  if (block.contains("video_meta")) {
    const auto p = config.Resolve(block["video_meta"].get<std::string>());
    matrix.video_meta = ParseVideoMetaCsv(ReadFile(p), p.string());
  }
  const double tolerance = Get(block, "keystroke_tolerance_s", kKeystrokeToleranceS);
  std::vector<Keystroke> keys;
  const bool have_keys = block.contains("keystrokes");
  if (have_keys) {
    const auto p = config.Resolve(block["keystrokes"].get<std::string>());
    keys = ParseKeystrokesCsv(ReadFile(p), p.string());
    matrix.keystroke_accuracy = KeystrokeAccuracy(matrix, keys, tolerance);
  } else {
    for (const auto& s : matrix.raw.subjects) matrix.keystroke_accuracy[s] = 1.0;
  }

  const auto aux_kept = RejectAuxiliary(matrix, Get(block, "aux_threshold", 0.10));
  ScoreMatrix ratings = have_keys ? DropUnflaggedRatings(matrix, keys, tolerance) : matrix.raw;
  ratings = ratings.Subset(aux_kept);
  const ScoreMatrix z_all = ZNormalize(ratings, matrix.session_of);
  std::vector<std::string> kept = aux_kept;
  if (Get(block, "bt500", true) && aux_kept.size() >= 3) kept = RejectBt500(z_all);
  const ScoreMatrix z = z_all.Subset(kept);
  const ScoreMatrix raw_kept = ratings.Subset(kept);

  CommandReport report;
  const std::set<std::string> aux_set(aux_kept.begin(), aux_kept.end());
  const std::set<std::string> kept_set(kept.begin(), kept.end());
  ResultTable subjects({"subject_id", "device", "keystroke_accuracy", "auxiliary_kept", "bt500_kept"});
  for (const auto& s : matrix.raw.subjects) {
    subjects.AddRow({s, matrix.device_of[s], matrix.keystroke_accuracy[s],
                     aux_set.contains(s), kept_set.contains(s)});
  }
  const auto ext = Extension(options.format);
  WriteFileAtomic(options.out_dir / ("subjects" + ext), subjects.Render(options.format));

  if (block.contains("anchors")) {
    const auto p = config.Resolve(block["anchors"].get<std::string>());
    const auto anchors = ParseAnchorsCsv(ReadFile(p), p.string());
    const auto realigned = Realign(z, matrix.session_of, matrix.day_of, anchors);
    ResultTable mos({"video_id", "day", "mean_z", "mos"});
    for (size_t v = 0; v < realigned.videos.size(); ++v) {
      mos.AddRow({realigned.videos[v], realigned.days[v], realigned.mean_z[v], realigned.mos[v]});
    }
    WriteFileAtomic(options.out_dir / ("mos" + ext), mos.Render(options.format));
    ResultTable maps({"day", "a", "b", "anchors"});
    for (const auto& [day, m] : realigned.day_maps) maps.AddRow({day, m.a, m.b, m.anchors});
    WriteFileAtomic(options.out_dir / ("realign_maps" + ext), maps.Render(options.format));
  }

  if (!matrix.video_meta.empty()) {
    PartitionParams pp;
    const auto partitions = PartitionSessions(matrix.video_meta, pp);
    const auto sens = BuildSensitivityReport(
        raw_kept, partitions, Get<size_t>(block, "min_set", kMinSensitivitySet));
    ResultTable table({"subject_id", "s_r", "s_q", "s_a", "primacy_recency"});
    auto cell = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
    for (const auto& row : sens.subjects) {
      table.AddRow({row.subject, cell(row.s_r), cell(row.s_q), cell(row.s_a),
                    cell(row.primacy_recency)});
    }
    WriteFileAtomic(options.out_dir / ("sensitivity" + ext), table.Render(options.format));
    json meta;
    meta["set_sizes"] = sens.set_sizes;
    meta["min_set"] = Get<size_t>(block, "min_set", kMinSensitivitySet);
    meta["primacy_recency"] = {
        {"definition", "mean(degraded_first) - mean(degraded_last)"},
        {"status", "heuristic: no reference formula exists for this metric"}};
    WriteFileAtomic(options.out_dir / "sensitivity_meta.json", meta.dump(2) + "\n");
  }

  ResultTable cdf({"device", "subject_id", "mean_rating", "cdf"});
  for (const auto& [device, points] : PersonalMeanCdf(raw_kept, matrix.device_of)) {
    for (const auto& p : points) cdf.AddRow({device, p.subject, p.mean, p.cdf});
  }
  WriteFileAtomic(options.out_dir / ("personal_cdf" + ext), cdf.Render(options.format));
  report.cells = 1;
  report.messages.push_back("subjects: " + std::to_string(matrix.raw.subjects.size()) +
                            ", kept: " + std::to_string(kept.size()));
  return report;
}

CommandReport CmdStats(const ExperimentConfig& config, const RunOptions& options) {
  const auto& block = config.Section("stats");
  if (!block.contains("scores")) throw Error("stats section needs 'scores'");
  const auto scores_path = config.Resolve(block["scores"].get<std::string>());
  const auto scores = CsvTable::Parse(ReadFile(scores_path), scores_path.string());
  const size_t c_item = scores.column("item_id"), c_method = scores.column("method"),
               c_score = scores.column("score");

  std::vector<std::string> items, methods;
  std::map<std::string, size_t> item_pos, method_pos;
  std::vector<double> mos;
  if (block.contains("mos")) {
    const auto p = config.Resolve(block["mos"].get<std::string>());
    const auto table = CsvTable::Parse(ReadFile(p), p.string());
    const size_t ci = table.column("item_id"), cm = table.column("mos");
    for (size_t r = 0; r < table.rows(); ++r) {
      if (!item_pos.emplace(table.at(r, ci), items.size()).second) {
        throw Error(p.string() + ": duplicate item '" + table.at(r, ci) + "'");
      }
      items.push_back(table.at(r, ci));
      mos.push_back(table.number(r, cm));
    }
  }
  const bool items_fixed = !items.empty();
  for (size_t r = 0; r < scores.rows(); ++r) {
    if (method_pos.emplace(scores.at(r, c_method), methods.size()).second) {
      methods.push_back(scores.at(r, c_method));
    }
    if (!item_pos.contains(scores.at(r, c_item))) {
      if (items_fixed) throw Error("item '" + scores.at(r, c_item) + "' has no MOS");
      item_pos.emplace(scores.at(r, c_item), items.size());
      items.push_back(scores.at(r, c_item));
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<double>> samples(methods.size(), std::vector<double>(items.size(), nan));
  for (size_t r = 0; r < scores.rows(); ++r) {
    samples[method_pos[scores.at(r, c_method)]][item_pos[scores.at(r, c_item)]] =
        scores.number(r, c_score);
  }
  for (size_t m = 0; m < methods.size(); ++m) {
    for (size_t i = 0; i < items.size(); ++i) {
      if (std::isnan(samples[m][i])) {
        throw Error("method '" + methods[m] + "' has no score for item '" + items[i] + "'");
      }
    }
  }

  CommandReport report;
  const double alpha = Get(block, "alpha", 0.05);
  const auto ext = Extension(options.format);
  if (!mos.empty()) {
    ResultTable corr({"method", "status", "plcc", "srcc", "krcc", "rmse", "beta1", "beta2",
                      "beta3", "beta4", "beta5", "error"});
    for (size_t m = 0; m < methods.size(); ++m) {
      ++report.cells;
      try {
        const auto r = EvaluateAgainstMos(samples[m], mos);
        corr.AddRow({methods[m], "ok", r.plcc, r.srcc, r.krcc, r.rmse, r.fit.beta[0],
                     r.fit.beta[1], r.fit.beta[2], r.fit.beta[3], r.fit.beta[4], ""});
      } catch (const std::exception& e) {
        ++report.failures;
        report.messages.push_back(methods[m] + ": " + e.what());
        corr.AddRow({methods[m], "error", nullptr, nullptr, nullptr, nullptr, nullptr, nullptr,
                     nullptr, nullptr, nullptr, e.what()});
      }
    }
    WriteFileAtomic(options.out_dir / ("correlation" + ext), corr.Render(options.format));
  }

  std::vector<std::string> tests{"wilcoxon"};
  if (!mos.empty()) tests.push_back("f_test");
  if (block.contains("tests")) tests = block["tests"].get<std::vector<std::string>>();
  for (const auto& test : tests) {
    ++report.cells;
    try {
      SignificanceTest kind;
      if (test == "wilcoxon") {
        kind = SignificanceTest::kWilcoxon;
      } else if (test == "f_test") {
        kind = SignificanceTest::kFTest;
        if (mos.empty()) throw Error("f_test needs a 'mos' file");
      } else {
        throw Error("unknown test '" + test + "'");
      }
      const auto matrix = BuildSignificanceMatrix(methods, samples, kind, mos, alpha, options.jobs);
      const auto base = options.out_dir / ("significance_" + test);
      if (options.format == OutputFormat::kCsv) {
        WriteFileAtomic(fs::path(base.string() + ".csv"), SignificanceMatrixToCsv(matrix));
      } else {
        json doc;
        doc["labels"] = matrix.labels;
        doc["p_values"] = matrix.p_values;
        json rows = json::array();
        for (const auto& row : matrix.cells) {
          std::string glyphs;
          for (auto c : row) glyphs.push_back(ComparisonGlyph(c));
          rows.push_back(glyphs);
        }
        doc["cells"] = rows;
        WriteFileAtomic(fs::path(base.string() + ".json"), doc.dump(2) + "\n");
      }
      WriteFileAtomic(fs::path(base.string() + ".md"), SignificanceMatrixToMarkdown(matrix));
    } catch (const std::exception& e) {
      ++report.failures;
      report.messages.push_back(test + ": " + e.what());
    }
  }
  return report;
}

CommandReport CmdTraces(const ExperimentConfig& config, const RunOptions& options) {
  const auto& block = config.Section("trace_ingest");
  if (!block.contains("inputs")) throw Error("trace_ingest section needs 'inputs'");
  const auto default_format = Get<std::string>(block, "format", "pairs");
  const double window = Get(block, "window_s", 0.0);
  const double stride = Get(block, "stride_s", window);
  const double min_avg = Get(block, "min_avg_kbps", 200.0);
  ResultTable index({"trace", "source", "status", "duration_s", "mean_kbps", "kept", "error"});
  CommandReport report;
  for (const auto& entry : block["inputs"]) {
    const auto path = config.Resolve(entry.is_string() ? entry.get<std::string>()
                                                       : entry.at("path").get<std::string>());
    const auto format = entry.is_string() ? default_format
                                          : Get<std::string>(entry, "format", default_format);
    const auto stem = SafeLabel(path.stem().string());
    ++report.cells;
    try {
      const Trace trace = ParseTrace(ReadFile(path), ParseTraceFormat(format));
      std::vector<Trace> pieces =
          window > 0.0 ? WindowTraces(trace, window, stride) : std::vector<Trace>{trace};
      for (size_t k = 0; k < pieces.size(); ++k) {
        const auto name = pieces.size() == 1 && window <= 0.0 ? stem : stem + "_" + std::to_string(k);
        const Trace single[] = {pieces[k]};
        const bool kept = !FilterTraces(single, min_avg).empty();
        if (kept) WriteFileAtomic(options.out_dir / "traces" / (name + ".txt"), SerializeTrace(pieces[k]));
        index.AddRow({name, path.string(), "ok", pieces[k].duration_s(), pieces[k].mean_kbps(),
                      kept, ""});
      }
    } catch (const std::exception& e) {
      ++report.failures;
      report.messages.push_back(path.string() + ": " + e.what());
      index.AddRow({stem, path.string(), "error", nullptr, nullptr, false, e.what()});
    }
  }
  WriteFileAtomic(options.out_dir / ("trace_index" + Extension(options.format)),
                  index.Render(options.format));
  return report;
}

int RunCli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive bitrate streaming simulator and QoE toolkit"};
  app.require_subcommand(1);
  std::string config_path, format = "csv", out_dir;
  int jobs = 0;
  uint64_t seed = 0;
  bool seed_given = false;
  app.add_option("--config", config_path, "Experiment config (JSON)")->required();
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "Random seed");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--format", format, "Tabular output format")
      ->check(CLI::IsMember({"csv", "json"}));
  using Command = CommandReport (*)(const ExperimentConfig&, const RunOptions&);
  const std::vector<std::pair<std::string, Command>> commands = {
      {"simulate", CmdSimulate},
      {"mpc-table", CmdMpcTable},
      {"qoe", CmdQoe},
      {"subjective", CmdSubjective},
      {"stats", CmdStats},
      {"traces", CmdTraces}};
  const std::map<std::string, std::string> help = {
      {"simulate", "Run manifests x traces x policies"},
      {"mpc-table", "Tabulate the FastMPC lookup table"},
      {"qoe", "Score session records with QoE models"},
      {"subjective", "Post-process subjective ratings"},
      {"stats", "Correlation and significance analysis"},
      {"traces", "Ingest, window and filter bandwidth traces"}};
  for (const auto& [name, _] : commands) app.add_subcommand(name, help.at(name))->fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  seed_given = seed_opt->count() > 0;
  try {
    const auto config = ExperimentConfig::Load(config_path);
    RunOptions options;
    options.format = format == "json" ? OutputFormat::kJson : OutputFormat::kCsv;
    options.jobs = jobs > 0 ? jobs : Get(config.doc, "jobs", 1);
    options.seed = seed_given ? seed : Get<uint64_t>(config.doc, "seed", 1);
    options.out_dir = !out_dir.empty() ? fs::path(out_dir)
                                       : config.Resolve(Get<std::string>(config.doc, "output_dir", "out"));
    for (const auto& [name, fn] : commands) {
      if (!app.got_subcommand(name)) continue;
      const auto report = fn(config, options);
      for (const auto& m : report.messages) out << m << '\n';
      if (report.failures > 0) {
        err << report.failures << " of " << report.cells << " cells failed\n";
      }
      return report.exit_code();
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

}  // namespace abrsim
