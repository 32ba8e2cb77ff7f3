#include "abrsim/qoe.h"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "abrsim/abr.h"
#include "abrsim/error.h"

namespace abrsim {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 9> kModels = {
    "yin2015", "bentaleb2016", "ftw",         "mok2011", "liu2012",
    "xue2014", "spiteri2016",  "sqi",         "ksqi"};

void RequireNonNegative(double v, const char* what) {
  if (!(v >= 0.0) || std::isnan(v)) {
    throw Error(std::string(what) + " must be non-negative");
  }
}

void Prepare(const SessionRecord& record) { ValidateRecord(record); }

double RMinKbps(const SessionRecord& record, const LogUtilityParams& p) {
  return record.min_bitrate_kbps > 0.0 ? record.min_bitrate_kbps : p.r_min_kbps;
}

template <typename ValueFn>
double LinearForm(const SessionRecord& record, const LinearQoeParams& p,
                  ValueFn value) {
  Prepare(record);
  double sum = 0.0;
  double switches = 0.0;
  for (size_t k = 0; k < record.size(); ++k) {
    sum += value(k);
    if (k > 0) switches += std::abs(value(k) - value(k - 1));
  }
  return sum - p.lambda * switches - p.mu * record.total_stall_s() -
         p.mu_startup * record.startup_delay_s;
}

double LogUtility(const SessionRecord& record, const LogUtilityParams& p) {
  Prepare(record);
  const double r_min = RMinKbps(record, p);
  double utility = 0.0;
  for (double r : record.bitrates_kbps) utility += std::log(r / r_min);
  return utility - p.stall_weight * record.total_stall_s();
}

}  // namespace

double PenaltySurface::At(double xv, double yv) const {
  auto locate = [](const std::vector<double>& grid, double v, size_t& i,
                   double& frac) {
    if (grid.size() == 1 || v <= grid.front()) {
      i = 0;
      frac = 0.0;
      return;
    }
    if (v >= grid.back()) {
      i = grid.size() - 2;
      frac = 1.0;
      return;
    }
    i = static_cast<size_t>(std::upper_bound(grid.begin(), grid.end(), v) -
                            grid.begin()) - 1;
    frac = (v - grid[i]) / (grid[i + 1] - grid[i]);
  };
  size_t i = 0, j = 0;
  double fx = 0.0, fy = 0.0;
  locate(x, xv, i, fx);
  locate(y, yv, j, fy);
  const size_t i1 = std::min(i + 1, x.size() - 1);
  const size_t j1 = std::min(j + 1, y.size() - 1);
  const double v00 = values[i][j], v01 = values[i][j1];
  const double v10 = values[i1][j], v11 = values[i1][j1];
  return (1 - fx) * ((1 - fy) * v00 + fy * v01) +
         fx * ((1 - fy) * v10 + fy * v11);
}

void PenaltySurface::Validate() const {
  if (x.empty() || y.empty()) throw Error("penalty surface grid is empty");
  for (size_t i = 1; i < x.size(); ++i) {
    if (!(x[i] > x[i - 1])) throw Error("penalty surface x grid not increasing");
  }
  for (size_t j = 1; j < y.size(); ++j) {
    if (!(y[j] > y[j - 1])) throw Error("penalty surface y grid not increasing");
  }
  if (values.size() != x.size()) throw Error("penalty surface shape mismatch");
  for (const auto& row : values) {
    if (row.size() != y.size()) throw Error("penalty surface shape mismatch");
    for (double v : row) RequireNonNegative(v, "penalty surface value");
  }
}

KsqiParams KsqiParams::Create(double c0, double c1, double c2, double beta_neg,
                              double beta_pos) {
  KsqiParams p;
  p.c0 = c0;
  p.c1 = c1;
  p.c2 = c2;
  p.beta_neg = beta_neg;
  p.beta_pos = beta_pos;
  p.Validate();
  return p;
}

void KsqiParams::Validate() const {
  RequireNonNegative(c0, "ksqi c0");
  RequireNonNegative(c1, "ksqi c1");
  RequireNonNegative(c2, "ksqi c2");
  RequireNonNegative(beta_pos, "ksqi beta_pos");
  if (!(beta_neg >= beta_pos)) {
    throw Error("ksqi requires beta_neg >= beta_pos");
  }
  if (stall_surface) stall_surface->Validate();
  if (switch_surface) switch_surface->Validate();
}

void QoeParams::Validate() const {
  for (const auto* p : {&yin2015, &bentaleb2016}) {
    RequireNonNegative(p->lambda, "lambda");
    RequireNonNegative(p->mu, "mu");
    RequireNonNegative(p->mu_startup, "mu_startup");
  }
  RequireNonNegative(ftw.a, "ftw a");
  RequireNonNegative(ftw.b_len, "ftw b_len");
  RequireNonNegative(ftw.b_cnt, "ftw b_cnt");
  RequireNonNegative(mok2011.w_init, "mok2011 w_init");
  RequireNonNegative(mok2011.w_freq, "mok2011 w_freq");
  RequireNonNegative(mok2011.w_dur, "mok2011 w_dur");
  for (const auto* t : {&mok2011.init_thresholds_s, &mok2011.freq_thresholds_per_min,
                        &mok2011.dur_thresholds_s}) {
    if (!((*t)[0] <= (*t)[1])) throw Error("mok2011 thresholds must ascend");
  }
  RequireNonNegative(liu2012.c1, "liu2012 c1");
  RequireNonNegative(liu2012.c2, "liu2012 c2");
  for (const auto* p : {&xue2014, &spiteri2016}) {
    RequireNonNegative(p->stall_weight, "stall weight");
    if (!(p->r_min_kbps > 0.0)) throw Error("r_min_kbps must be positive");
  }
  RequireNonNegative(sqi.u0, "sqi u0");
  RequireNonNegative(sqi.u1, "sqi u1");
  if (!(sqi.tau_s > 0.0)) throw Error("sqi tau_s must be positive");
  ksqi.Validate();
}

double QoeYin2015(const SessionRecord& record, const LinearQoeParams& p) {
  return LinearForm(record, p,
                    [&](size_t k) { return record.bitrates_kbps[k] / 1000.0; });
}

double QoeBentaleb2016(const SessionRecord& record, const LinearQoeParams& p) {
  return LinearForm(record, p, [&](size_t k) { return record.qualities[k]; });
}

double QoeFtw(const SessionRecord& record, const FtwParams& p) {
  Prepare(record);
  const auto count = static_cast<double>(record.stalls.size());
  if (count == 0.0) return p.a + p.c;
  const double mean_len = record.total_stall_s() / count;
  return p.a * std::exp(-(p.b_len * mean_len + p.b_cnt) * count) + p.c;
}

int MokLevel(double value, const double (&thresholds)[2]) {
  if (value <= thresholds[0]) return 0;
  if (value <= thresholds[1]) return 1;
  return 2;
}

double QoeMok2011(const SessionRecord& record, const MokParams& p) {
  Prepare(record);
  const auto count = static_cast<double>(record.stalls.size());
  const double per_min = count / (record.content_s() / 60.0);
  const double mean_dur = count > 0.0 ? record.total_stall_s() / count : 0.0;
  const int l_init = MokLevel(record.startup_delay_s, p.init_thresholds_s);
  const int l_freq = MokLevel(per_min, p.freq_thresholds_per_min);
  const int l_dur = MokLevel(mean_dur, p.dur_thresholds_s);
  return p.intercept - p.w_init * l_init - p.w_freq * l_freq - p.w_dur * l_dur;
}

double QoeLiu2012(const SessionRecord& record, const LiuParams& p) {
  Prepare(record);
  double mean_mbps = 0.0;
  for (double r : record.bitrates_kbps) mean_mbps += r / 1000.0;
  mean_mbps /= static_cast<double>(record.size());
  const double stall = record.total_stall_s();
  const double ratio = stall / (stall + record.content_s());
  return p.c2 * mean_mbps - p.c1 * ratio;
}

double QoeXue2014(const SessionRecord& record, const LogUtilityParams& p) {
  return LogUtility(record, p);
}

double QoeSpiteri2016(const SessionRecord& record, const LogUtilityParams& p) {
  // Utility + gamma * played - gamma * (played + stalled) collapses to a
  // stall penalty.
  return LogUtility(record, p);
}

double QoeSqi(const SessionRecord& record, const SqiParams& p) {
  Prepare(record);
  const auto n = static_cast<double>(record.size());
  double mean_q = 0.0;
  for (double q : record.qualities) mean_q += q;
  mean_q /= n;
  double stall_sum = 0.0;
  for (const auto& s : record.stalls) {
    const double q = record.quality_before(s.position_s);
    stall_sum -= (p.u0 + p.u1 * q) * s.duration_s * std::exp(-s.position_s / p.tau_s);
  }
  return mean_q + stall_sum / n;
}

double QoeKsqi(const SessionRecord& record, const KsqiParams& p) {
  Prepare(record);
  p.Validate();
  const auto n = static_cast<double>(record.size());
  double q_sum = 0.0;
  for (double q : record.qualities) q_sum += q;
  double stall_pen = 0.0;
  for (const auto& s : record.stalls) {
    stall_pen += KsqiStallTerm(s.duration_s, record.quality_before(s.position_s), p);
  }
  double switch_pen = 0.0;
  for (size_t k = 1; k < record.size(); ++k) {
    switch_pen += KsqiSwitchTerm(record.qualities[k - 1], record.qualities[k], p);
  }
  return q_sum / n - (stall_pen + switch_pen) / n;
}

std::span<const std::string_view> KnowledgeDrivenModels() { return kModels; }

bool IsKnownModel(std::string_view model_id) {
  return std::find(kModels.begin(), kModels.end(), model_id) != kModels.end();
}

QoeScore Evaluate(std::string_view id, const SessionRecord& record,
                  const QoeParams& params) {
  double v = 0.0;
  if (id == "yin2015") {
    v = QoeYin2015(record, params.yin2015);
  } else if (id == "bentaleb2016") {
    v = QoeBentaleb2016(record, params.bentaleb2016);
  } else if (id == "ftw") {
    v = QoeFtw(record, params.ftw);
  } else if (id == "mok2011") {
    v = QoeMok2011(record, params.mok2011);
  } else if (id == "liu2012") {
    v = QoeLiu2012(record, params.liu2012);
  } else if (id == "xue2014") {
    v = QoeXue2014(record, params.xue2014);
  } else if (id == "spiteri2016") {
    v = QoeSpiteri2016(record, params.spiteri2016);
  } else if (id == "sqi") {
    v = QoeSqi(record, params.sqi);
  } else if (id == "ksqi") {
    v = QoeKsqi(record, params.ksqi);
  } else {
    throw Error("unknown QoE model '" + std::string(id) + "'");
  }
  if (!std::isfinite(v)) {
    throw Error("QoE model " + std::string(id) + " produced a non-finite score");
  }
  return {v, std::string(id)};
}

QoeScore ExternalQoeModel::Score(const SessionRecord& record) const {
  ValidateRecord(record);
  static std::atomic<unsigned long> counter{0};
  const auto path = std::filesystem::temp_directory_path() /
                    ("abrsim_record_" + std::to_string(getpid()) + "_" +
                     std::to_string(counter++) + ".json");
  {
    std::ofstream out(path);
    if (!out) throw Error("cannot write record file " + path.string());
    out << SessionRecordToJson(record);
  }
  std::string reply;
  try {
    reply = RunCommand(command_ + " '" + path.string() + "'");
  } catch (...) {
    std::filesystem::remove(path);
    throw;
  }
  std::filesystem::remove(path);
  while (!reply.empty() && std::isspace(static_cast<unsigned char>(reply.back()))) {
    reply.pop_back();
  }
  size_t start = 0;
  while (start < reply.size() && std::isspace(static_cast<unsigned char>(reply[start]))) {
    ++start;
  }
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(reply.data() + start,
                                   reply.data() + reply.size(), value);
  if (ec != std::errc() || ptr != reply.data() + reply.size() ||
      !std::isfinite(value)) {
    throw Error("external model " + model_id_ + " returned '" + reply + "'");
  }
  return {value, model_id_};
}

namespace {

double Num(const json& j) {
  // JSON has no infinity; null stands for it.
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

void ReadLinear(const json& j, LinearQoeParams& p) {
  if (j.contains("lambda")) p.lambda = Num(j["lambda"]);
  if (j.contains("mu")) p.mu = Num(j["mu"]);
  if (j.contains("mu_startup")) p.mu_startup = Num(j["mu_startup"]);
}

void ReadPair(const json& j, const char* key, double (&out)[2]) {
  if (!j.contains(key)) return;
  out[0] = Num(j[key].at(0));
  out[1] = Num(j[key].at(1));
}

void ReadLog(const json& j, LogUtilityParams& p, const char* weight_key) {
  if (j.contains(weight_key)) p.stall_weight = Num(j[weight_key]);
  if (j.contains("r_min_kbps")) p.r_min_kbps = Num(j["r_min_kbps"]);
}

PenaltySurface ReadSurface(const json& j) {
  PenaltySurface s;
  s.x = j.at("x").get<std::vector<double>>();
  s.y = j.at("y").get<std::vector<double>>();
  s.values = j.at("values").get<std::vector<std::vector<double>>>();
  s.Validate();
  return s;
}

json SurfaceJson(const PenaltySurface& s) {
  return {{"x", s.x}, {"y", s.y}, {"values", s.values}};
}

}  // namespace

QoeParams QoeParamsFromJson(std::string_view text) {
  QoeParams p;
  try {
    const json doc = json::parse(text);
    if (!doc.is_object()) throw Error("QoE parameter document must be an object");
    for (const auto& [key, value] : doc.items()) {
      if (!IsKnownModel(key)) throw Error("unknown QoE model '" + key + "'");
    }
    if (doc.contains("yin2015")) ReadLinear(doc["yin2015"], p.yin2015);
    if (doc.contains("bentaleb2016")) ReadLinear(doc["bentaleb2016"], p.bentaleb2016);
    if (doc.contains("ftw")) {
      const auto& j = doc["ftw"];
      if (j.contains("a")) p.ftw.a = Num(j["a"]);
      if (j.contains("b_len")) p.ftw.b_len = Num(j["b_len"]);
      if (j.contains("b_cnt")) p.ftw.b_cnt = Num(j["b_cnt"]);
      if (j.contains("c")) p.ftw.c = Num(j["c"]);
    }
    if (doc.contains("mok2011")) {
      const auto& j = doc["mok2011"];
      if (j.contains("intercept")) p.mok2011.intercept = Num(j["intercept"]);
      if (j.contains("w_init")) p.mok2011.w_init = Num(j["w_init"]);
      if (j.contains("w_freq")) p.mok2011.w_freq = Num(j["w_freq"]);
      if (j.contains("w_dur")) p.mok2011.w_dur = Num(j["w_dur"]);
      ReadPair(j, "init_thresholds_s", p.mok2011.init_thresholds_s);
      ReadPair(j, "freq_thresholds_per_min", p.mok2011.freq_thresholds_per_min);
      ReadPair(j, "dur_thresholds_s", p.mok2011.dur_thresholds_s);
    }
    if (doc.contains("liu2012")) {
      const auto& j = doc["liu2012"];
      if (j.contains("c1")) p.liu2012.c1 = Num(j["c1"]);
      if (j.contains("c2")) p.liu2012.c2 = Num(j["c2"]);
    }
    if (doc.contains("xue2014")) ReadLog(doc["xue2014"], p.xue2014, "rho");
    if (doc.contains("spiteri2016")) ReadLog(doc["spiteri2016"], p.spiteri2016, "gamma");
    if (doc.contains("sqi")) {
      const auto& j = doc["sqi"];
      if (j.contains("u0")) p.sqi.u0 = Num(j["u0"]);
      if (j.contains("u1")) p.sqi.u1 = Num(j["u1"]);
      if (j.contains("tau_s")) p.sqi.tau_s = Num(j["tau_s"]);
    }
    if (doc.contains("ksqi")) {
      const auto& j = doc["ksqi"];
      if (j.contains("c0")) p.ksqi.c0 = Num(j["c0"]);
      if (j.contains("c1")) p.ksqi.c1 = Num(j["c1"]);
      if (j.contains("c2")) p.ksqi.c2 = Num(j["c2"]);
      if (j.contains("beta_neg")) p.ksqi.beta_neg = Num(j["beta_neg"]);
      if (j.contains("beta_pos")) p.ksqi.beta_pos = Num(j["beta_pos"]);
      if (j.contains("stall_surface")) p.ksqi.stall_surface = ReadSurface(j["stall_surface"]);
      if (j.contains("switch_surface")) p.ksqi.switch_surface = ReadSurface(j["switch_surface"]);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("invalid QoE parameter document: ") + e.what());
  }
  p.Validate();
  return p;
}

std::string QoeParamsToJson(const QoeParams& p) {
  auto linear = [](const LinearQoeParams& l) {
    return json{{"lambda", l.lambda}, {"mu", l.mu}, {"mu_startup", l.mu_startup}};
  };
  json doc;
  doc["yin2015"] = linear(p.yin2015);
  doc["bentaleb2016"] = linear(p.bentaleb2016);
  doc["ftw"] = {{"a", p.ftw.a}, {"b_len", p.ftw.b_len}, {"b_cnt", p.ftw.b_cnt}, {"c", p.ftw.c}};
  const auto& m = p.mok2011;
  doc["mok2011"] = {
      {"intercept", m.intercept},
      {"w_init", m.w_init},
      {"w_freq", m.w_freq},
      {"w_dur", m.w_dur},
      {"init_thresholds_s", {m.init_thresholds_s[0], m.init_thresholds_s[1]}},
      {"freq_thresholds_per_min", {m.freq_thresholds_per_min[0], m.freq_thresholds_per_min[1]}},
      {"dur_thresholds_s", {m.dur_thresholds_s[0], m.dur_thresholds_s[1]}}};
  doc["liu2012"] = {{"c1", p.liu2012.c1}, {"c2", p.liu2012.c2}};
  doc["xue2014"] = {{"rho", p.xue2014.stall_weight}, {"r_min_kbps", p.xue2014.r_min_kbps}};
  doc["spiteri2016"] = {{"gamma", p.spiteri2016.stall_weight},
                        {"r_min_kbps", p.spiteri2016.r_min_kbps}};
  doc["sqi"] = {{"u0", p.sqi.u0}, {"u1", p.sqi.u1}, {"tau_s", p.sqi.tau_s}};
  json k = {{"c0", p.ksqi.c0}, {"c1", p.ksqi.c1}, {"c2", p.ksqi.c2},
            {"beta_neg", p.ksqi.beta_neg}, {"beta_pos", p.ksqi.beta_pos}};
  if (p.ksqi.stall_surface) k["stall_surface"] = SurfaceJson(*p.ksqi.stall_surface);
  if (p.ksqi.switch_surface) k["switch_surface"] = SurfaceJson(*p.ksqi.switch_surface);
  doc["ksqi"] = std::move(k);
  return doc.dump(2) + "\n";
}

}  // namespace abrsim
