#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "abrsim/cli.h"
#include "abrsim/csv.h"
#include "abrsim/qoe.h"
#include "abrsim/session.h"
#include "abrsim/stats.h"
#include "abrsim/subjective.h"

namespace abrsim {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("abrsim_cli_" + std::string(info->name()) + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path Write(const std::string& name, const std::string& text) {
    const auto p = dir_ / name;
    fs::create_directories(p.parent_path());
    std::ofstream(p) << text;
    return p;
  }

  struct Outcome {
    int code = 0;
    std::string out, err;
  };

  Outcome Run(const std::string& command, const json& config, std::vector<std::string> extra = {}) {
    const auto cfg = Write("config.json", config.dump(2));
    std::vector<std::string> args = {"abrsim", command, "--config", cfg.string(), "--out",
                                     (dir_ / "out").string()};
    args.insert(args.end(), extra.begin(), extra.end());
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    Outcome o;
    o.code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
  }

  std::string Out(const std::string& name) { return ReadFile(dir_ / "out" / name); }

  fs::path dir_;
};

json SimulateConfig(int manifests, int traces, const std::vector<std::string>& policies) {
  json c;
  c["manifests"] = json::array();
  for (int i = 0; i < manifests; ++i) {
    c["manifests"].push_back({{"label", "m" + std::to_string(i)},
                              {"synthetic", {{"segments", 10 + i}}}});
  }
  c["traces"] = json::array({{{"label", "t"},
                              {"synthetic", {{"count", traces}, {"duration_s", 120.0},
                                             {"mean_kbps", {800.0, 2500.0, 6000.0}}}}}});
  c["policies"] = policies;
  return c;
}

TEST_F(CliTest, SingleCellWritesOneLog) {
  const auto o = Run("simulate", SimulateConfig(1, 1, {"bb"}));
  ASSERT_EQ(o.code, 0) << o.err;
  int logs = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "out" / "sessions")) {
    logs += e.path().string().ends_with(".log.json");
  }
  EXPECT_EQ(logs, 1);
  const auto summary = CsvTable::Parse(Out("summary.csv"));
  EXPECT_EQ(summary.rows(), 1u);
}

TEST_F(CliTest, GridProducesEveryCellAndIsDeterministic) {
  const json config = SimulateConfig(5, 9, {"fixed", "rb", "bb", "mpc", "rdos"});
  const auto first = Run("simulate", config, {"--seed", "7"});
  ASSERT_EQ(first.code, 0) << first.err;
  const auto summary = Out("summary.csv");
  EXPECT_EQ(CsvTable::Parse(summary).rows(), 225u);
  EXPECT_NE(first.out.find("cells: 225, failed: 0"), std::string::npos);
  const auto log = Out("sessions/m2__t4__mpc.log.json");
  fs::remove_all(dir_ / "out");
  ASSERT_EQ(Run("simulate", config, {"--seed", "7", "--jobs", "3"}).code, 0);
  EXPECT_EQ(Out("summary.csv"), summary);
  EXPECT_EQ(Out("sessions/m2__t4__mpc.log.json"), log);
}

TEST_F(CliTest, FailingCellIsReportedAndOthersContinue) {
  json config = SimulateConfig(1, 2, {"bb"});
  config["policies"].push_back({{"id", "external"}, {"label", "broken"}, {"command", "false"}});
  const auto o = Run("simulate", config);
  EXPECT_EQ(o.code, 1);
  const auto t = CsvTable::Parse(Out("summary.csv"));
  ASSERT_EQ(t.rows(), 4u);
  int errors = 0;
  for (size_t r = 0; r < t.rows(); ++r) errors += t.at(r, t.column("status")) == "error";
  EXPECT_EQ(errors, 2);
}

TEST_F(CliTest, MpcTableWritesReloadableTable) {
  json config;
  config["mpc_table"] = {{"tput_bins", 6}, {"buffer_bins", 5}};
  const auto o = Run("mpc-table", config);
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("cells: 390"), std::string::npos);
  const auto table = ParseTable(Out("mpc_table.txt"));
  EXPECT_EQ(table.cell_count(), 390u);

  json sim = SimulateConfig(1, 1, {});
  sim["policies"] = json::array({{{"id", "fastmpc"}, {"table", (dir_ / "out" / "mpc_table.txt").string()}}});
  EXPECT_EQ(Run("simulate", sim).code, 0);
}

TEST_F(CliTest, QoeScoresMatchLibraryAndExternalStub) {
  ASSERT_EQ(Run("simulate", SimulateConfig(1, 1, {"rb"})).code, 0);
  const auto record_path = dir_ / "out" / "sessions" / "m0__t0__rb.record.json";
  const auto record = SessionRecordFromJson(ReadFile(record_path));
  const auto rec_copy = Write("recs/one.record.json", ReadFile(record_path));
  json config;
  config["qoe"] = {{"records_dir", "recs"},
                   {"external", json::array({{{"id", "stub"}, {"command", "echo 3.25 #"}}})}};
  const auto o = Run("qoe", config);
  ASSERT_EQ(o.code, 0) << o.err;
  const auto t = CsvTable::Parse(Out("qoe_scores.csv"));
  ASSERT_EQ(t.rows(), 10u);
  const QoeParams params;
  for (size_t r = 0; r < t.rows(); ++r) {
    const auto model = t.at(r, t.column("model"));
    EXPECT_EQ(t.at(r, t.column("record")), "one");
    const double got = t.number(r, t.column("score"));
    if (model == "stub") {
      EXPECT_DOUBLE_EQ(got, 3.25);
    } else {
      EXPECT_NEAR(got, Evaluate(model, record, params).value, 1e-9 * std::max(1.0, std::abs(got)));
    }
  }
  (void)rec_copy;
}

TEST_F(CliTest, SubjectiveMosMatchesLibrary) {
  std::ostringstream ratings;
  ratings << "subject_id,video_id,session_id,day,device,score\n";
  const int subjects = 6;
  for (int s = 0; s < subjects; ++s) {
    for (int v = 0; v < 8; ++v) {
      const int day = v < 4 ? 1 : 2;
      ratings << "s" << s << ",v" << v << ",sess" << day << ",d" << day << ",tv,"
              << (1 + (v % 4) * 20 + s * 3 + (v * 7 + s) % 5) << "\n";
    }
  }
  Write("ratings.csv", ratings.str());
  Write("anchors.csv", "day,video_id,anchor_mos\nd1,v0,1.5\nd1,v3,4.5\nd2,v4,1.2\nd2,v7,4.8\n");
  json config;
  config["subjective"] = {{"ratings", "ratings.csv"}, {"anchors", "anchors.csv"}, {"bt500", false}};
  const auto o = Run("subjective", config);
  ASSERT_EQ(o.code, 0) << o.err;

  const auto matrix = ParseRatingsCsv(ratings.str());
  const auto z = ZNormalize(matrix.raw, matrix.session_of);
  const auto expected = Realign(z, matrix.session_of, matrix.day_of,
                                ParseAnchorsCsv(ReadFile(dir_ / "anchors.csv")));
  const auto t = CsvTable::Parse(Out("mos.csv"));
  ASSERT_EQ(t.rows(), expected.videos.size());
  for (size_t r = 0; r < t.rows(); ++r) {
    EXPECT_EQ(t.at(r, t.column("video_id")), expected.videos[r]);
    EXPECT_NEAR(t.number(r, t.column("mos")), expected.mos[r], 1e-9);
  }
}

TEST_F(CliTest, MissingRatingsFileIsNamed) {
  json config;
  config["subjective"] = {{"ratings", "nowhere.csv"}};
  const auto o = Run("subjective", config);
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("nowhere.csv"), std::string::npos);
}

TEST_F(CliTest, StatsTwoMethodsMatrix) {
  std::ostringstream scores;
  scores << "item_id,method,score\n";
  for (int i = 0; i < 20; ++i) {
    scores << "i" << i << ",good," << i * 1.0 + 5 << "\n";
    scores << "i" << i << ",weak," << i * 1.0 << "\n";
  }
  Write("scores.csv", scores.str());
  json config;
  config["stats"] = {{"scores", "scores.csv"}};
  const auto o = Run("stats", config);
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(Out("significance_wilcoxon.csv"), "method,good,weak\ngood,-,1\nweak,0,-\n");
  EXPECT_NE(Out("significance_wilcoxon.md").find("| good | - | 1 |"), std::string::npos);
}

TEST_F(CliTest, MalformedConfigExitsWithTwo) {
  const auto cfg = Write("bad.json", "{ not json");
  const std::string cmd = std::string(ABRSIM_BIN) + " simulate --config " + cfg.string() +
                          " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
  const auto o = Run("simulate", json{{"manifests", json::array()}});
  EXPECT_EQ(o.code, 2);
}

}  // namespace
}  // namespace abrsim
