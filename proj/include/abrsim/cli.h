#ifndef ABRSIM_CLI_H_
#define ABRSIM_CLI_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "abrsim/abr.h"
#include "abrsim/media.h"
#include "abrsim/mpc.h"
#include "abrsim/nettrace.h"
#include "abrsim/simulator.h"

namespace abrsim {

enum class OutputFormat { kCsv, kJson };

// Declarative experiment document; relative paths resolve against the
// directory that holds the config file. See docs/formats.md.
struct ExperimentConfig {
  nlohmann::json doc = nlohmann::json::object();
  std::filesystem::path base_dir = ".";

  static ExperimentConfig Load(const std::filesystem::path& path);
  static ExperimentConfig FromJson(nlohmann::json doc, std::filesystem::path base_dir = ".");

  std::filesystem::path Resolve(const std::string& path) const;
  const nlohmann::json& Section(const std::string& name) const;
};

struct RunOptions {
  std::filesystem::path out_dir = "out";
  int jobs = 1;
  uint64_t seed = 1;
  OutputFormat format = OutputFormat::kCsv;
};

struct CommandReport {
  int cells = 0;
  int failures = 0;
  std::vector<std::string> messages;

  int exit_code() const { return failures == 0 ? 0 : 1; }
};

// Rows of loosely typed cells rendered as CSV or as a JSON array of objects.
class ResultTable {
 public:
  explicit ResultTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}
  void AddRow(std::vector<nlohmann::json> row);
  size_t rows() const { return rows_.size(); }
  std::string Render(OutputFormat format) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<nlohmann::json>> rows_;
};

// Writes through a temporary sibling and renames it into place.
void WriteFileAtomic(const std::filesystem::path& path, const std::string& content);
std::string ReadFile(const std::filesystem::path& path);

struct NamedManifest {
  std::string label;
  Manifest manifest;
};

struct NamedTrace {
  std::string label;
  Trace trace;
};

std::vector<NamedManifest> LoadManifests(const ExperimentConfig& config, uint64_t seed);
std::vector<NamedTrace> LoadTraces(const ExperimentConfig& config, uint64_t seed);
PlayerConfig LoadPlayerConfig(const ExperimentConfig& config);
MpcTableSpec LoadTableSpec(const ExperimentConfig& config);

// Policy ids: fixed, rb, bb, mpc, fastmpc, mpc_clairvoyant, rdos, external.
// `trace` is only consulted by the clairvoyant variant.
std::unique_ptr<AbrPolicy> MakePolicy(const nlohmann::json& block, const ExperimentConfig& config,
                                      const Trace& trace, const PlayerConfig& player, int jobs);
std::string PolicyLabel(const nlohmann::json& block);

CommandReport CmdSimulate(const ExperimentConfig& config, const RunOptions& options);
CommandReport CmdMpcTable(const ExperimentConfig& config, const RunOptions& options);
CommandReport CmdQoe(const ExperimentConfig& config, const RunOptions& options);
CommandReport CmdSubjective(const ExperimentConfig& config, const RunOptions& options);
CommandReport CmdStats(const ExperimentConfig& config, const RunOptions& options);
CommandReport CmdTraces(const ExperimentConfig& config, const RunOptions& options);

int RunCli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace abrsim

#endif  // ABRSIM_CLI_H_
