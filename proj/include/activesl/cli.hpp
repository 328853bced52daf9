#pragma once

// Command implementations behind the `activesl` executable. Each returns the
// process exit status: 0 success, 1 partial failure, 2 usage or parse error.

#include "activesl/engine.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace activesl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitUsage = 2;
inline constexpr const char* kOutputDirEnv = "ACTIVESL_OUTPUT_DIR";
inline constexpr int kDefaultSeedCount = 10;

struct RunConfig {
  std::vector<std::filesystem::path> instances;
  std::vector<PolicyKind> policies{PolicyKind::Ours, PolicyKind::Random, PolicyKind::Cheapest,
                                   PolicyKind::CostRand, PolicyKind::DOpt, PolicyKind::VOpt};
  std::vector<std::uint64_t> seeds;  // defaults to 0..9
  double alpha = kDefaultAlpha;
  EpisodeConfig episode;
  std::filesystem::path output_dir = "out";
  int threads = 1;
};

/// Relative instance paths resolve against `base_dir`.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {},
                           std::string_view source = "config");
RunConfig load_run_config(const std::filesystem::path& path);

int cmd_generate(const std::filesystem::path& recipe, const std::filesystem::path& out, std::ostream& os,
                 std::ostream& err);

/// `output_dir` overrides the environment variable, which overrides the config.
int cmd_run(const std::filesystem::path& config, std::optional<std::filesystem::path> output_dir,
            std::optional<int> threads, std::ostream& os, std::ostream& err);

int cmd_advise(const std::filesystem::path& session, std::ostream& os, std::ostream& err);
int cmd_record(const std::filesystem::path& session, std::size_t candidate, double y, std::ostream& os,
               std::ostream& err);

/// Re-aggregates log files; directories are searched for *.jsonl.
int cmd_report(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& out_dir,
               std::ostream& os, std::ostream& err);

/// Full command-line entry point.
int run_cli(int argc, const char* const* argv);

}  // namespace activesl
