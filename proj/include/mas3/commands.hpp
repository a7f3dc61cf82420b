#pragma once

// Pipeline stages as named commands over a flat JSON config. Shared by the
// command line tool and the Python module.

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "mas3/report.hpp"

namespace mas3 {

struct CommandInfo {
  std::string name;
  std::string help;
  // Non-RunConfig keys the command reads (directories, sweep settings).
  std::vector<std::string> keys;
};

const std::vector<CommandInfo>& command_table();

// Every non-RunConfig key any command accepts.
const std::set<std::string>& command_keys();

struct CommandResult {
  Json summary;       // one-line JSON summary, "schema" = kReportSchema
  int exit_code = 0;  // 0, or 2 for a diverged run / exact-mode triangle violation
};

// Runs `name` with the flat config `flat` (RunConfig keys plus command keys),
// writing artifacts under `out_dir`. Errors propagate as exceptions.
CommandResult run_command(const std::string& name, const Json& flat,
                          const std::filesystem::path& out_dir);

// Parses "0.5" -> number, "true" -> bool, anything else -> string.
Json scalar_from_text(const std::string& text);

// Source-role dataset directories at or directly below `dir`.
std::vector<std::filesystem::path> source_datasets_in(const std::filesystem::path& dir);

}  // namespace mas3
