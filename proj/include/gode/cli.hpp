// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace gode::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2 };

/// Entry point shared by the `gode` binary and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// `key = value` lines grouped by `[section]`; keys before any section land in "".
using ConfigFile = std::map<std::string, std::vector<std::pair<std::string, std::string>>>;
ConfigFile parse_config(std::istream& in);

/// Inserts settings from `--config FILE` for the chosen subcommand: keys of the
/// unnamed and [common] sections, then the subcommand's own section. Keys already
/// given as flags are skipped, so flags > file > defaults.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

}  // namespace gode::cli
