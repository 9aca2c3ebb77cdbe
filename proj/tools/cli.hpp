// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "satcn/model.hpp"
#include "satcn/train.hpp"

namespace satcn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Settings read from a `key = value` file.
struct CliConfig {
  ModelConfig model;
  train::TrainConfig train;
  std::optional<std::filesystem::path> train_manifest;
  std::optional<std::filesystem::path> eval_manifest;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, std::size_t line, const std::string& key, const std::string& msg);
};

/// Grammar: `key = value` per line, `#` starts a comment, blank lines ignored.
/// Unknown keys, repeated keys and malformed values are errors; the parsed
/// model and train configs are validated before returning. Relative data
/// paths are resolved against `base_dir`.
CliConfig parse_config(const std::string& text, const std::string& source = "<config>",
                       const std::filesystem::path& base_dir = {});
CliConfig load_config(const std::filesystem::path& path);

/// Entry point shared by the executable and the tests. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace satcn::cli
