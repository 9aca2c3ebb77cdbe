// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "cli.hpp"

namespace satcn::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("not a valid number: '" + v + "'");
  return out;
}

}  // namespace

ConfigError::ConfigError(const std::string& source, std::size_t line, const std::string& key,
                         const std::string& msg)
    : std::runtime_error(source + ":" + std::to_string(line) + (key.empty() ? "" : ": key '" + key + "'") +
                         ": " + msg) {}

CliConfig parse_config(const std::string& text, const std::string& source,
                       const std::filesystem::path& base_dir) {
  CliConfig cfg;
  auto size = [](std::size_t& field) {
    return [&field](const std::string& v) { field = parse_number<std::size_t>(v); };
  };
  auto real = [](double& field) {
    return [&field](const std::string& v) { field = parse_number<double>(v); };
  };
  auto path = [&base_dir](std::optional<std::filesystem::path>& field) {
    return [&field, &base_dir](const std::string& v) {
      std::filesystem::path p(v);
      field = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
  };
  const std::map<std::string, std::function<void(const std::string&)>> setters{
      {"stages", size(cfg.model.stages)},
      {"hidden", size(cfg.model.hidden)},
      {"bottleneck", size(cfg.model.bottleneck)},
      {"stacks", size(cfg.model.stacks)},
      {"blocks", size(cfg.model.blocks)},
      {"kernel", size(cfg.model.kernel)},
      {"fft_size", size(cfg.model.fft_size)},
      {"hop", size(cfg.model.hop)},
      {"seed", [&](const std::string& v) { cfg.model.seed = parse_number<std::uint64_t>(v); }},
      {"lr", real(cfg.train.lr)},
      {"beta1", real(cfg.train.beta1)},
      {"beta2", real(cfg.train.beta2)},
      {"adam_eps", real(cfg.train.eps)},
      {"batch", size(cfg.train.batch)},
      {"epochs", size(cfg.train.epochs)},
      {"max_steps", size(cfg.train.max_steps)},
      {"train_seed", [&](const std::string& v) { cfg.train.seed = parse_number<std::uint64_t>(v); }},
      {"clip_norm",
       [&](const std::string& v) {
         if (v == "none" || v == "off") {
           cfg.train.clip_norm.reset();
         } else {
           cfg.train.clip_norm = parse_number<double>(v);
         }
       }},
      {"train_manifest", path(cfg.train_manifest)},
      {"eval_manifest", path(cfg.eval_manifest)},
  };

  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line, "", "expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(source, line, key, "unknown key");
    if (!seen.insert(key).second) throw ConfigError(source, line, key, "repeated key");
    if (value.empty()) throw ConfigError(source, line, key, "missing value");
    try {
      it->second(value);
    } catch (const std::exception& e) {
      throw ConfigError(source, line, key, e.what());
    }
  }
  try {
    cfg.model.validate();
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, line, "", e.what());
  }
  return cfg;
}

CliConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "", "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string(), path.parent_path());
}

}  // namespace satcn::cli
