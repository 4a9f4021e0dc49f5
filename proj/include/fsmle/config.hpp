#pragma once

#include <stdexcept>
#include <string>

#include "fsmle/verify.hpp"

namespace fsmle {

// Schema violations; the message names the offending field path.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutputSpec {
  std::string directory = ".";
  bool csv = true;
  bool json = true;
};

// A fully validated run description: the scenario to execute, where reports
// go, and a canonical one-line JSON echo embedded into every output file.
// The echo reflects the configuration semantics only; execution knobs such
// as the worker count are excluded so reruns stay byte-identical.
struct Config {
  Scenario scenario;
  OutputSpec output;
  std::string echo;
};

Config parse_config(const std::string& text);
Config load_config(const std::string& path);

}  // namespace fsmle
