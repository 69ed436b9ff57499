#pragma once

#include <string>
#include <vector>

#include "unicorn/error.hpp"
#include "unicorn/kv.hpp"
#include "unicorn/model.hpp"
#include "unicorn/training.hpp"

namespace unicorn::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;
inline constexpr int kExitVersion = 5;

int exit_code_for(ErrorCode code);

// Model and training settings merged from a key=value file and overrides.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  static const std::vector<std::string>& keys();
  // Unknown keys raise ErrorCode::kConfig.
  static RunConfig from_kv(const KeyValues& kv);
  static RunConfig load(const std::string& path, const std::vector<std::string>& overrides);
  // Every field, plus the PRNG algorithm id.
  std::string metadata_text() const;
};

// Runs `unicorn <subcommand> ...`; returns the exit code. Errors are reported
// on stderr as one line: "error[<class>]: <message>".
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace unicorn::cli
