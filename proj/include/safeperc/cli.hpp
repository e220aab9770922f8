// Copyright 2026 The safeperc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "safeperc/trainer.hpp"

namespace safeperc {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitConfig = 2, kExitRuntime = 3 };

// Columns: epoch, loss_total, loss_pc, loss_rb, rb1..rb4, wall_time_s.
std::string training_log_csv(const std::vector<EpochLog>& log);

// Entry point of the `safeperc` tool. Environment overrides:
// SAFEPERC_LOG_DIR (paths.log_dir) and SAFEPERC_WORKERS (workers); command
// line flags take precedence over both.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace safeperc
