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
#include <stdexcept>
#include <string>

#include "safeperc/episode.hpp"

namespace safeperc {

// Line-delimited trajectory log. Line 1 is a header:
//   {"format":"safeperc-trajectory","version":1,"seed":..,"fog":..,
//    "n_slots":..,"vehicle":{..}}
// followed by one record per step:
//   {"t", "time", "ego":{position,lane,speed,accel,heading},
//    "objects":[{id,kind,lane,position,width,height,depth,speed,max_brake}],
//    "slots":[null | {gap,speed,lane_offset,class_evidence,intensity}],
//    "sources":[int], "fog",
//    "detections":[{tokens:[int],prob:[4],logprob:[4],object:null|{..}}],
//    "accel", "violations":[rb1,rb2,rb3,rb4]}
// Doubles are written with round-trip precision.
inline constexpr const char* kTrajectoryFormat = "safeperc-trajectory";
inline constexpr int kTrajectoryVersion = 1;

class LogParseError : public std::runtime_error {
 public:
  LogParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct TrajectoryLog {
  TrajectoryRecord record;
  VehicleParams vehicle;
};

void write_trajectory_log(std::ostream& out, const TrajectoryRecord& record,
                          const VehicleParams& vehicle);
std::string trajectory_log_string(const TrajectoryRecord& record, const VehicleParams& vehicle);

// Throws LogParseError citing the 1-based line of the first problem,
// including a missing header, a version mismatch or an empty log.
TrajectoryLog read_trajectory_log(std::istream& in);
TrajectoryLog load_trajectory_log(const std::string& path);

}  // namespace safeperc
