#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qtune/kernel_tuner.hpp"
#include "qtune/search_space.hpp"

namespace qtune {

/// One optimization round as persisted to the trial log: the configuration
/// that was run, the measured objectives, and agent provenance.
struct TrialRecord {
  int round = 0;
  space::Configuration config;
  std::optional<kerneltune::KernelConfig> kernel_config;
  std::map<std::string, double> objectives;
  std::vector<double> loss_trace;
  int agent_attempts = 0;
  bool repaired = false;
  std::int64_t started_ms = 0;
  std::int64_t finished_ms = 0;
  std::string notes;

  nlohmann::ordered_json to_json() const;
  static TrialRecord from_json(const nlohmann::ordered_json& j);
};

}  // namespace qtune
