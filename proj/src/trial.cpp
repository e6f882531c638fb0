#include "qtune/trial.hpp"

namespace qtune {

nlohmann::ordered_json TrialRecord::to_json() const {
  nlohmann::ordered_json j;
  j["round"] = round;
  j["config"] = config.to_json();
  if (kernel_config) j["kernel_config"] = kernel_config->to_json();
  nlohmann::ordered_json obj = nlohmann::ordered_json::object();
  for (const auto& [k, v] : objectives) obj[k] = v;
  j["objectives"] = obj;
  if (!loss_trace.empty()) j["loss_trace"] = loss_trace;
  j["agent_attempts"] = agent_attempts;
  j["repaired"] = repaired;
  j["started_ms"] = started_ms;
  j["finished_ms"] = finished_ms;
  if (!notes.empty()) j["notes"] = notes;
  return j;
}

TrialRecord TrialRecord::from_json(const nlohmann::ordered_json& j) {
  TrialRecord t;
  t.round = j.at("round").get<int>();
  t.config = space::Configuration::from_json(j.at("config"));
  if (j.contains("kernel_config"))
    t.kernel_config = kerneltune::KernelConfig::from_json(j["kernel_config"]);
  for (const auto& [k, v] : j.at("objectives").items()) t.objectives[k] = v.get<double>();
  if (j.contains("loss_trace"))
    for (const auto& v : j["loss_trace"]) t.loss_trace.push_back(v.get<double>());
  t.agent_attempts = j.value("agent_attempts", 0);
  t.repaired = j.value("repaired", false);
  t.started_ms = j.value("started_ms", std::int64_t{0});
  t.finished_ms = j.value("finished_ms", std::int64_t{0});
  if (j.contains("notes")) t.notes = j["notes"].get<std::string>();
  return t;
}

}  // namespace qtune
