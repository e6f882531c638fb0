#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qtune/hardware.hpp"
#include "qtune/kernel_tuner.hpp"
#include "qtune/search_space.hpp"
#include "qtune/trial.hpp"

namespace qtune::prompt {

/// Unchanging prompt sections: hardware platform, deployment objective,
/// fine-tuning objective, the reasoning directive, and the response formats.
struct StaticPrompt {
  std::string system_message;
  std::string hardware_section;
  std::string deployment_section;
  std::string finetune_section;
  std::string react_directive;
  std::string response_format_examples;

  std::string text() const;  // sections joined, non-empty ones only
};

struct StaticPromptOptions {
  bool enable_finetune = true;
  bool enable_deployment = true;  // effective only when kernels are given
  bool include_react = true;
  std::string task_label;      // e.g. "QAT of ResNet32"
  std::string dataset;         // e.g. "CIFAR-10"
  std::string quant_label;     // e.g. "8-bit"
  std::string framework = "PyTorch";
  std::string extra_note;      // appended verbatim to the fine-tuning section
};

StaticPrompt render_static(const space::SearchSpace& sp,
                           const hardware::HardwareProfile* profile,
                           const std::vector<kerneltune::KernelSpec>& kernels,
                           const StaticPromptOptions& options);

struct HistoryPolicy {
  int keep_verbatim = 5;
  bool summarize_rest = true;
};

/// Per-round prompt state: recent trials verbatim, older ones as one-line
/// summaries, plus the remaining round budget.
struct DynamicPrompt {
  int rounds_left = 0;
  std::vector<std::string> trial_blocks;      // oldest -> newest
  std::vector<std::string> summaries;         // oldest -> newest
  std::vector<std::string> block_summaries;   // summary form of each verbatim block
  std::string budget_line;                    // carries "there are N rounds left"
  std::string request_line;
};

DynamicPrompt render_dynamic(const std::vector<TrialRecord>& history, int rounds_left,
                             const HistoryPolicy& policy);

struct Message {
  std::string role;
  std::string content;
};

struct PromptBundle {
  std::string system_message;
  std::vector<Message> messages;  // first entry is the system message
  int token_estimate = 0;

  nlohmann::ordered_json to_json() const;
  std::string concatenated() const;
};

/// ceil(character count / 4); a deterministic heuristic, not a tokenizer.
int estimate_tokens(const std::string& text);

/// Builds the message list and, when over the cap, demotes verbatim trial
/// blocks to summaries oldest-first (then drops the oldest summaries) until it
/// fits. The budget line and the reasoning directive are never dropped.
/// Throws StaticTooLargeError when the static prompt alone exceeds the cap.
PromptBundle assemble(const StaticPrompt& stat, const DynamicPrompt& dyn, int token_cap);

/// Label used when rendering an objective into a trial block.
std::string metric_label(const std::string& objective_name);

/// Renders a trial the way the dynamic prompt does (config, metrics, losses).
std::string render_trial_block(const TrialRecord& trial);
std::string render_trial_summary(const TrialRecord& trial);

}  // namespace qtune::prompt
