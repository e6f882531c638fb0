#include "qtune/prompt.hpp"

#include <algorithm>
#include <sstream>

namespace qtune::prompt {

namespace {

const char* kReactDirective =
    "Before making a decision, always generate a reasoning step (Thought) to analyze the "
    "current context, considering previous results and constraints. Then, take an appropriate "
    "action (Action) based on your reasoning. After the action, observe (Observation) the "
    "outcomes that are fed back to you and adjust your approach accordingly. Identify missing "
    "information, potential errors, and formulate a strategy before taking any action.\n"
    "Each trial's configuration and results should be taken into account for a comprehensive "
    "analysis of the optimization process. Please review the history and consider your next "
    "steps before proceeding.";

const char* kSystemFinetune =
    "You are an expert assistant specialized in optimizing hyperparameters for neural "
    "networks. Your goal is to help improve the performance of neural networks by providing "
    "optimized hyperparameter configurations.";

const char* kSystemJoint =
    "You are an expert assistant specialized in optimizing hyperparameters for both "
    "fine-tuning and deployment of a neural network. Your goal is to help improve the "
    "accuracy and inference speed of the network by providing optimized hyperparameter "
    "configurations and code.";

std::string prompt_type_name(space::ParamKind kind) {
  switch (kind) {
    case space::ParamKind::UniformFloat: return "UniformFloat";
    case space::ParamKind::UniformInt: return "UniformInteger";
    case space::ParamKind::Categorical: return "Categorical";
  }
  return "?";
}

std::string param_line(const space::ParamSpec& p) {
  std::ostringstream os;
  os << "'" << p.name << "': ";
  if (!p.description.empty()) os << p.description << " ";
  os << "Type: " << prompt_type_name(p.kind);
  if (p.kind == space::ParamKind::Categorical) {
    os << ", Choices: [";
    for (std::size_t i = 0; i < p.choices.size(); ++i) {
      if (i) os << ", ";
      os << value_to_string(p.choices[i]);
    }
    os << "]";
  } else {
    os << ", Range: [";
    if (p.kind == space::ParamKind::UniformInt)
      os << static_cast<std::int64_t>(p.lower) << ", " << static_cast<std::int64_t>(p.upper);
    else
      os << format_double(p.lower) << ", " << format_double(p.upper);
    os << "]";
  }
  os << ", Default: " << value_to_string(p.default_value);
  if (p.log_scale) os << ", Log scale";
  os << ".";
  return os.str();
}

std::string config_format_example(const space::SearchSpace& sp) {
  static const char* placeholders[] = {"x", "y", "z", "w", "v", "p", "q", "r",
                                       "s", "t", "u", "a", "b", "c", "d"};
  std::ostringstream os;
  os << "Please provide the configuration in JSON format. For example:\n{";
  for (std::size_t i = 0; i < sp.params().size(); ++i) {
    if (i) os << ",\n ";
    os << "\"" << sp.params()[i].name << "\": "
       << placeholders[i % (sizeof(placeholders) / sizeof(placeholders[0]))];
  }
  os << "}";
  return os.str();
}

const char* kKernelFormatExample =
    "Please provide the execution configuration parameters and the modified kernel code in "
    "the following JSON format:\n"
    "{\"griddim\":[x,y,z],\n"
    " \"blockdim\":[a,b,c],\n"
    " \"tiling size\": t,\n"
    " \"unroll size\": u,\n"
    " \"code changed\": true,\n"
    " \"code\": \"...\"}";

}  // namespace

// Each objective section already embeds its own response schema, so the
// joined text carries every piece of static content exactly once.
std::string StaticPrompt::text() const {
  std::string out;
  auto add = [&out](const std::string& s) {
    if (s.empty()) return;
    if (!out.empty()) out += "\n\n";
    out += s;
  };
  add(hardware_section);
  add(deployment_section);
  add(finetune_section);
  add(react_directive);
  return out;
}

StaticPrompt render_static(const space::SearchSpace& sp,
                           const hardware::HardwareProfile* profile,
                           const std::vector<kerneltune::KernelSpec>& kernels,
                           const StaticPromptOptions& options) {
  const bool deployment = options.enable_deployment && !kernels.empty();
  if (!options.enable_finetune && !deployment)
    throw Error("static prompt requires at least one enabled objective");

  StaticPrompt out;
  out.system_message = deployment ? kSystemJoint : kSystemFinetune;

  if (profile != nullptr) {
    std::ostringstream os;
    os << "I plan to deploy the model on the following hardware platform. Here's more details "
          "about the hardware:\n"
       << profile->source_text << "\n"
       << "The memory limit is " << format_double(profile->memory_budget_gb)
       << " GB. Please choose an appropriate quantization bit width that satisfies the memory "
          "limitations and achieves better performance on such hardware.";
    out.hardware_section = os.str();
  }

  if (deployment) {
    std::ostringstream os;
    os << "Deployment:\n"
          "The model consists of multiple compute kernels, including Softmax, SiLU, MatMul and "
          "others. Please optimize the execution configuration and implementations of these "
          "kernels. The deployment latency results will be fed back to you. There are two ways "
          "to optimize these kernels: first, find the optimal kernel execution parameters, "
          "including computation block size for parallelization, tiling size, and loop "
          "unrolling; second, adapt the execution strategy, specifying memory hierarchy "
          "settings for optimized tensor placement (e.g., global, shared, or local memory) and "
          "thread scheduling to balance workload distribution. If optimizing the execution "
          "configuration requires changes to the kernel implementation, ensure the modified "
          "code is correct and functional.\n"
       << kKernelFormatExample;
    for (const auto& k : kernels) {
      os << "\nThe kernel to optimize is [" << kerneltune::kernel_kind_name(k.kernel)
         << "], this is the execution information about this kernel:\n"
         << k.to_prompt_json().dump(2);
    }
    out.deployment_section = os.str();
  }

  if (options.enable_finetune) {
    std::ostringstream os;
    os << "You are assisting in optimizing the hyperparameters for "
       << (options.task_label.empty() ? sp.name() : options.task_label) << ".\n";
    if (!options.quant_label.empty()) os << "Using [" << options.quant_label << "] Quantization.\n";
    if (!options.dataset.empty()) os << "The dataset is " << options.dataset << ".\n";
    os << "Code is based on " << options.framework << ".\n"
       << "Below is the hyperparameter search space:\n";
    for (const auto& p : sp.params()) os << param_line(p) << "\n";
    os << "You will receive accuracy results after each attempt. The goal is to find a "
          "configuration that minimizes the error rate within the given budget.\n"
          "If the loss remains unchanged, explore different parts of the search space.\n"
          "You should provide only one set of configurations per iteration. Once I provide the "
          "training results, you will return an optimized configuration.\n"
          "Make sure that all hyperparameters remain within the defined range.\n"
          "For the first round, it is recommended to use the default parameters for training.";
    if (!options.extra_note.empty()) os << "\n" << options.extra_note;
    os << "\n" << config_format_example(sp);
    out.finetune_section = os.str();
  }

  if (options.include_react) out.react_directive = kReactDirective;

  std::string formats;
  if (options.enable_finetune) formats = config_format_example(sp);
  if (deployment) {
    if (!formats.empty()) formats += "\n";
    formats += kKernelFormatExample;
  }
  out.response_format_examples = formats;
  return out;
}

std::string metric_label(const std::string& objective_name) {
  if (objective_name == "accuracy") return "Verification accuracy";
  if (objective_name == "latency_us" || objective_name == "latency") return "Latency";
  return objective_name;
}

namespace {

std::string render_metrics(const std::map<std::string, double>& objectives) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [name, value] : objectives) {
    if (!first) os << " ";
    first = false;
    os << metric_label(name) << ": " << format_double(value);
    if (name == "latency_us" || name == "latency") os << " us";
    os << ".";
  }
  return os.str();
}

}  // namespace

std::string render_trial_block(const TrialRecord& trial) {
  std::ostringstream os;
  if (!trial.config.empty())
    os << "The current configuration is:" << trial.config.to_json_string() << "\n";
  if (trial.kernel_config)
    os << "The current execution configuration is:" << trial.kernel_config->to_json().dump()
       << "\n";
  os << "The result based on this configuration: " << render_metrics(trial.objectives);
  if (!trial.loss_trace.empty()) {
    os << " List of recent training losses(avg loss per epoch): [";
    for (std::size_t i = 0; i < trial.loss_trace.size(); ++i) {
      if (i) os << ", ";
      os << format_double(trial.loss_trace[i]);
    }
    os << "].";
  }
  return os.str();
}

std::string render_trial_summary(const TrialRecord& trial) {
  std::string headline;
  if (trial.objectives.count("accuracy")) {
    headline = metric_label("accuracy") + ": " + format_double(trial.objectives.at("accuracy"));
  } else if (!trial.objectives.empty()) {
    const auto& [name, value] = *trial.objectives.begin();
    headline = metric_label(name) + ": " + format_double(value);
  } else {
    headline = "no result";
  }
  return "Round " + std::to_string(trial.round) + ": " + headline + ".";
}

DynamicPrompt render_dynamic(const std::vector<TrialRecord>& history, int rounds_left,
                             const HistoryPolicy& policy) {
  if (rounds_left < 0) throw Error("rounds_left must be >= 0");
  DynamicPrompt out;
  out.rounds_left = rounds_left;

  const std::size_t keep =
      std::min<std::size_t>(history.size(), static_cast<std::size_t>(std::max(0, policy.keep_verbatim)));
  const std::size_t evicted = history.size() - keep;
  if (policy.summarize_rest)
    for (std::size_t i = 0; i < evicted; ++i)
      out.summaries.push_back(render_trial_summary(history[i]));
  for (std::size_t i = evicted; i < history.size(); ++i) {
    out.trial_blocks.push_back(render_trial_block(history[i]));
    out.block_summaries.push_back(render_trial_summary(history[i]));
  }

  out.budget_line = "Note that there are " + std::to_string(rounds_left) +
                    " rounds left. Please try to make effective attempts.";
  out.request_line = history.empty()
                         ? "Please provide a configuration in the required JSON format."
                         : "Please optimize and provide a set of optimized configurations.";
  return out;
}

int estimate_tokens(const std::string& text) {
  return static_cast<int>((text.size() + 3) / 4);
}

nlohmann::ordered_json PromptBundle::to_json() const {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& m : messages) {
    nlohmann::ordered_json e;
    e["role"] = m.role;
    e["content"] = m.content;
    arr.push_back(e);
  }
  return arr;
}

std::string PromptBundle::concatenated() const {
  std::string all;
  for (const auto& m : messages) {
    if (!all.empty()) all += "\n";
    all += m.content;
  }
  return all;
}

namespace {

PromptBundle build_bundle(const StaticPrompt& stat, const DynamicPrompt& dyn,
                          const std::vector<std::string>& summaries,
                          const std::vector<std::string>& blocks) {
  PromptBundle b;
  b.system_message = stat.system_message;
  b.messages.push_back({"system", stat.system_message});
  b.messages.push_back({"user", stat.text()});
  if (!summaries.empty()) {
    std::string s = "Summary of earlier trials:";
    for (const auto& line : summaries) s += "\n" + line;
    b.messages.push_back({"user", s});
  }
  for (const auto& block : blocks) b.messages.push_back({"user", block});
  b.messages.push_back({"user", dyn.budget_line + " " + dyn.request_line});
  b.token_estimate = estimate_tokens(b.concatenated());
  return b;
}

}  // namespace

PromptBundle assemble(const StaticPrompt& stat, const DynamicPrompt& dyn, int token_cap) {
  const PromptBundle skeleton = build_bundle(stat, dyn, {}, {});
  if (skeleton.token_estimate > token_cap)
    throw StaticTooLargeError("static prompt alone estimates " +
                              std::to_string(skeleton.token_estimate) + " tokens, cap is " +
                              std::to_string(token_cap));

  std::vector<std::string> summaries = dyn.summaries;
  std::vector<std::string> blocks = dyn.trial_blocks;
  std::vector<std::string> block_summaries = dyn.block_summaries;

  PromptBundle b = build_bundle(stat, dyn, summaries, blocks);
  while (b.token_estimate > token_cap && !blocks.empty()) {
    summaries.push_back(block_summaries.front());
    blocks.erase(blocks.begin());
    block_summaries.erase(block_summaries.begin());
    b = build_bundle(stat, dyn, summaries, blocks);
  }
  while (b.token_estimate > token_cap && !summaries.empty()) {
    summaries.erase(summaries.begin());
    b = build_bundle(stat, dyn, summaries, blocks);
  }
  return b;
}

}  // namespace qtune::prompt
