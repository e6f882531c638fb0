#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qtune/errors.hpp"
#include "qtune/kernel_tuner.hpp"
#include "qtune/prompt.hpp"
#include "qtune/search_space.hpp"

namespace qtune::agent {

struct BackendCaps {
  std::string name;
  int max_input_tokens = 128000;
};

/// A chat completion backend: a remote endpoint or a deterministic mock.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual const BackendCaps& caps() const = 0;
  virtual std::string complete(const std::vector<prompt::Message>& messages) = 0;
};

/// Per-call token/latency/cost bookkeeping.
class UsageLedger {
 public:
  explicit UsageLedger(double unit_price_per_token = 3.333e-5)
      : unit_price_(unit_price_per_token) {}

  void record(int input_tokens, int output_tokens, double wall_seconds);

  int calls() const { return calls_; }
  std::int64_t input_tokens() const { return input_tokens_; }
  std::int64_t output_tokens() const { return output_tokens_; }
  const std::vector<double>& wall_latency_seconds() const { return latencies_; }
  double cost_estimate() const {
    return unit_price_ * static_cast<double>(input_tokens_ + output_tokens_);
  }
  double unit_price() const { return unit_price_; }

  nlohmann::ordered_json to_json() const;

 private:
  double unit_price_;
  int calls_ = 0;
  std::int64_t input_tokens_ = 0;
  std::int64_t output_tokens_ = 0;
  std::vector<double> latencies_;
};

/// Sends a bundle and records one ledger entry. Throws CapacityError before
/// any transport when the bundle exceeds the backend's input cap.
std::string send(ChatBackend& backend, const prompt::PromptBundle& bundle, UsageLedger& ledger);

enum class FailureKind { BadFormat, ConstraintViolation, OffTopic };
std::string failure_kind_name(FailureKind kind);

/// Buckets validation violations into the response-failure taxonomy:
/// type mismatches are format-level, everything else is a constraint breach.
FailureKind classify_violations(const space::ValidationResult& verdict);

struct ResponseFailure {
  FailureKind kind;
  std::string details;
  std::vector<space::Violation> violations;
  /// Extracted but rejected configuration, kept for clamp repair.
  std::optional<space::Configuration> candidate;
};

enum class Expect { Finetune, Kernel, Both };

struct AgentResponse {
  std::string raw_text;
  std::optional<space::Configuration> finetune_config;
  std::optional<kerneltune::KernelConfig> kernel_config;
  std::optional<std::string> thought_text;
  std::optional<ResponseFailure> failure;

  bool ok() const { return !failure.has_value(); }
};

/// Extracts the first balanced JSON object matching the expected schema
/// (prose and code fences around it are tolerated; leading prose becomes
/// thought_text), validates it, and classifies any problem as BadFormat,
/// ConstraintViolation, or OffTopic. Failures are data, never exceptions.
AgentResponse parse_response(const std::string& raw, const space::SearchSpace& sp, Expect expect);

struct RetryPolicy {
  int max_attempts = 3;
  bool clamp_repair = true;
};

struct Proposal {
  std::optional<space::Configuration> finetune;
  std::optional<kerneltune::KernelConfig> kernel;
  int attempts = 0;
  bool repaired = false;
  std::string raw_text;
  std::optional<std::string> thought_text;
};

class ProposalExhaustedError : public Error {
 public:
  ProposalExhaustedError(std::string what, std::vector<ResponseFailure> failures)
      : Error(std::move(what)), failures_(std::move(failures)) {}
  const std::vector<ResponseFailure>& failures() const { return failures_; }

 private:
  std::vector<ResponseFailure> failures_;
};

/// Send/parse loop with templated corrective messages per failure class. On
/// exhaustion, an out-of-range fine-tuning configuration is repaired via
/// clamp() when the policy allows; otherwise all failure records surface.
Proposal propose(ChatBackend& backend, const prompt::PromptBundle& bundle,
                 const space::SearchSpace& sp, Expect expect, const RetryPolicy& policy,
                 UsageLedger& ledger);

/// Deterministic test double replaying a fixed list of replies (the last one
/// repeats once the script runs out).
std::unique_ptr<ChatBackend> make_scripted_backend(std::vector<std::string> replies,
                                                   int max_input_tokens = 128000);

/// Deterministic mock agent: round one proposes the space defaults, later
/// rounds perturb one parameter of the latest configuration found in the
/// bundle (log-steps for log-scale parameters), always emitting schema-valid
/// JSON wrapped in Thought/Action prose.
std::unique_ptr<ChatBackend> make_coordinate_descent_backend(space::SearchSpace sp,
                                                             std::uint64_t seed,
                                                             int max_input_tokens = 128000);

struct HttpBackendConfig {
  std::string endpoint = "http://localhost:8000";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4-0613";
  double temperature = 0.0;
  int timeout_seconds = 120;
  int max_input_tokens = 128000;
  std::string api_key_env = "QTUNE_API_KEY";
};

/// Generic chat-completion payload for one bundle (role-tagged message list).
nlohmann::ordered_json build_chat_request(const HttpBackendConfig& cfg,
                                          const std::vector<prompt::Message>& messages);

/// Assistant text from a chat-completion response body.
std::string extract_chat_reply(const nlohmann::ordered_json& response);

std::unique_ptr<ChatBackend> make_http_backend(const HttpBackendConfig& cfg);

struct UnitPrices {
  double input_per_token = 3.333e-5;
  double output_per_token = 3.333e-5;
};

struct CostReport {
  std::int64_t total_tokens = 0;
  double total_cost = 0.0;
  double mean_latency_seconds = 0.0;
};

CostReport cost_report(const UsageLedger& ledger, const UnitPrices& prices);

}  // namespace qtune::agent
