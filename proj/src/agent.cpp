#include "qtune/agent.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <random>

namespace qtune::agent {

void UsageLedger::record(int input_tokens, int output_tokens, double wall_seconds) {
  ++calls_;
  input_tokens_ += input_tokens;
  output_tokens_ += output_tokens;
  latencies_.push_back(wall_seconds);
}

nlohmann::ordered_json UsageLedger::to_json() const {
  nlohmann::ordered_json j;
  j["calls"] = calls_;
  j["input_tokens"] = input_tokens_;
  j["output_tokens"] = output_tokens_;
  j["wall_latency_seconds"] = latencies_;
  j["unit_price_per_token"] = unit_price_;
  j["cost_estimate"] = cost_estimate();
  return j;
}

std::string send(ChatBackend& backend, const prompt::PromptBundle& bundle, UsageLedger& ledger) {
  if (bundle.token_estimate > backend.caps().max_input_tokens)
    throw CapacityError("prompt bundle estimates " + std::to_string(bundle.token_estimate) +
                        " tokens, backend '" + backend.caps().name + "' accepts at most " +
                        std::to_string(backend.caps().max_input_tokens));
  const auto start = std::chrono::steady_clock::now();
  std::string reply = backend.complete(bundle.messages);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ledger.record(bundle.token_estimate, prompt::estimate_tokens(reply), wall);
  return reply;
}

std::string failure_kind_name(FailureKind kind) {
  switch (kind) {
    case FailureKind::BadFormat: return "BadFormat";
    case FailureKind::ConstraintViolation: return "ConstraintViolation";
    case FailureKind::OffTopic: return "OffTopic";
  }
  return "?";
}

FailureKind classify_violations(const space::ValidationResult& verdict) {
  if (verdict.valid()) throw Error("classify_violations requires a failed verdict");
  return verdict.has(space::ViolationKind::TypeMismatch) ? FailureKind::BadFormat
                                                         : FailureKind::ConstraintViolation;
}

namespace {

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;  // one past the closing brace
};

// Top-level balanced {...} spans, skipping string literals and escapes.
std::vector<Span> balanced_objects(const std::string& text) {
  std::vector<Span> spans;
  int depth = 0;
  bool in_string = false;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\')
        ++i;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      if (depth == 0) start = i;
      ++depth;
    } else if (c == '}') {
      if (depth > 0 && --depth == 0) spans.push_back({start, i + 1});
    }
  }
  return spans;
}

bool contains_icase(const std::string& haystack, const std::string& needle) {
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(),
                        [](char a, char b) {
                          return std::tolower(static_cast<unsigned char>(a)) ==
                                 std::tolower(static_cast<unsigned char>(b));
                        });
  return it != haystack.end();
}

bool looks_on_topic(const std::string& text, const space::SearchSpace& sp) {
  for (const auto& p : sp.params())
    if (contains_icase(text, p.name)) return true;
  for (const char* kw : {"config", "json", "kernel", "griddim", "hyperparameter", "learning"})
    if (contains_icase(text, kw)) return true;
  return false;
}

bool is_kernel_object(const nlohmann::ordered_json& j) {
  return j.contains("griddim") || j.contains("blockdim");
}

bool is_finetune_object(const nlohmann::ordered_json& j, const space::SearchSpace& sp) {
  if (!j.is_object() || j.empty() || is_kernel_object(j)) return false;
  bool any_known = false;
  for (const auto& [k, v] : j.items()) {
    if (!(v.is_number() || v.is_string() || v.is_boolean())) return false;
    if (sp.find(k) != nullptr) any_known = true;
  }
  return any_known;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string violations_text(const std::vector<space::Violation>& vs) {
  std::string s;
  for (const auto& v : vs) {
    if (!s.empty()) s += ", ";
    s += v.to_string();
  }
  return s;
}

}  // namespace

AgentResponse parse_response(const std::string& raw, const space::SearchSpace& sp, Expect expect) {
  AgentResponse out;
  out.raw_text = raw;

  const auto spans = balanced_objects(raw);
  std::optional<nlohmann::ordered_json> finetune_doc, kernel_doc;
  std::size_t first_match = std::string::npos;

  for (const auto& span : spans) {
    nlohmann::ordered_json doc;
    try {
      doc = nlohmann::ordered_json::parse(raw.substr(span.begin, span.end - span.begin));
    } catch (const nlohmann::json::exception&) {
      continue;
    }
    if (!doc.is_object()) continue;
    if ((expect == Expect::Finetune || expect == Expect::Both) && !finetune_doc &&
        is_finetune_object(doc, sp)) {
      finetune_doc = doc;
      first_match = std::min(first_match, span.begin);
    }
    if ((expect == Expect::Kernel || expect == Expect::Both) && !kernel_doc &&
        is_kernel_object(doc)) {
      kernel_doc = doc;
      first_match = std::min(first_match, span.begin);
    }
  }

  if (first_match != std::string::npos && first_match > 0) {
    std::string prose = trim(raw.substr(0, first_match));
    if (!prose.empty()) out.thought_text = prose;
  }

  auto fail = [&](FailureKind kind, std::string details,
                  std::vector<space::Violation> violations = {},
                  std::optional<space::Configuration> candidate = std::nullopt) {
    out.failure = ResponseFailure{kind, std::move(details), std::move(violations),
                                  std::move(candidate)};
    out.finetune_config.reset();
    out.kernel_config.reset();
    return out;
  };

  const bool need_finetune = expect == Expect::Finetune || expect == Expect::Both;
  const bool need_kernel = expect == Expect::Kernel || expect == Expect::Both;

  if ((need_finetune && !finetune_doc) || (need_kernel && !kernel_doc)) {
    if (!looks_on_topic(raw, sp))
      return fail(FailureKind::OffTopic, "reply contains no content related to the task");
    std::string what = need_finetune && !finetune_doc
                           ? "no JSON object with the expected hyperparameter keys found"
                           : "no JSON object with the expected kernel keys found";
    return fail(FailureKind::BadFormat, what);
  }

  if (finetune_doc) {
    space::Configuration cfg;
    try {
      cfg = space::Configuration::from_json(*finetune_doc, sp.name());
    } catch (const Error& e) {
      return fail(FailureKind::BadFormat, e.what());
    }
    auto verdict = space::validate(sp, cfg);
    if (!verdict.valid()) {
      const std::string details = violations_text(verdict.violations);
      return fail(classify_violations(verdict), details, verdict.violations, cfg);
    }
    out.finetune_config = std::move(cfg);
  }

  if (kernel_doc) {
    kerneltune::KernelConfig kc;
    try {
      kc = kerneltune::KernelConfig::from_json(*kernel_doc);
    } catch (const Error& e) {
      return fail(FailureKind::BadFormat, e.what());
    } catch (const nlohmann::json::exception& e) {
      return fail(FailureKind::BadFormat, e.what());
    }
    try {
      kerneltune::check_kernel_config(kc);
    } catch (const InvalidConfigError& e) {
      return fail(FailureKind::ConstraintViolation, e.what());
    }
    out.kernel_config = std::move(kc);
  }

  return out;
}

namespace {

std::string corrective_message(const ResponseFailure& f) {
  const std::string prefix = failure_kind_name(f.kind) + ": ";
  switch (f.kind) {
    case FailureKind::BadFormat:
      return prefix + "your previous reply did not follow the required format (" + f.details +
             "). Respond with exactly one JSON object in the specified format.";
    case FailureKind::ConstraintViolation:
      return prefix + "your previous configuration violated predefined constraints: " +
             f.details +
             ". Make sure that all hyperparameters remain within the defined range and provide "
             "a corrected JSON configuration.";
    case FailureKind::OffTopic:
      return prefix +
             "your previous reply contained information unrelated to the optimization task. "
             "Focus on the task and provide a JSON configuration in the specified format.";
  }
  return "Please provide a JSON configuration in the specified format.";
}

}  // namespace

Proposal propose(ChatBackend& backend, const prompt::PromptBundle& bundle,
                 const space::SearchSpace& sp, Expect expect, const RetryPolicy& policy,
                 UsageLedger& ledger) {
  if (policy.max_attempts < 1) throw Error("retry policy requires max_attempts >= 1");

  prompt::PromptBundle working = bundle;
  std::vector<ResponseFailure> failures;

  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    const std::string reply = send(backend, working, ledger);
    AgentResponse resp = parse_response(reply, sp, expect);
    if (resp.ok()) {
      Proposal p;
      p.finetune = std::move(resp.finetune_config);
      p.kernel = std::move(resp.kernel_config);
      p.attempts = attempt;
      p.raw_text = std::move(resp.raw_text);
      p.thought_text = std::move(resp.thought_text);
      return p;
    }
    failures.push_back(*resp.failure);
    if (attempt < policy.max_attempts) {
      working.messages.push_back({"user", corrective_message(*resp.failure)});
      working.token_estimate = prompt::estimate_tokens(working.concatenated());
    }
  }

  if (policy.clamp_repair && expect == Expect::Finetune) {
    for (auto it = failures.rbegin(); it != failures.rend(); ++it) {
      if (it->kind != FailureKind::ConstraintViolation || !it->candidate) continue;
      bool type_correct = true;
      for (const auto& v : it->violations)
        if (v.kind == space::ViolationKind::TypeMismatch ||
            v.kind == space::ViolationKind::UnknownParameter)
          type_correct = false;
      if (!type_correct) continue;
      try {
        space::Configuration repaired = space::clamp(sp, *it->candidate);
        Proposal p;
        p.finetune = std::move(repaired);
        p.attempts = policy.max_attempts;
        p.repaired = true;
        return p;
      } catch (const UnclampableError&) {
        continue;
      }
    }
  }

  std::string what = "agent produced no valid proposal in " +
                     std::to_string(policy.max_attempts) + " attempts (";
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (i) what += ", ";
    what += failure_kind_name(failures[i].kind);
  }
  what += ")";
  throw ProposalExhaustedError(what, std::move(failures));
}

namespace {

class ScriptedBackend : public ChatBackend {
 public:
  ScriptedBackend(std::vector<std::string> replies, int max_input_tokens)
      : replies_(std::move(replies)) {
    if (replies_.empty()) throw Error("scripted backend requires a non-empty reply list");
    caps_.name = "scripted-mock";
    caps_.max_input_tokens = max_input_tokens;
  }

  const BackendCaps& caps() const override { return caps_; }

  std::string complete(const std::vector<prompt::Message>&) override {
    const std::string& r = replies_[std::min(next_, replies_.size() - 1)];
    ++next_;
    return r;
  }

 private:
  BackendCaps caps_;
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
};

class CoordinateDescentBackend : public ChatBackend {
 public:
  CoordinateDescentBackend(space::SearchSpace sp, std::uint64_t seed, int max_input_tokens)
      : space_(std::move(sp)), seed_(seed) {
    caps_.name = "coordinate-descent-mock";
    caps_.max_input_tokens = max_input_tokens;
  }

  const BackendCaps& caps() const override { return caps_; }

  std::string complete(const std::vector<prompt::Message>& messages) override {
    static const std::string marker = "The current configuration is:";
    std::optional<space::Configuration> latest;
    std::size_t rounds_seen = 0;
    for (const auto& m : messages) {
      std::size_t pos = 0;
      while ((pos = m.content.find(marker, pos)) != std::string::npos) {
        pos += marker.size();
        const std::size_t brace = m.content.find('{', pos);
        if (brace == std::string::npos) continue;
        const auto spans = balanced_objects(m.content.substr(brace));
        if (spans.empty() || spans.front().begin != 0) continue;
        try {
          auto doc = nlohmann::ordered_json::parse(
              m.content.substr(brace + spans.front().begin, spans.front().end));
          latest = space::Configuration::from_json(doc, space_.name());
          ++rounds_seen;
        } catch (...) {
        }
      }
    }

    if (!latest) {
      return "Thought: first round; the recommended default parameters are used.\nAction: "
             "propose the default configuration.\n" +
             space::default_config(space_).to_json_string() +
             "\nObservation: awaiting the training result.";
    }

    space::Configuration next = perturb(*latest, rounds_seen);
    return "Thought: reviewing the latest result and the history before adjusting a single "
           "parameter.\nAction: propose an updated configuration.\n" +
           next.to_json_string() + "\nObservation: awaiting the training result.";
  }

 private:
  space::Configuration perturb(const space::Configuration& base, std::size_t round) const {
    space::Configuration repaired = space::clamp(space_, base);
    if (space_.size() == 0) return repaired;

    const std::size_t idx = (round - 1) % space_.size();
    const auto& p = space_.params()[idx];
    const double dir = (space::derive_seed(seed_, round) & 1) ? 1.0 : -1.0;

    auto perturb_value = [&](double direction) -> Value {
      const Value* cur = repaired.find(p.name);
      switch (p.kind) {
        case space::ParamKind::UniformFloat: {
          double x = value_as_double(*cur);
          if (p.log_scale) {
            const double step = 0.1 * (std::log(p.upper) - std::log(p.lower));
            x = std::exp(std::log(x) + direction * step);
          } else {
            x += direction * 0.1 * (p.upper - p.lower);
          }
          return std::max(p.lower, std::min(p.upper, x));
        }
        case space::ParamKind::UniformInt: {
          auto x = static_cast<std::int64_t>(std::llround(value_as_double(*cur)));
          x += static_cast<std::int64_t>(direction);
          x = std::max<std::int64_t>(static_cast<std::int64_t>(p.lower),
                                     std::min<std::int64_t>(static_cast<std::int64_t>(p.upper), x));
          return x;
        }
        case space::ParamKind::Categorical: {
          std::size_t i = 0;
          for (std::size_t k = 0; k < p.choices.size(); ++k)
            if (value_equal(p.choices[k], *cur)) i = k;
          const auto n = static_cast<std::ptrdiff_t>(p.choices.size());
          auto j = static_cast<std::ptrdiff_t>(i) + (direction > 0 ? 1 : -1);
          j = std::max<std::ptrdiff_t>(0, std::min(n - 1, j));
          return p.choices[static_cast<std::size_t>(j)];
        }
      }
      return *cur;
    };

    Value moved = perturb_value(dir);
    if (value_equal(moved, *repaired.find(p.name))) moved = perturb_value(-dir);
    repaired.set(p.name, moved);
    return repaired;
  }

  BackendCaps caps_;
  space::SearchSpace space_;
  std::uint64_t seed_;
};

}  // namespace

std::unique_ptr<ChatBackend> make_scripted_backend(std::vector<std::string> replies,
                                                   int max_input_tokens) {
  return std::make_unique<ScriptedBackend>(std::move(replies), max_input_tokens);
}

std::unique_ptr<ChatBackend> make_coordinate_descent_backend(space::SearchSpace sp,
                                                             std::uint64_t seed,
                                                             int max_input_tokens) {
  return std::make_unique<CoordinateDescentBackend>(std::move(sp), seed, max_input_tokens);
}

nlohmann::ordered_json build_chat_request(const HttpBackendConfig& cfg,
                                          const std::vector<prompt::Message>& messages) {
  nlohmann::ordered_json req;
  req["model"] = cfg.model;
  req["temperature"] = cfg.temperature;
  req["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : messages) {
    nlohmann::ordered_json e;
    e["role"] = m.role;
    e["content"] = m.content;
    req["messages"].push_back(e);
  }
  return req;
}

std::string extract_chat_reply(const nlohmann::ordered_json& response) {
  if (response.contains("choices") && response["choices"].is_array() &&
      !response["choices"].empty()) {
    const auto& first = response["choices"][0];
    if (first.contains("message") && first["message"].contains("content"))
      return first["message"]["content"].get<std::string>();
  }
  throw TransportError("chat response has no choices[0].message.content: " + response.dump());
}

CostReport cost_report(const UsageLedger& ledger, const UnitPrices& prices) {
  CostReport r;
  r.total_tokens = ledger.input_tokens() + ledger.output_tokens();
  r.total_cost = prices.input_per_token * static_cast<double>(ledger.input_tokens()) +
                 prices.output_per_token * static_cast<double>(ledger.output_tokens());
  const auto& lat = ledger.wall_latency_seconds();
  if (!lat.empty()) {
    double sum = 0;
    for (double v : lat) sum += v;
    r.mean_latency_seconds = sum / static_cast<double>(lat.size());
  }
  return r;
}

}  // namespace qtune::agent
