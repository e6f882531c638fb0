#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qtune/errors.hpp"

namespace qtune::hardware {

enum class Precision { FP16, INT8, INT4 };

std::string precision_name(Precision p);
Precision precision_from_name(const std::string& name);

/// Weight/activation bit-widths. Label fixes the bit mapping:
/// FP16 -> 16/16, INT8 -> 8/8, INT4 -> 4/4, WxAy -> x/y.
struct QuantScheme {
  std::string label;
  int weight_bits = 16;
  int activation_bits = 16;

  static QuantScheme fp16() { return {"FP16", 16, 16}; }
  static QuantScheme int8() { return {"INT8", 8, 8}; }
  static QuantScheme int4() { return {"INT4", 4, 4}; }
  static QuantScheme w8a8() { return {"W8A8", 8, 8}; }
  static QuantScheme w4a4() { return {"W4A4", 4, 4}; }
  static QuantScheme w2a2() { return {"W2A2", 2, 2}; }
  static QuantScheme from_label(const std::string& label);

  bool operator==(const QuantScheme& o) const { return label == o.label; }
};

struct HardwareProfile {
  std::string name;
  double memory_budget_gb = 0.0;
  std::set<Precision> native_precisions;
  double fp16_tflops = 0.0;
  double int8_tops = 0.0;
  double int4_tops = 0.0;
  std::optional<Precision> int4_emulated_via;
  std::string notes;
  std::string source_text;  // raw document, embedded verbatim in prompts

  bool is_native(Precision p) const { return native_precisions.count(p) > 0; }
  /// Declared throughput figure for the precision a scheme's weights use.
  double throughput_for(const QuantScheme& s) const;

  void check() const;  // throws InvariantError on inconsistent declarations
};

/// Parses the prompt-style hardware JSON ("FP16 Performance": "309 TFLOPS", ...).
/// Leading numerals are extracted from quoted figures; "Not Supported Natively"
/// marks a precision as emulated. A native precision whose figure is "Not
/// Officially Disclosed" is floored at the best declared native figure so the
/// deterministic selector never ranks it below hardware it is known to match;
/// the assumption is recorded in `notes`.
HardwareProfile load_profile(const std::string& text);
HardwareProfile load_profile_file(const std::string& path);

/// Measured tokens/s per (model, scheme label).
class ThroughputTable {
 public:
  void set(const std::string& model, const QuantScheme& scheme, double tokens_per_second);
  std::optional<double> get(const std::string& model, const std::string& scheme_label) const;
  const std::map<std::pair<std::string, std::string>, double>& entries() const { return entries_; }

  static ThroughputTable load(const std::string& text);
  static ThroughputTable load_file(const std::string& path);

 private:
  std::map<std::pair<std::string, std::string>, double> entries_;
};

/// Pure weight footprint in decimal GB: param_count * weight_bits / 8 / 1e9,
/// times an optional overhead factor (default 1.0).
double weight_memory_gb(std::int64_t param_count, const QuantScheme& scheme,
                        double overhead_factor = 1.0);

struct GateVerdict {
  QuantScheme scheme;
  bool admitted = false;
  double required_gb = 0.0;
};

/// Admits a scheme iff its weight footprint fits the budget.
std::vector<GateVerdict> memory_gate(std::int64_t param_count, double budget_gb,
                                     const std::vector<QuantScheme>& candidates,
                                     double overhead_factor = 1.0);

struct RankedScheme {
  QuantScheme scheme;
  std::string rationale;
};

/// Deterministic profile-based ranking: native precisions above emulated ones;
/// within each class, higher declared throughput first, ties broken by fewer
/// weight bits. Throws EmptyCandidateError when `admitted` is empty.
std::vector<RankedScheme> select_quant_by_profile(const HardwareProfile& profile,
                                                  std::int64_t param_count,
                                                  const std::vector<QuantScheme>& admitted);

/// Picks the admitted scheme with maximal measured tokens/s; ties broken by
/// fewer weight bits. Throws MissingEntryError naming any absent entry.
QuantScheme select_quant_by_measurement(const ThroughputTable& table, const std::string& model,
                                        const std::vector<QuantScheme>& admitted);

}  // namespace qtune::hardware
