#include "qtune/hardware.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace qtune::hardware {

std::string precision_name(Precision p) {
  switch (p) {
    case Precision::FP16: return "FP16";
    case Precision::INT8: return "INT8";
    case Precision::INT4: return "INT4";
  }
  return "?";
}

Precision precision_from_name(const std::string& name) {
  std::string u;
  for (char c : name) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (u == "FP16" || u == "FLOAT16" || u == "HALF") return Precision::FP16;
  if (u == "INT8") return Precision::INT8;
  if (u == "INT4") return Precision::INT4;
  throw SchemaError("unknown precision: '" + name + "'");
}

QuantScheme QuantScheme::from_label(const std::string& label) {
  std::string u;
  for (char c : label) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (u == "FP16") return fp16();
  if (u == "INT8") return int8();
  if (u == "INT4") return int4();
  if (u == "W8A8") return w8a8();
  if (u == "W4A4") return w4a4();
  if (u == "W2A2") return w2a2();
  throw SchemaError("unknown quantization scheme label: '" + label + "'");
}

double HardwareProfile::throughput_for(const QuantScheme& s) const {
  switch (s.weight_bits) {
    case 16: return fp16_tflops;
    case 8: return int8_tops;
    case 4: return int4_tops;
    default: return 0.0;  // no declared figure for 2-bit schemes
  }
}

void HardwareProfile::check() const {
  if (native_precisions.empty())
    throw InvariantError(name, "profile '" + name + "' declares no native precision");
  const bool int4_native = native_precisions.count(Precision::INT4) > 0;
  if (int4_native == int4_emulated_via.has_value())
    throw InvariantError(name, "profile '" + name +
                                   "': INT4 must be native or emulated, exclusively");
  if (fp16_tflops < 0 || int8_tops < 0 || int4_tops < 0 || memory_budget_gb < 0)
    throw InvariantError(name, "profile '" + name + "' has a negative figure");
}

namespace {

// First numeric token of a quoted figure ("618 TFLOPS" -> 618, "Up to 8
// TFLOPS (Estimated)" -> 8). Returns nullopt when the string has no number.
std::optional<double> leading_numeral(const std::string& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(s[i]))) {
      std::size_t end = i;
      while (end < s.size() &&
             (std::isdigit(static_cast<unsigned char>(s[end])) || s[end] == '.'))
        ++end;
      return std::stod(s.substr(i, end - i));
    }
  }
  return std::nullopt;
}

bool contains_icase(const std::string& haystack, const std::string& needle) {
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(),
                        [](char a, char b) {
                          return std::tolower(static_cast<unsigned char>(a)) ==
                                 std::tolower(static_cast<unsigned char>(b));
                        });
  return it != haystack.end();
}

struct FigureParse {
  bool supported = true;
  bool disclosed = true;
  double value = 0.0;
  std::optional<Precision> emulated_via;
};

FigureParse parse_figure(const nlohmann::ordered_json& j) {
  FigureParse f;
  if (j.is_number()) {
    f.value = j.get<double>();
    return f;
  }
  const std::string s = j.get<std::string>();
  if (contains_icase(s, "Not Supported Natively")) {
    f.supported = false;
    if (contains_icase(s, "Emulated via INT8"))
      f.emulated_via = Precision::INT8;
    else if (contains_icase(s, "Emulated via FP16"))
      f.emulated_via = Precision::FP16;
    return f;
  }
  if (contains_icase(s, "Not Officially Disclosed")) {
    f.disclosed = false;
    f.value = leading_numeral(s).value_or(0.0);
    return f;
  }
  auto n = leading_numeral(s);
  if (!n) throw SchemaError("hardware figure has no numeric value: '" + s + "'");
  f.value = *n;
  return f;
}

}  // namespace

HardwareProfile load_profile(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("hardware profile is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("hardware profile must be a JSON object");

  HardwareProfile p;
  p.source_text = doc.dump(2);
  p.name = doc.value("name", std::string("unnamed"));
  if (doc.contains("notes")) p.notes = doc["notes"].get<std::string>();

  if (doc.contains("Memory")) {
    auto m = parse_figure(doc["Memory"]);
    p.memory_budget_gb = m.value;
  } else if (doc.contains("memory_budget_gb")) {
    p.memory_budget_gb = doc["memory_budget_gb"].get<double>();
  }

  FigureParse fp16{}, int8{}, int4{};
  fp16.supported = false;
  int8.supported = false;
  int4.supported = false;
  if (doc.contains("FP16 Performance")) fp16 = parse_figure(doc["FP16 Performance"]);
  if (doc.contains("INT8 Performance")) int8 = parse_figure(doc["INT8 Performance"]);
  if (doc.contains("INT4 Performance")) int4 = parse_figure(doc["INT4 Performance"]);

  if (fp16.supported) p.native_precisions.insert(Precision::FP16);
  if (int8.supported) p.native_precisions.insert(Precision::INT8);
  if (int4.supported)
    p.native_precisions.insert(Precision::INT4);
  else
    p.int4_emulated_via = int4.emulated_via.value_or(Precision::INT8);

  p.fp16_tflops = fp16.supported ? fp16.value : 0.0;
  p.int8_tops = int8.supported ? int8.value : 0.0;
  p.int4_tops = int4.supported ? int4.value : 0.0;

  // An undisclosed figure on supported hardware is floored at the best
  // declared native figure; otherwise the selector would rank the precision
  // below peers on a number nobody measured.
  const double best_declared = std::max(
      {fp16.supported && fp16.disclosed ? fp16.value : 0.0,
       int8.supported && int8.disclosed ? int8.value : 0.0,
       int4.supported && int4.disclosed ? int4.value : 0.0});
  auto floor_undisclosed = [&](FigureParse& f, double& field, const char* label) {
    if (f.supported && !f.disclosed && field < best_declared) {
      field = best_declared;
      if (!p.notes.empty()) p.notes += " ";
      p.notes += std::string(label) +
                 " throughput not officially disclosed; floored at best declared native figure (" +
                 nlohmann::ordered_json(best_declared).dump() + ").";
    }
  };
  floor_undisclosed(fp16, p.fp16_tflops, "FP16");
  floor_undisclosed(int8, p.int8_tops, "INT8");
  floor_undisclosed(int4, p.int4_tops, "INT4");

  p.check();
  return p;
}

HardwareProfile load_profile_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open hardware profile: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return load_profile(buf.str());
}

void ThroughputTable::set(const std::string& model, const QuantScheme& scheme,
                          double tokens_per_second) {
  if (tokens_per_second <= 0)
    throw InvariantError(model, "throughput for (" + model + ", " + scheme.label +
                                    ") must be positive");
  entries_[{model, scheme.label}] = tokens_per_second;
}

std::optional<double> ThroughputTable::get(const std::string& model,
                                           const std::string& scheme_label) const {
  auto it = entries_.find({model, scheme_label});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

ThroughputTable ThroughputTable::load(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("throughput table is not valid JSON: ") + e.what());
  }
  ThroughputTable t;
  for (const auto& [model, row] : doc.items())
    for (const auto& [label, tps] : row.items())
      t.set(model, QuantScheme::from_label(label), tps.get<double>());
  return t;
}

ThroughputTable ThroughputTable::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open throughput table: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return load(buf.str());
}

double weight_memory_gb(std::int64_t param_count, const QuantScheme& scheme,
                        double overhead_factor) {
  if (param_count <= 0) throw Error("param_count must be positive");
  return static_cast<double>(param_count) * scheme.weight_bits / 8.0 / 1e9 * overhead_factor;
}

std::vector<GateVerdict> memory_gate(std::int64_t param_count, double budget_gb,
                                     const std::vector<QuantScheme>& candidates,
                                     double overhead_factor) {
  if (budget_gb < 0) throw Error("budget_gb must be non-negative");
  std::vector<GateVerdict> out;
  out.reserve(candidates.size());
  for (const auto& s : candidates) {
    const double req = weight_memory_gb(param_count, s, overhead_factor);
    out.push_back({s, req <= budget_gb, req});
  }
  return out;
}

std::vector<RankedScheme> select_quant_by_profile(const HardwareProfile& profile,
                                                  std::int64_t param_count,
                                                  const std::vector<QuantScheme>& admitted) {
  (void)param_count;
  if (admitted.empty()) throw EmptyCandidateError("no admitted quantization scheme to rank");

  auto scheme_precision = [](const QuantScheme& s) -> std::optional<Precision> {
    switch (s.weight_bits) {
      case 16: return Precision::FP16;
      case 8: return Precision::INT8;
      case 4: return Precision::INT4;
      default: return std::nullopt;
    }
  };
  auto is_native = [&](const QuantScheme& s) {
    auto p = scheme_precision(s);
    return p.has_value() && profile.is_native(*p);
  };

  std::vector<QuantScheme> order = admitted;
  std::stable_sort(order.begin(), order.end(), [&](const QuantScheme& a, const QuantScheme& b) {
    const bool na = is_native(a), nb = is_native(b);
    if (na != nb) return na;
    const double ta = profile.throughput_for(a), tb = profile.throughput_for(b);
    if (ta != tb) return ta > tb;
    return a.weight_bits < b.weight_bits;
  });

  std::vector<RankedScheme> out;
  for (const auto& s : order) {
    std::string why;
    if (admitted.size() == 1) {
      why = "only admissible scheme";
    } else if (!is_native(s)) {
      why = s.label + " is not natively supported on " + profile.name;
      auto p = scheme_precision(s);
      if (p && *p == Precision::INT4 && profile.int4_emulated_via)
        why += " (emulated via " + precision_name(*profile.int4_emulated_via) + ")";
    } else {
      const double t = profile.throughput_for(s);
      bool tied = false;
      for (const auto& o : order)
        if (!(o == s) && is_native(o) && profile.throughput_for(o) == t) tied = true;
      if (tied)
        why = s.label + " declares " + nlohmann::ordered_json(t).dump() +
              " native throughput; tie broken toward fewer weight bits (" +
              std::to_string(s.weight_bits) + ")";
      else
        why = s.label + " is native with declared throughput " +
              nlohmann::ordered_json(t).dump();
    }
    out.push_back({s, why});
  }
  return out;
}

QuantScheme select_quant_by_measurement(const ThroughputTable& table, const std::string& model,
                                        const std::vector<QuantScheme>& admitted) {
  if (admitted.empty()) throw EmptyCandidateError("no admitted quantization scheme to rank");
  const QuantScheme* best = nullptr;
  double best_tps = 0.0;
  for (const auto& s : admitted) {
    auto tps = table.get(model, s.label);
    if (!tps)
      throw MissingEntryError("throughput table has no entry for (" + model + ", " + s.label +
                              ")");
    if (best == nullptr || *tps > best_tps ||
        (*tps == best_tps && s.weight_bits < best->weight_bits)) {
      best = &s;
      best_tps = *tps;
    }
  }
  return *best;
}

}  // namespace qtune::hardware
