#pragma once

// JSON conversions shared by the instance, log and session readers.

#include "activesl/errors.hpp"
#include "activesl/law_model.hpp"

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace activesl::detail {

using nlohmann::json;

/// Field lookup with a path-qualified diagnostic.
inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(where + ": missing field '" + key + "'");
  return *it;
}

inline double get_finite(const json& j, const std::string& where) {
  if (!j.is_number()) throw ValidationError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ValidationError(where + ": value is not finite");
  return v;
}

inline std::vector<double> get_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_finite(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::size_t get_index(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw ValidationError(where + ": expected a non-negative integer");
  return j.get<std::size_t>();
}

inline std::string get_string(const json& j, const std::string& where) {
  if (!j.is_string()) throw ValidationError(where + ": expected a string");
  return j.get<std::string>();
}

inline json law_to_json(const LawSpec& spec) {
  json b = json::array();
  for (const auto& bd : spec.bounds()) b.push_back({bd.lo, bd.hi});
  json pos = json::array();
  for (bool v : spec.positive()) pos.push_back(v);
  return {{"family", spec.family_id()}, {"input_dim", spec.input_dim()}, {"bounds", b}, {"positive", pos}};
}

inline LawSpec law_from_json(const json& j, const std::string& where) {
  const std::string family = get_string(require(j, "family", where), where + ".family");
  const std::size_t d = get_index(require(j, "input_dim", where), where + ".input_dim");
  try {
    LawSpec spec(family, d);
    if (auto it = j.find("bounds"); it != j.end()) {
      if (!it->is_array()) throw ValidationError(where + ".bounds: expected an array of [lo, hi] pairs");
      std::vector<ParamBound> bounds;
      for (std::size_t i = 0; i < it->size(); ++i) {
        const auto v = get_vector((*it)[i], where + ".bounds[" + std::to_string(i) + "]");
        if (v.size() != 2) throw ValidationError(where + ".bounds[" + std::to_string(i) + "]: expected [lo, hi]");
        bounds.push_back({v[0], v[1]});
      }
      spec.set_bounds(std::move(bounds));
    }
    if (auto it = j.find("positive"); it != j.end()) {
      if (!it->is_array()) throw ValidationError(where + ".positive: expected an array of booleans");
      std::vector<bool> pos;
      for (const auto& v : *it) {
        if (!v.is_boolean()) throw ValidationError(where + ".positive: expected booleans");
        pos.push_back(v.get<bool>());
      }
      spec.set_positive(std::move(pos));
    }
    return spec;
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    if (msg.rfind(where, 0) == 0) throw;
    throw ValidationError(where + ": " + msg);
  }
}

inline json cost_model_to_json(const CostModel& m) {
  return {{"kind", std::string(to_string(m.kind))}, {"indices", m.indices}};
}

inline CostModel cost_model_from_json(const json& j, const std::string& where, std::size_t input_dim) {
  CostModel m;
  try {
    m.kind = cost_kind_from_string(get_string(require(j, "kind", where), where + ".kind"));
  } catch (const ValidationError& e) {
    throw ValidationError(where + ".kind: " + e.what());
  }
  if (auto it = j.find("indices"); it != j.end()) {
    if (!it->is_array()) throw ValidationError(where + ".indices: expected an array");
    for (std::size_t i = 0; i < it->size(); ++i)
      m.indices.push_back(get_index((*it)[i], where + ".indices[" + std::to_string(i) + "]"));
  } else {
    for (std::size_t i = 0; i < CostModel::arity(m.kind); ++i) m.indices.push_back(i);
  }
  try {
    m.validate(input_dim);
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
  return m;
}

inline ConfigPoint point_from_json(const json& j, std::size_t d, const std::string& where) {
  auto v = get_vector(j, where);
  if (v.size() != d)
    throw ValidationError(where + ": expected " + std::to_string(d) + " coordinates, got " + std::to_string(v.size()));
  return ConfigPoint(std::move(v));
}

}  // namespace activesl::detail
