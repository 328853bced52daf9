#pragma once

#include "activesl/law_model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace activesl {

struct PoolEntry {
  ConfigPoint x;
  double cost = 1.0;
  double outcome = 0.0;

  friend bool operator==(const PoolEntry&, const PoolEntry&) = default;
};

struct TargetEntry {
  ConfigPoint x;
  double outcome = 0.0;

  friend bool operator==(const TargetEntry&, const TargetEntry&) = default;
};

struct InstanceMeta {
  std::string name;
  bool synthetic = false;
  std::optional<double> noise_sigma;
  std::optional<std::vector<double>> true_theta;
  /// Family that generated the outcomes, when it differs from the declared law.
  std::optional<std::string> generator_family;
  std::vector<std::string> tags;

  bool has_tag(std::string_view t) const {
    for (const auto& s : tags)
      if (s == t) return true;
    return false;
  }

  friend bool operator==(const InstanceMeta&, const InstanceMeta&) = default;
};

/// A candidate pool with recorded outcomes plus a held-out target region.
struct Instance {
  LawSpec law;
  CostModel cost_model;
  std::vector<PoolEntry> pool;
  std::vector<TargetEntry> target;
  InstanceMeta meta;

  std::vector<ConfigPoint> target_points() const {
    std::vector<ConfigPoint> out;
    out.reserve(target.size());
    for (const auto& t : target) out.push_back(t.x);
    return out;
  }
  double total_cost() const {
    double s = 0.0;
    for (const auto& e : pool) s += e.cost;
    return s;
  }

  friend bool operator==(const Instance&, const Instance&) = default;
};

}  // namespace activesl
