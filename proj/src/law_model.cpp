#include "activesl/law_model.hpp"

#include "activesl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

namespace activesl {
namespace {

constexpr double kMaxExp = 700.0;

// L = E + sum_i A_i * x_i^(-alpha_i)
class SumPower final : public LawFamily {
 public:
  explicit SumPower(std::size_t d) : d_(d) {}
  std::string_view id() const override { return "sum_power"; }
  std::size_t input_dim() const override { return d_; }

  std::vector<ParamInfo> params() const override {
    std::vector<ParamInfo> out{{"E", ParamRole::Offset}};
    for (std::size_t i = 0; i < d_; ++i) out.push_back({"A_" + std::to_string(i + 1), ParamRole::Amplitude});
    for (std::size_t i = 0; i < d_; ++i) out.push_back({"alpha_" + std::to_string(i + 1), ParamRole::Exponent});
    return out;
  }

  bool eval(std::span<const double> th, std::span<const double> x, double& value,
            std::span<double> jac) const override {
    double v = th[0];
    if (!jac.empty()) jac[0] = 1.0;
    for (std::size_t i = 0; i < d_; ++i) {
      if (!(x[i] > 0.0)) return false;
      const double lx = std::log(x[i]);
      const double t = std::exp(-th[1 + d_ + i] * lx);
      v += th[1 + i] * t;
      if (!jac.empty()) {
        jac[1 + i] = t;
        jac[1 + d_ + i] = -th[1 + i] * t * lx;
      }
    }
    value = v;
    return std::isfinite(v);
  }

 private:
  std::size_t d_;
};

// log L = c0 + sum_i c_i log x_i + sum_{i<=j} c_ij log x_i log x_j
class LogQuadratic final : public LawFamily {
 public:
  explicit LogQuadratic(std::size_t d) : d_(d) {}
  std::string_view id() const override { return "log_quadratic"; }
  std::size_t input_dim() const override { return d_; }

  std::vector<ParamInfo> params() const override {
    std::vector<ParamInfo> out{{"c_0", ParamRole::Offset}};
    for (std::size_t i = 0; i < d_; ++i) out.push_back({"c_" + std::to_string(i + 1), ParamRole::Offset});
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = i; j < d_; ++j)
        out.push_back({"c_" + std::to_string(i + 1) + std::to_string(j + 1), ParamRole::Offset});
    return out;
  }

  bool eval(std::span<const double> th, std::span<const double> x, double& value,
            std::span<double> jac) const override {
    double logs[8];
    for (std::size_t i = 0; i < d_; ++i) {
      if (!(x[i] > 0.0)) return false;
      logs[i] = std::log(x[i]);
    }
    double q = th[0];
    std::size_t k = 1 + d_;
    for (std::size_t i = 0; i < d_; ++i) q += th[1 + i] * logs[i];
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = i; j < d_; ++j) q += th[k++] * logs[i] * logs[j];
    if (!(q < kMaxExp)) return false;
    const double f = std::exp(q);
    value = f;
    if (!jac.empty()) {
      jac[0] = f;
      for (std::size_t i = 0; i < d_; ++i) jac[1 + i] = f * logs[i];
      k = 1 + d_;
      for (std::size_t i = 0; i < d_; ++i)
        for (std::size_t j = i; j < d_; ++j) jac[k++] = f * logs[i] * logs[j];
    }
    return std::isfinite(f);
  }

 private:
  std::size_t d_;
};

// L = E + A * (x_1 + k)^(-alpha)
class SaturatingPower final : public LawFamily {
 public:
  std::string_view id() const override { return "saturating_power"; }
  std::size_t input_dim() const override { return 1; }

  std::vector<ParamInfo> params() const override {
    return {{"E", ParamRole::Offset}, {"A", ParamRole::Amplitude}, {"k", ParamRole::Offset},
            {"alpha", ParamRole::Exponent}};
  }

  bool eval(std::span<const double> th, std::span<const double> x, double& value,
            std::span<double> jac) const override {
    const double u = x[0] + th[2];
    if (!(u > 0.0)) return false;
    const double lu = std::log(u);
    const double t = std::exp(-th[3] * lu);
    value = th[0] + th[1] * t;
    if (!jac.empty()) {
      jac[0] = 1.0;
      jac[1] = t;
      jac[2] = -th[3] * th[1] * t / u;
      jac[3] = -th[1] * t * lu;
    }
    return std::isfinite(value);
  }
};

// L = c_0 + sum_i c_i x_i
class Linear final : public LawFamily {
 public:
  explicit Linear(std::size_t d) : d_(d) {}
  std::string_view id() const override { return "linear"; }
  std::size_t input_dim() const override { return d_; }

  std::vector<ParamInfo> params() const override {
    std::vector<ParamInfo> out{{"c_0", ParamRole::Coefficient}};
    for (std::size_t i = 0; i < d_; ++i) out.push_back({"c_" + std::to_string(i + 1), ParamRole::Coefficient});
    return out;
  }

  bool eval(std::span<const double> th, std::span<const double> x, double& value,
            std::span<double> jac) const override {
    double v = th[0];
    if (!jac.empty()) jac[0] = 1.0;
    for (std::size_t i = 0; i < d_; ++i) {
      v += th[1 + i] * x[i];
      if (!jac.empty()) jac[1 + i] = x[i];
    }
    value = v;
    return std::isfinite(v);
  }

 private:
  std::size_t d_;
};

struct Registry {
  std::mutex mu;
  std::map<std::string, FamilyFactory, std::less<>> factories;

  Registry() {
    factories["sum_power"] = [](std::size_t d) -> std::shared_ptr<const LawFamily> {
      if (d < 1 || d > 4) throw ValidationError("sum_power supports 1 to 4 covariates, got " + std::to_string(d));
      return std::make_shared<SumPower>(d);
    };
    factories["log_quadratic"] = [](std::size_t d) -> std::shared_ptr<const LawFamily> {
      if (d < 1 || d > 4) throw ValidationError("log_quadratic supports 1 to 4 covariates, got " + std::to_string(d));
      return std::make_shared<LogQuadratic>(d);
    };
    factories["saturating_power"] = [](std::size_t d) -> std::shared_ptr<const LawFamily> {
      if (d != 1) throw ValidationError("saturating_power takes exactly one covariate");
      return std::make_shared<SaturatingPower>();
    };
    factories["linear"] = [](std::size_t d) -> std::shared_ptr<const LawFamily> {
      if (d < 1) throw ValidationError("linear needs at least one covariate");
      return std::make_shared<Linear>(d);
    };
  }
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

void register_family(std::string family_id, FamilyFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  r.factories[std::move(family_id)] = factory;
}

std::shared_ptr<const LawFamily> make_family(std::string_view family_id, std::size_t input_dim) {
  auto& r = registry();
  FamilyFactory f = nullptr;
  {
    std::lock_guard lock(r.mu);
    auto it = r.factories.find(family_id);
    if (it == r.factories.end()) throw ValidationError("unknown law family '" + std::string(family_id) + "'");
    f = it->second;
  }
  return f(input_dim);
}

std::vector<std::string> registered_families() {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  std::vector<std::string> out;
  for (const auto& [k, v] : r.factories) out.push_back(k);
  return out;
}

ParamBound default_bound(ParamRole role) {
  switch (role) {
    case ParamRole::Amplitude:
    case ParamRole::Exponent:
      return {1e-6, 1e6};
    case ParamRole::Offset:
      return {-1e3, 1e3};
    case ParamRole::Coefficient:
      return {-1e6, 1e6};
  }
  return {-1e3, 1e3};
}

bool default_positive(ParamRole role) { return role == ParamRole::Amplitude || role == ParamRole::Exponent; }

LawSpec::LawSpec(std::string family_id, std::size_t input_dim)
    : family_id_(std::move(family_id)), input_dim_(input_dim), family_(make_family(family_id_, input_dim)) {
  for (const auto& info : family_->params()) {
    names_.push_back(info.name);
    bounds_.push_back(default_bound(info.role));
    positive_.push_back(default_positive(info.role));
  }
  validate();
}

LawSpec::LawSpec(std::string family_id, std::size_t input_dim, std::vector<ParamBound> bounds,
                 std::vector<bool> positive)
    : LawSpec(std::move(family_id), input_dim) {
  set_bounds(std::move(bounds));
  set_positive(std::move(positive));
}

void LawSpec::set_bounds(std::vector<ParamBound> bounds) {
  if (bounds.size() != names_.size())
    throw ValidationError("law '" + family_id_ + "' expects " + std::to_string(names_.size()) + " bounds, got " +
                          std::to_string(bounds.size()));
  std::swap(bounds_, bounds);
  try {
    validate();
  } catch (...) {
    std::swap(bounds_, bounds);
    throw;
  }
}

void LawSpec::set_positive(std::vector<bool> positive) {
  if (positive.size() != names_.size())
    throw ValidationError("law '" + family_id_ + "' expects " + std::to_string(names_.size()) +
                          " positivity flags, got " + std::to_string(positive.size()));
  std::swap(positive_, positive);
  try {
    validate();
  } catch (...) {
    std::swap(positive_, positive);
    throw;
  }
}

void LawSpec::validate() const {
  if (names_.empty()) throw ValidationError("law has no parameters");
  for (std::size_t i = 0; i < bounds_.size(); ++i) {
    const auto& b = bounds_[i];
    if (!(std::isfinite(b.lo) && std::isfinite(b.hi) && b.lo < b.hi))
      throw ValidationError("parameter '" + names_[i] + "' has invalid bounds");
    if (positive_[i] && !(b.lo > 0.0))
      throw ValidationError("positive parameter '" + names_[i] + "' needs a strictly positive lower bound");
  }
}

bool LawSpec::within_bounds(const ParamVector& theta) const {
  if (static_cast<std::size_t>(theta.size()) != num_params()) return false;
  for (std::size_t i = 0; i < num_params(); ++i) {
    const double v = theta[static_cast<Eigen::Index>(i)];
    if (!(v >= bounds_[i].lo && v <= bounds_[i].hi)) return false;
    if (positive_[i] && !(v > 0.0)) return false;
  }
  return true;
}

void LawSpec::check_params(const ParamVector& theta) const {
  if (static_cast<std::size_t>(theta.size()) != num_params())
    throw ValidationError("expected " + std::to_string(num_params()) + " parameters, got " +
                          std::to_string(theta.size()));
  for (std::size_t i = 0; i < num_params(); ++i) {
    const double v = theta[static_cast<Eigen::Index>(i)];
    if (!(v >= bounds_[i].lo && v <= bounds_[i].hi) || (positive_[i] && !(v > 0.0))) {
      std::ostringstream os;
      os << "parameter '" << names_[i] << "' = " << v << " outside [" << bounds_[i].lo << ", " << bounds_[i].hi << "]";
      throw ValidationError(os.str());
    }
  }
}

void LawSpec::check_point(const ConfigPoint& x) const {
  if (x.dim() != input_dim_)
    throw ValidationError("configuration has " + std::to_string(x.dim()) + " coordinates, law expects " +
                          std::to_string(input_dim_));
  for (double c : x.coords)
    if (!std::isfinite(c)) throw ValidationError("configuration coordinate is not finite");
}

bool try_evaluate(const LawSpec& spec, std::span<const double> theta, std::span<const double> x, double& value,
                  std::span<double> jac, bool scaled) {
  if (!spec.family().eval(theta, x, value, jac)) return false;
  if (scaled && !jac.empty()) {
    const auto& pos = spec.positive();
    for (std::size_t i = 0; i < jac.size(); ++i)
      if (pos[i]) jac[i] *= theta[i];
  }
  return true;
}

namespace {

void require_shapes(const LawSpec& spec, const ParamVector& theta, const ConfigPoint& x) {
  if (static_cast<std::size_t>(theta.size()) != spec.num_params())
    throw ValidationError("expected " + std::to_string(spec.num_params()) + " parameters, got " +
                          std::to_string(theta.size()));
  spec.check_point(x);
}

[[noreturn]] void throw_domain(const LawSpec& spec, const ConfigPoint& x) {
  std::ostringstream os;
  os << "law '" << spec.family_id() << "' is undefined or non-finite at x = (";
  for (std::size_t i = 0; i < x.dim(); ++i) os << (i ? ", " : "") << x[i];
  os << ")";
  throw DomainError(os.str());
}

Eigen::VectorXd jacobian_impl(const LawSpec& spec, const ParamVector& theta, const ConfigPoint& x, bool scaled) {
  require_shapes(spec, theta, x);
  Eigen::VectorXd jac(theta.size());
  double v = 0.0;
  if (!try_evaluate(spec, {theta.data(), static_cast<std::size_t>(theta.size())}, x.view(), v,
                    {jac.data(), static_cast<std::size_t>(jac.size())}, scaled) ||
      !jac.allFinite())
    throw_domain(spec, x);
  return jac;
}

}  // namespace

double evaluate(const LawSpec& spec, const ParamVector& theta, const ConfigPoint& x) {
  require_shapes(spec, theta, x);
  double v = 0.0;
  if (!spec.family().eval({theta.data(), static_cast<std::size_t>(theta.size())}, x.view(), v, {}))
    throw_domain(spec, x);
  return v;
}

Eigen::VectorXd param_jacobian(const LawSpec& spec, const ParamVector& theta, const ConfigPoint& x) {
  return jacobian_impl(spec, theta, x, false);
}

Eigen::VectorXd scaled_jacobian(const LawSpec& spec, const ParamVector& theta, const ConfigPoint& x) {
  return jacobian_impl(spec, theta, x, true);
}

std::string_view to_string(CostKind kind) {
  switch (kind) {
    case CostKind::Product6ND: return "product_6ND";
    case CostKind::ProductNE: return "product_NE";
    case CostKind::SingleN: return "single_N";
    case CostKind::DualSparse: return "dual_sparse_6N1D1_6N2D2";
    case CostKind::Unit: return "unit";
  }
  return "unit";
}

CostKind cost_kind_from_string(std::string_view name) {
  for (auto k : {CostKind::Product6ND, CostKind::ProductNE, CostKind::SingleN, CostKind::DualSparse, CostKind::Unit})
    if (to_string(k) == name) return k;
  throw ValidationError("unknown cost model '" + std::string(name) + "'");
}

std::size_t CostModel::arity(CostKind kind) {
  switch (kind) {
    case CostKind::Product6ND:
    case CostKind::ProductNE: return 2;
    case CostKind::SingleN: return 1;
    case CostKind::DualSparse: return 4;
    case CostKind::Unit: return 0;
  }
  return 0;
}

void CostModel::validate(std::size_t input_dim) const {
  if (indices.size() != arity(kind))
    throw ValidationError("cost model '" + std::string(to_string(kind)) + "' needs " + std::to_string(arity(kind)) +
                          " coordinate indices, got " + std::to_string(indices.size()));
  for (auto i : indices)
    if (i >= input_dim)
      throw ValidationError("cost model index " + std::to_string(i) + " out of range for dimension " +
                            std::to_string(input_dim));
}

double cost(const CostModel& model, const ConfigPoint& x) {
  auto operand = [&](std::size_t slot) {
    const std::size_t i = model.indices.at(slot);
    if (i >= x.dim()) throw ValidationError("cost model index out of range");
    const double v = x[i];
    if (!(v > 0.0) || !std::isfinite(v))
      throw DomainError("cost operand x[" + std::to_string(i) + "] must be positive and finite");
    return v;
  };
  switch (model.kind) {
    case CostKind::Product6ND: return 6.0 * operand(0) * operand(1);
    case CostKind::ProductNE: return operand(0) * operand(1);
    case CostKind::SingleN: return operand(0);
    case CostKind::DualSparse: return 6.0 * operand(0) * operand(1) + 6.0 * operand(2) * operand(3);
    case CostKind::Unit: return 1.0;
  }
  return 1.0;
}

}  // namespace activesl
