#include "activesl/acquisition.hpp"
#include "activesl/bench_io.hpp"
#include "activesl/engine.hpp"
#include "activesl/errors.hpp"
#include "activesl/fitter.hpp"
#include "activesl/law_model.hpp"
#include "activesl/posterior.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace activesl;

namespace {

Dataset make_dataset(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw ValidationError("x and y lengths differ");
  Dataset d;
  for (std::size_t i = 0; i < xs.size(); ++i) d.add(ConfigPoint(xs[i]), ys[i]);
  return d;
}

std::vector<ConfigPoint> make_points(const std::vector<std::vector<double>>& xs) {
  std::vector<ConfigPoint> out;
  for (const auto& x : xs) out.emplace_back(x);
  return out;
}

EpisodeConfig make_config(std::vector<double> checkpoints, int n_starts, double budget_fraction, int grid_nodes,
                          const std::string& weights) {
  EpisodeConfig c;
  c.checkpoints = std::move(checkpoints);
  c.n_starts = n_starts;
  c.budget_fraction = budget_fraction;
  c.grid.nodes = grid_nodes;
  if (weights == "laplace") c.posterior.weights.scheme = WeightScheme::Laplace;
  else if (weights != "bic") throw ValidationError("unknown weight scheme '" + weights + "'");
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Budget-aware sequential design for scaling-law fitting.";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ArithmeticError);
  py::register_exception<PosteriorError>(m, "PosteriorError", PyExc_RuntimeError);

  m.attr("DEFAULT_ALPHA") = kDefaultAlpha;
  m.attr("DEFAULT_FIT_STARTS") = kDefaultFitStarts;
  m.attr("WARM_START_FACTOR") = kWarmStartFactor;

  m.def("registered_families", &registered_families);

  py::class_<LawSpec>(m, "LawSpec")
      .def(py::init<std::string, std::size_t>(), py::arg("family"), py::arg("input_dim"))
      .def_property_readonly("family", &LawSpec::family_id)
      .def_property_readonly("input_dim", &LawSpec::input_dim)
      .def_property_readonly("num_params", &LawSpec::num_params)
      .def_property_readonly("param_names", &LawSpec::param_names)
      .def_property_readonly("bounds", [](const LawSpec& s) {
        std::vector<std::pair<double, double>> out;
        for (const auto& b : s.bounds()) out.emplace_back(b.lo, b.hi);
        return out;
      })
      .def_property_readonly("positive", &LawSpec::positive)
      .def("set_bounds", [](LawSpec& s, const std::vector<std::pair<double, double>>& b) {
        std::vector<ParamBound> out;
        for (const auto& [lo, hi] : b) out.push_back({lo, hi});
        s.set_bounds(std::move(out));
      });

  m.def("evaluate", [](const LawSpec& s, const ParamVector& theta, const std::vector<double>& x) {
    return evaluate(s, theta, ConfigPoint(x));
  });
  m.def("param_jacobian", [](const LawSpec& s, const ParamVector& theta, const std::vector<double>& x) {
    return param_jacobian(s, theta, ConfigPoint(x));
  });
  m.def("scaled_jacobian", [](const LawSpec& s, const ParamVector& theta, const std::vector<double>& x) {
    return scaled_jacobian(s, theta, ConfigPoint(x));
  });
  m.def("warm_start_size", &warm_start_size);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("theta", &FitResult::theta)
      .def_readonly("mse", &FitResult::mse)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("iterations", &FitResult::iterations)
      .def_readonly("start_index", &FitResult::start_index);

  m.def(
      "fit_multistart",
      [](const LawSpec& s, const std::vector<std::vector<double>>& xs, const std::vector<double>& ys, int n_starts,
         std::uint64_t seed) { return fit_multistart(s, make_dataset(xs, ys), n_starts, seed).fits; },
      py::arg("spec"), py::arg("x"), py::arg("y"), py::arg("n_starts") = kDefaultFitStarts, py::arg("seed") = 0,
      "Converged local fits, best first.");

  py::class_<Basin>(m, "Basin")
      .def_readonly("theta", &Basin::theta)
      .def_readonly("cov", &Basin::cov)
      .def_readonly("weight", &Basin::weight)
      .def_readonly("mse", &Basin::mse)
      .def_readonly("target_mean", &Basin::target_mean);

  py::class_<Posterior>(m, "Posterior")
      .def_readonly("basins", &Posterior::basins)
      .def_readonly("noise_var", &Posterior::noise_var)
      .def("target_variance", [](const Posterior& p) {
        const auto v = target_variance(p);
        return std::make_pair(v.intra, v.inter);
      });

  m.def(
      "estimate_posterior",
      [](const LawSpec& s, const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
         const std::vector<std::vector<double>>& target, int n_starts, std::uint64_t seed) {
        const Dataset d = make_dataset(xs, ys);
        const FitReport fr = fit_multistart(s, d, n_starts, seed);
        if (fr.fits.empty()) throw PosteriorError("no fit start converged: " + fr.diagnostic);
        return estimate_posterior(s, d, fr.fits, make_points(target));
      },
      py::arg("spec"), py::arg("x"), py::arg("y"), py::arg("target"), py::arg("n_starts") = kDefaultFitStarts,
      py::arg("seed") = 0);

  m.def(
      "score_candidates",
      [](const Posterior& post, const std::vector<std::vector<double>>& xs, const std::vector<double>& costs,
         double alpha, int grid_nodes) {
        if (xs.size() != costs.size()) throw ValidationError("x and cost lengths differ");
        std::vector<Candidate> cands;
        for (std::size_t i = 0; i < xs.size(); ++i) cands.push_back({i, ConfigPoint(xs[i]), costs[i]});
        GridConfig g;
        g.nodes = grid_nodes;
        py::list out;
        for (const auto& s : score_candidates(post, cands, alpha, g)) {
          py::dict d;
          d["index"] = s.pool_index;
          d["dv_intra"] = s.dv_intra;
          d["dv_inter"] = s.dv_inter;
          d["cost"] = s.cost;
          d["score"] = s.score;
          out.append(d);
        }
        return out;
      },
      py::arg("posterior"), py::arg("x"), py::arg("costs"), py::arg("alpha") = kDefaultAlpha,
      py::arg("grid_nodes") = kDefaultQuadratureNodes);

  py::class_<Instance>(m, "Instance")
      .def_property_readonly("name", [](const Instance& i) { return i.meta.name; })
      .def_property_readonly("law", [](const Instance& i) { return i.law; })
      .def_property_readonly("tags", [](const Instance& i) { return i.meta.tags; })
      .def_property_readonly("pool_x", [](const Instance& i) {
        std::vector<std::vector<double>> out;
        for (const auto& e : i.pool) out.push_back(e.x.coords);
        return out;
      })
      .def_property_readonly("pool_cost", [](const Instance& i) {
        std::vector<double> out;
        for (const auto& e : i.pool) out.push_back(e.cost);
        return out;
      })
      .def_property_readonly("pool_y", [](const Instance& i) {
        std::vector<double> out;
        for (const auto& e : i.pool) out.push_back(e.outcome);
        return out;
      })
      .def_property_readonly("target_x", [](const Instance& i) {
        std::vector<std::vector<double>> out;
        for (const auto& e : i.target) out.push_back(e.x.coords);
        return out;
      })
      .def_property_readonly("target_y", [](const Instance& i) {
        std::vector<double> out;
        for (const auto& e : i.target) out.push_back(e.outcome);
        return out;
      })
      .def("total_cost", &Instance::total_cost);

  m.def("load_instance", &load_validate, py::arg("path"));
  m.def("save_instance", &save_instance, py::arg("instance"), py::arg("path"));
  m.def(
      "generate_instance", [](const std::filesystem::path& recipe) { return generate_instance(load_recipe(recipe)); },
      py::arg("recipe_path"));

  m.def(
      "target_r2",
      [](const Instance& inst, const ParamVector& theta) { return target_r2(inst.law, theta, inst.target); },
      py::arg("instance"), py::arg("theta"));

  m.def(
      "run_episode",
      [](const Instance& inst, const std::string& policy, std::uint64_t seed, std::vector<double> checkpoints,
         double alpha, int n_starts, double budget_fraction, int grid_nodes, const std::string& weights) {
        const EpisodeConfig cfg = make_config(std::move(checkpoints), n_starts, budget_fraction, grid_nodes, weights);
        EpisodeLog log;
        {
          py::gil_scoped_release release;
          log = run_episode(inst, {policy_from_string(policy), alpha}, cfg, seed);
        }
        std::ostringstream os;
        write_episode_log(log, os);
        py::dict d;
        d["selections"] = log.selections();
        py::list cps;
        for (const auto& c : log.checkpoints) {
          py::dict cd;
          cd["fraction"] = c.budget_fraction;
          cd["r2"] = c.r2;
          cd["rounds_used"] = c.rounds_used;
          cd["spent"] = c.spent;
          cd["stale_fit"] = c.stale_fit;
          cps.append(cd);
        }
        d["checkpoints"] = cps;
        d["budget"] = log.budget;
        d["total_cost"] = log.total_cost;
        d["log"] = os.str();
        return d;
      },
      py::arg("instance"), py::arg("policy") = "ours", py::arg("seed") = 0,
      py::arg("checkpoints") = std::vector<double>{0.01, 0.05, 0.10}, py::arg("alpha") = kDefaultAlpha,
      py::arg("n_starts") = kDefaultFitStarts, py::arg("budget_fraction") = 0.0,
      py::arg("grid_nodes") = kDefaultQuadratureNodes, py::arg("weights") = "bic");

  m.def(
      "all_data_reference",
      [](const Instance& inst, int n_starts, std::uint64_t seed) {
        py::gil_scoped_release release;
        return all_data_reference(inst, n_starts, seed);
      },
      py::arg("instance"), py::arg("n_starts") = kDefaultFitStarts, py::arg("seed") = 0);
}
