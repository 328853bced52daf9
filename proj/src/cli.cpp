#include "activesl/cli.hpp"

#include "activesl/bench_io.hpp"
#include "activesl/errors.hpp"
#include "activesl/session.hpp"
#include "json_util.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

namespace activesl {
namespace {

using detail::json;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string log_file_name(const std::string& instance, PolicyKind policy, std::uint64_t seed) {
  return instance + "__" + std::string(to_string(policy)) + "__seed" + std::to_string(seed) + ".jsonl";
}

// Maps exceptions to exit codes: malformed input is a usage error.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitPartial;
  }
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir, std::string_view source) {
  const std::string src(source);
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ValidationError(src + ": parse error: " + e.what());
  }
  if (!j.is_object()) throw ValidationError(src + ": expected a JSON object");
  RunConfig c;
  try {
    const json& inst = detail::require(j, "instances", src);
    if (!inst.is_array() || inst.empty()) throw ValidationError(src + ": instances must be a non-empty array");
    for (const auto& p : inst) {
      std::filesystem::path path = detail::get_string(p, src + ": instances");
      c.instances.push_back(path.is_absolute() || base_dir.empty() ? path : base_dir / path);
    }
    if (auto it = j.find("policies"); it != j.end()) {
      c.policies.clear();
      for (const auto& p : *it) c.policies.push_back(policy_from_string(detail::get_string(p, src + ": policies")));
      if (c.policies.empty()) throw ValidationError(src + ": policies must not be empty");
    }
    if (auto it = j.find("seeds"); it != j.end()) {
      if (it->is_number_integer()) {
        const long long n = it->get<long long>();
        if (n < 1) throw ValidationError(src + ": seeds must be at least 1");
        for (long long s = 0; s < n; ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
      } else {
        for (const auto& s : *it) c.seeds.push_back(s.get<std::uint64_t>());
        if (c.seeds.empty()) throw ValidationError(src + ": seeds must not be empty");
      }
    } else {
      for (int s = 0; s < kDefaultSeedCount; ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (auto it = j.find("checkpoints"); it != j.end())
      c.episode.checkpoints = detail::get_vector(*it, src + ": checkpoints");
    for (std::size_t i = 0; i < c.episode.checkpoints.size(); ++i) {
      const double f = c.episode.checkpoints[i];
      if (!(f > 0.0 && f <= 1.0)) throw ValidationError(src + ": checkpoint fractions must lie in (0, 1]");
      if (i > 0 && !(f > c.episode.checkpoints[i - 1]))
        throw ValidationError(src + ": checkpoint fractions must be sorted ascending");
    }
    if (c.episode.checkpoints.empty()) throw ValidationError(src + ": checkpoints must not be empty");
    if (auto it = j.find("alpha"); it != j.end()) c.alpha = detail::get_finite(*it, src + ": alpha");
    if (auto it = j.find("n_starts"); it != j.end()) c.episode.n_starts = it->get<int>();
    if (c.episode.n_starts < 1) throw ValidationError(src + ": n_starts must be at least 1");
    if (auto it = j.find("grid_nodes"); it != j.end()) c.episode.grid.nodes = it->get<int>();
    if (c.episode.grid.nodes < 2) throw ValidationError(src + ": grid_nodes must be at least 2");
    if (auto it = j.find("weight_scheme"); it != j.end()) {
      const std::string w = detail::get_string(*it, src + ": weight_scheme");
      if (w == "bic") c.episode.posterior.weights.scheme = WeightScheme::Bic;
      else if (w == "laplace") c.episode.posterior.weights.scheme = WeightScheme::Laplace;
      else throw ValidationError(src + ": unknown weight scheme '" + w + "'");
    }
    if (auto it = j.find("budget_fraction"); it != j.end())
      c.episode.budget_fraction = detail::get_finite(*it, src + ": budget_fraction");
    if (auto it = j.find("log_top_scores"); it != j.end()) c.episode.log_top_scores = it->get<int>();
    if (auto it = j.find("output_dir"); it != j.end()) {
      std::filesystem::path out = detail::get_string(*it, src + ": output_dir");
      c.output_dir = out.is_absolute() || base_dir.empty() ? out : base_dir / out;
    }
    if (auto it = j.find("threads"); it != j.end()) c.threads = std::max(1, it->get<int>());
  } catch (const json::exception& e) {
    throw ValidationError(src + ": " + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_text(path), path.parent_path(), path.string());
}

int cmd_generate(const std::filesystem::path& recipe_path, const std::filesystem::path& out, std::ostream& os,
                 std::ostream& err) {
  return guarded(err, [&] {
    const Instance inst = generate_instance(load_recipe(recipe_path));
    save_instance(inst, out);
    std::vector<double> costs;
    for (const auto& e : inst.pool) costs.push_back(e.cost);
    os << "instance: " << inst.meta.name << '\n'
       << "pool: " << inst.pool.size() << " candidates\n"
       << std::setprecision(6) << "cost quantiles (min/25/50/75/max): " << quantile(costs, 0.0) << " "
       << quantile(costs, 0.25) << " " << quantile(costs, 0.5) << " " << quantile(costs, 0.75) << " "
       << quantile(costs, 1.0) << '\n'
       << "total cost: " << inst.total_cost() << '\n'
       << "target: " << inst.target.size() << " points\n"
       << "written: " << out.string() << '\n';
    return kExitOk;
  });
}

int cmd_run(const std::filesystem::path& config_path, std::optional<std::filesystem::path> output_dir,
            std::optional<int> threads, std::ostream& os, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = load_run_config(config_path);
    if (output_dir) {
      cfg.output_dir = *output_dir;
    } else if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
      cfg.output_dir = env;
    }
    if (threads) cfg.threads = std::max(1, *threads);

    std::vector<Instance> instances;
    for (const auto& p : cfg.instances) {
      instances.push_back(load_validate(p));
      if (instances.back().meta.name.empty()) instances.back().meta.name = p.stem().string();
    }

    struct Job {
      std::size_t instance;
      PolicyKind policy;
      std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < instances.size(); ++i)
      for (auto pol : cfg.policies)
        for (auto s : cfg.seeds) jobs.push_back({i, pol, s});

    const auto log_dir = cfg.output_dir / "logs";
    std::filesystem::create_directories(log_dir);
    std::vector<std::optional<EpisodeLog>> results(jobs.size());
    std::vector<std::string> failures(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t k; (k = next.fetch_add(1)) < jobs.size();) {
        const Job& job = jobs[k];
        const Instance& inst = instances[job.instance];
        try {
          EpisodeLog log = run_episode(inst, {job.policy, cfg.alpha}, cfg.episode, job.seed);
          save_episode_log(log, log_dir / log_file_name(inst.meta.name, job.policy, job.seed));
          results[k] = std::move(log);
        } catch (const std::exception& e) {
          failures[k] = e.what();
        }
      }
    };
    const int n_threads = std::min<int>(cfg.threads, static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::vector<EpisodeLog> logs;
    std::size_t failed = 0;
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      if (results[k]) {
        logs.push_back(std::move(*results[k]));
      } else {
        ++failed;
        err << "episode failed: " << instances[jobs[k].instance].meta.name << " " << to_string(jobs[k].policy)
            << " seed " << jobs[k].seed << ": " << failures[k] << '\n';
      }
    }
    os << "episodes: " << logs.size() << " succeeded, " << failed << " failed\n";
    if (!logs.empty()) {
      const auto paths = emit_report(logs, cfg.output_dir);
      os << "report: " << paths.table.string() << '\n' << "curves: " << paths.curves.string() << '\n';
    }
    return failed ? kExitPartial : kExitOk;
  });
}

int cmd_advise(const std::filesystem::path& session_path, std::ostream& os, std::ostream& err) {
  return guarded(err, [&] {
    SessionLock lock(session_path);
    const Session s = load_session(session_path);
    const Advice a = advise(s);
    if (a.kind == Advice::Kind::Exhausted || !a.index) {
      os << "budget exhausted: no unobserved candidate fits the remaining budget\n";
      return kExitOk;
    }
    const auto& c = s.candidates[*a.index];
    os << std::setprecision(10);
    if (a.kind == Advice::Kind::WarmStart) {
      os << "notice: " << s.observations.size() << " of " << warm_start_size(s.law.num_params())
         << " warm-start observations recorded; advising the next warm-start point\n";
    }
    os << "candidate: " << *a.index << '\n' << "x:";
    for (double v : c.x.coords) os << ' ' << v;
    os << '\n' << "cost: " << c.cost << '\n';
    if (a.score) {
      os << "dv_intra: " << a.score->dv_intra << '\n'
         << "dv_inter: " << a.score->dv_inter << '\n'
         << "score: " << a.score->score << '\n';
    }
    if (a.kind == Advice::Kind::Scored) os << "basins: " << a.num_basins << '\n';
    if (a.stale_fit) os << "warning: no fit start converged; scores use a fallback\n";
    return kExitOk;
  });
}

int cmd_record(const std::filesystem::path& session_path, std::size_t candidate, double y, std::ostream& os,
               std::ostream& err) {
  return guarded(err, [&] {
    SessionLock lock(session_path);
    Session s = load_session(session_path);
    record(s, candidate, y);
    save_session(s, session_path);
    os << "recorded candidate " << candidate << " (" << s.observations.size() << " observations)\n";
    if (s.budget && s.spent() > *s.budget) os << "warning: recorded spend exceeds the session budget\n";
    return kExitOk;
  });
}

int cmd_report(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& out_dir,
               std::ostream& os, std::ostream& err) {
  return guarded(err, [&] {
    std::vector<std::filesystem::path> files;
    for (const auto& in : inputs) {
      if (std::filesystem::is_directory(in)) {
        for (const auto& e : std::filesystem::recursive_directory_iterator(in))
          if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
      } else {
        files.push_back(in);
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("no log files found");
    std::vector<EpisodeLog> logs;
    for (const auto& f : files) logs.push_back(load_episode_log(f));
    const auto paths = emit_report(logs, out_dir);
    os << "logs: " << logs.size() << '\n'
       << "report: " << paths.table.string() << '\n'
       << "curves: " << paths.curves.string() << '\n';
    return kExitOk;
  });
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Budget-aware sequential design for scaling-law fitting"};
  app.require_subcommand(1);

  std::string recipe, gen_out;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic instance from a recipe");
  gen->add_option("--recipe", recipe, "Recipe file")->required();
  gen->add_option("--out", gen_out, "Instance file to write")->required();

  std::string run_config, run_out;
  int run_threads = 0;
  auto* run = app.add_subcommand("run", "Run a sweep of episodes and write logs plus a report");
  run->add_option("--config", run_config, "Run configuration file")->required();
  run->add_option("--output-dir", run_out, std::string("Output directory (overrides ") + kOutputDirEnv + ")");
  run->add_option("--threads", run_threads, "Episodes run in parallel")->check(CLI::PositiveNumber);

  std::string adv_session;
  auto* adv = app.add_subcommand("advise", "Print the next candidate to run for a session");
  adv->add_option("--session", adv_session, "Session file")->required();

  std::string rec_session;
  std::size_t rec_candidate = 0;
  double rec_y = 0.0;
  auto* rec = app.add_subcommand("record", "Append an observed outcome to a session");
  rec->add_option("--session", rec_session, "Session file")->required();
  rec->add_option("--candidate", rec_candidate, "Candidate index")->required();
  rec->add_option("--outcome", rec_y, "Observed outcome")->required();

  std::vector<std::string> rep_logs;
  std::string rep_out;
  auto* rep = app.add_subcommand("report", "Aggregate existing episode logs");
  rep->add_option("--logs", rep_logs, "Log files or directories")->required();
  rep->add_option("--output-dir", rep_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (*gen) return cmd_generate(recipe, gen_out, std::cout, std::cerr);
  if (*run)
    return cmd_run(run_config, run_out.empty() ? std::nullopt : std::optional<std::filesystem::path>(run_out),
                   run_threads > 0 ? std::optional<int>(run_threads) : std::nullopt, std::cout, std::cerr);
  if (*adv) return cmd_advise(adv_session, std::cout, std::cerr);
  if (*rec) return cmd_record(rec_session, rec_candidate, rec_y, std::cout, std::cerr);
  if (*rep) {
    std::filesystem::path out = rep_out;
    if (out.empty()) {
      const char* env = std::getenv(kOutputDirEnv);
      out = env && *env ? env : ".";
    }
    return cmd_report({rep_logs.begin(), rep_logs.end()}, out, std::cout, std::cerr);
  }
  return kExitUsage;
}

}  // namespace activesl
