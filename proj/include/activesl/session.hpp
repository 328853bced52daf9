#pragma once

// Advisory sessions for live pools: candidates without outcomes plus the
// observations gathered so far, persisted in a file between invocations.

#include "activesl/engine.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace activesl {

struct SessionCandidate {
  ConfigPoint x;
  double cost = 1.0;
};

struct SessionObservation {
  std::size_t candidate = 0;
  double y = 0.0;
};

struct Session {
  LawSpec law{"linear", 1};
  CostModel cost_model;
  std::vector<SessionCandidate> candidates;
  std::vector<ConfigPoint> target;
  std::vector<SessionObservation> observations;
  /// Absolute budget; unlimited when absent.
  std::optional<double> budget;
  Policy policy;
  EpisodeConfig config;
  std::uint64_t seed = 0;

  double spent() const;
  /// Pool/target view used to drive the engine; unobserved outcomes are 0.
  Instance as_instance() const;
};

Session parse_session(std::string_view text, std::string_view source = "session");
std::string format_session(const Session& session);
Session load_session(const std::filesystem::path& path);
void save_session(const Session& session, const std::filesystem::path& path);

struct Advice {
  enum class Kind { WarmStart, Scored, Exhausted };
  Kind kind = Kind::Exhausted;
  std::optional<std::size_t> index;
  std::optional<CandidateScore> score;
  std::size_t num_basins = 0;
  bool stale_fit = false;
};

/// Next candidate to run. Below ceil(2.5 p) observations this is the next
/// warm-start point (cheapest unobserved, ties by index); afterwards the
/// engine's step for the session policy with the episode fit seed.
Advice advise(const Session& session);

/// Appends an outcome for candidate `index`.
void record(Session& session, std::size_t index, double y);

/// Exclusive `<session>.lock` held for the lifetime of the object.
class SessionLock {
 public:
  explicit SessionLock(const std::filesystem::path& session_path);
  ~SessionLock();
  SessionLock(const SessionLock&) = delete;
  SessionLock& operator=(const SessionLock&) = delete;

 private:
  std::filesystem::path lock_path_;
};

}  // namespace activesl
