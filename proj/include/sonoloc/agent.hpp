#pragma once

// Scripted stand-ins for a participant. Agents only observe the sound
// parameters returned for each probe position; they never see the target.
// These are simulations, not models of the human study data.

#include "sonoloc/session.hpp"
#include "sonoloc/sonification.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>

namespace sonoloc {

enum class AgentPolicy { SeedOnly, MarginFollowing };

std::string_view to_string(AgentPolicy p);
std::optional<AgentPolicy> parse_agent_policy(std::string_view name);

struct AgentConfig {
  AgentPolicy policy = AgentPolicy::MarginFollowing;
  ModelKind model = ModelKind::Sine;
  double noise_mm = 0.0;         // Gaussian jitter on every marked point
  double guess_radius_mm = 15.0;  // seed-only circle
  int rays = 72;
  double probe_rate_hz = 120.0;
  double scan_step_mm = 5.0;
  double sheet_mm = 150.0;
  double bisect_tol_mm = 0.05;
};

// Probe callback: position -> what the participant hears.
using ProbeFn = std::function<SoundParams(const Point2&)>;

struct AgentResult {
  Point2 seed_estimate = Point2::Zero();
  std::vector<Point2> margin_marking;
  Point2 seed_marking = Point2::Zero();
};

// Runs one localization with the given probe; the agent's own randomness
// (marking jitter) comes from rng_seed. Throws ValidationError when the
// model offers no cue for the policy (e.g. margin following with Beep).
AgentResult run_agent(const ProbeFn& probe, const AgentConfig& cfg, std::uint64_t rng_seed);

// Full trial against a pool shape: records the probe trace at probe_rate_hz.
Trial simulate_trial(const PoolShape& target, const MappingConfig& mapping, const AgentConfig& cfg,
                     std::uint64_t rng_seed, const std::string& trial_id);

// k trials over shapes drawn without replacement, reshuffled each time the
// pool is exhausted. Trials are scored. Runs trials in parallel; output
// order follows trial id.
SessionRecord simulate_session(const ShapePool& pool, const MappingConfig& mapping,
                               const AgentConfig& cfg, std::size_t k, std::uint64_t rng_seed,
                               const std::string& session_id);

}  // namespace sonoloc
