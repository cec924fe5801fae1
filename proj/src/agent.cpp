#include "sonoloc/agent.hpp"

#include "sonoloc/errors.hpp"
#include "sonoloc/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numbers>

namespace sonoloc {

std::string_view to_string(AgentPolicy p) {
  return p == AgentPolicy::SeedOnly ? "seed-only" : "margin-following";
}

std::optional<AgentPolicy> parse_agent_policy(std::string_view name) {
  if (name == "seed-only") return AgentPolicy::SeedOnly;
  if (name == "margin-following") return AgentPolicy::MarginFollowing;
  return std::nullopt;
}

namespace {

constexpr double kSilent = -std::numeric_limits<double>::infinity();

// Larger means closer to the seed, as far as the sound lets the agent tell.
double seed_cue(ModelKind model, const SoundParams& s) {
  switch (model) {
    case ModelKind::Beep1:
    case ModelKind::Beep2:
    case ModelKind::Sine: return s.beat_volume > 0 ? s.beat_rate_hz : kSilent;
    case ModelKind::Synth: return s.beat_volume > 0 ? s.beat_volume : kSilent;
    case ModelKind::Rhythm:
      if (s.beat_volume >= 1.0) return 1.0 + s.timbre_mix;
      return s.beat_volume > 0 ? s.beat_volume : kSilent;
  }
  return kSilent;
}

std::optional<bool> inside_cue(ModelKind model, const SoundParams& s) {
  switch (model) {
    case ModelKind::Sine:
    case ModelKind::Synth: return s.pad_volume > 0.0;
    case ModelKind::Rhythm: return s.beat_volume >= 1.0;
    default: return std::nullopt;
  }
}

Point2 locate_seed(const ProbeFn& probe, const AgentConfig& cfg) {
  Point2 best = Point2::Constant(cfg.sheet_mm / 2.0);
  double best_cue = kSilent;
  for (double y = cfg.scan_step_mm / 2.0; y < cfg.sheet_mm; y += cfg.scan_step_mm) {
    for (double x = cfg.scan_step_mm / 2.0; x < cfg.sheet_mm; x += cfg.scan_step_mm) {
      const Point2 p(x, y);
      const double c = seed_cue(cfg.model, probe(p));
      if (c > best_cue) {
        best_cue = c;
        best = p;
      }
    }
  }
  // Compass search with shrinking step.
  double step = cfg.scan_step_mm;
  for (int iter = 0; iter < 2000 && step > cfg.bisect_tol_mm; ++iter) {
    Point2 move = best;
    double move_cue = best_cue;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy) {
        if (dx == 0 && dy == 0) continue;
        const Point2 p = best + step * Point2(dx, dy);
        const double c = seed_cue(cfg.model, probe(p));
        if (c > move_cue) {
          move_cue = c;
          move = p;
        }
      }
    if (move_cue > best_cue) {
      best = move;
      best_cue = move_cue;
    } else {
      step /= 2.0;
    }
  }
  return best;
}

std::vector<Point2> follow_margin(const ProbeFn& probe, const AgentConfig& cfg, const Point2& center) {
  const auto inside = [&](const Point2& p) { return *inside_cue(cfg.model, probe(p)); };
  std::vector<Point2> boundary;
  const double march = 1.0;
  for (int k = 0; k < cfg.rays; ++k) {
    const double th = 2.0 * std::numbers::pi * k / cfg.rays;
    const Point2 dir(std::cos(th), std::sin(th));
    double lo = 0.0, hi = march;
    while (hi < cfg.sheet_mm && inside(center + hi * dir)) {
      lo = hi;
      hi += march;
    }
    while (hi - lo > cfg.bisect_tol_mm) {
      const double mid = 0.5 * (lo + hi);
      (inside(center + mid * dir) ? lo : hi) = mid;
    }
    boundary.push_back(center + 0.5 * (lo + hi) * dir);
  }
  return boundary;
}

}  // namespace

AgentResult run_agent(const ProbeFn& probe, const AgentConfig& cfg, std::uint64_t rng_seed) {
  if (cfg.policy == AgentPolicy::MarginFollowing && !inside_cue(cfg.model, SoundParams{}))
    throw ValidationError("model " + std::string(to_string(cfg.model)) +
                          " gives no margin cue to follow");
  if (cfg.rays < 3) throw ValidationError("agent needs at least 3 rays");
  Rng rng(rng_seed);
  const auto jitter = [&](const Point2& p) {
    if (cfg.noise_mm <= 0) return p;
    const double dx = rng.normal(), dy = rng.normal();
    return Point2(p.x() + cfg.noise_mm * dx, p.y() + cfg.noise_mm * dy);
  };

  AgentResult r;
  r.seed_estimate = locate_seed(probe, cfg);
  std::vector<Point2> outline;
  if (cfg.policy == AgentPolicy::MarginFollowing) {
    outline = follow_margin(probe, cfg, r.seed_estimate);
  } else {
    outline = ellipse_ring(cfg.guess_radius_mm, cfg.guess_radius_mm, static_cast<std::size_t>(cfg.rays),
                           r.seed_estimate);
  }
  for (const auto& p : outline) r.margin_marking.push_back(jitter(p));
  r.seed_marking = jitter(r.seed_estimate);
  return r;
}

Trial simulate_trial(const PoolShape& target, const MappingConfig& mapping, const AgentConfig& cfg,
                     std::uint64_t rng_seed, const std::string& trial_id) {
  Trial t;
  t.trial_id = trial_id;
  t.shape_id = target.id;
  t.model = cfg.model;
  const Scene scene = target.scene();
  const double dt = 1000.0 / cfg.probe_rate_hz;
  std::size_t tick = 0;
  const ProbeFn probe = [&](const Point2& p) {
    t.trace.push_back({static_cast<double>(tick++) * dt, p});
    return map_params(cfg.model, compute_features(scene, p), mapping);
  };
  const AgentResult r = run_agent(probe, cfg, rng_seed);
  t.margin_marking = r.margin_marking;
  t.seed_marking = r.seed_marking;
  t.started_ms = 0.0;
  t.ended_ms = static_cast<double>(tick) * dt;
  return t;
}

SessionRecord simulate_session(const ShapePool& pool, const MappingConfig& mapping,
                               const AgentConfig& cfg, std::size_t k, std::uint64_t rng_seed,
                               const std::string& session_id) {
  SessionRecord rec;
  rec.session_id = session_id;
  char label[96];
  std::snprintf(label, sizeof label, "simulated agent %s/%s sigma=%g mm",
                std::string(to_string(cfg.policy)).c_str(), std::string(to_string(cfg.model)).c_str(),
                cfg.noise_mm);
  rec.participant = label;
  rec.config = mapping;
  rec.pool = pool;

  std::vector<std::string> order;
  for (std::uint64_t round = 0; order.size() < k; ++round) {
    const auto ids = select_trials(pool, pool.shapes.size(), rng_seed + 0x1000 * (round + 1));
    order.insert(order.end(), ids.begin(), ids.end());
  }
  order.resize(k);

  rec.trials.resize(k);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(k); ++i) {
    try {
      char id[32];
      std::snprintf(id, sizeof id, "t%03td", i + 1);
      Trial t = simulate_trial(pool.find(order[i]), mapping, cfg,
                               Rng(rng_seed ^ (0x9e3779b97f4a7c15ULL * (i + 1))).next(), id);
      t.metrics = score_trial(t, pool);
      rec.trials[i] = std::move(t);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return rec;
}

}  // namespace sonoloc
