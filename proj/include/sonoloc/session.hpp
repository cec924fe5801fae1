#pragma once

// Trial orchestration: shape pools, trial records, scoring, persistence and
// replay.

#include "sonoloc/geometry.hpp"
#include "sonoloc/geometry_io.hpp"
#include "sonoloc/metrics.hpp"
#include "sonoloc/sonification.hpp"
#include "sonoloc/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sonoloc {

struct SizeRange {
  double min_mm = 20.0;  // major diameter
  double max_mm = 50.0;
};

struct PoolConfig {
  double sheet_mm = 150.0;        // shapes are centered on a square sheet
  double center_jitter_mm = 10.0;
  double seed_clearance_mm = 5.0;
  double seed_radius_mm = 1.5;
  int vertices = 64;
  double max_harmonic = 0.15;     // |a_k| bound for k = 2..5
};

// Polar shape r(t) = r_ellipse(t - rotation) * (1 + sum_k a_k cos(k t + phi_k)),
// k = 2..5, sampled at n equal angles.
std::vector<Point2> fourier_ellipse(const Point2& center, double semi_major, double semi_minor,
                                    double rotation, std::span<const double, 4> harmonics,
                                    std::span<const double, 4> phases, int n);

ShapePool generate_pool(std::size_t n, std::uint64_t rng_seed, SizeRange size = {},
                        const PoolConfig& cfg = {});
// Uniform sample of k ids without replacement.
std::vector<std::string> select_trials(const ShapePool& pool, std::size_t k, std::uint64_t rng_seed);

struct TraceSample {
  double t_ms = 0.0;
  Point2 position = Point2::Zero();
};

// Surface-mode trial data. Everything is projected onto the plane fitted to
// the ground-truth outline before scoring.
struct SurfaceContext {
  std::vector<Point3> gt_outline_mm;
  Point3 gt_seed_mm = Point3::Zero();
  std::vector<Point3> margin_marking_mm;
  std::optional<Point3> seed_marking_mm;
};

struct Trial {
  std::string trial_id;
  std::string shape_id;
  ModelKind model = ModelKind::Sine;
  std::vector<TraceSample> trace;
  std::vector<Point2> margin_marking;  // freehand, may self-intersect
  std::optional<Point2> seed_marking;
  double started_ms = 0.0;
  double ended_ms = 0.0;
  bool partial = false;
  std::optional<SurfaceContext> surface;
  std::optional<MetricsReport> metrics;

  bool has_markings() const;
  void validate() const;  // trace timestamps strictly increasing
};

struct SessionRecord {
  std::string session_id;
  std::string participant;
  std::optional<MappingConfig> config;
  std::optional<ShapePool> pool;
  std::vector<Trial> trials;
};

// 150 x 150 mm sheet at 0.5 mm/px with the origin at the sheet corner.
GridSpec sheet_grid(double sheet_mm = 150.0, double resolution_mm = 0.5);

// Ground truth vs drawn markings on one grid: segment, isolate the tumor and
// seed components, then Dice, area ratio and intercentroid distance.
MetricsReport score_markings(std::span<const Point2> gt_ring, const Point2& gt_seed,
                             std::span<const Point2> margin_ring,
                             const std::optional<Point2>& seed_marking, double seed_radius_mm,
                             const GridSpec& grid);

// Throws ValidationError if a marking is missing.
MetricsReport score_trial(const Trial& trial, const ShapePool& pool, const GridSpec& grid);
MetricsReport score_trial(const Trial& trial, const ShapePool& pool);  // sheet_grid()

nlohmann::json metrics_to_json(const MetricsReport& m);
MetricsReport metrics_from_json(const nlohmann::json& j);
nlohmann::json trial_to_json(const Trial& t);
Trial trial_from_json(const nlohmann::json& j);
std::string session_header_line(const SessionRecord& r);
std::string trial_line(const Trial& t);
std::string session_to_jsonl(const SessionRecord& r);
// Throws ParseError naming the 1-based line of the first bad record.
SessionRecord session_from_jsonl(const std::string& text);
void save_session(const SessionRecord& r, const std::filesystem::path& path);
SessionRecord load_session(const std::filesystem::path& path);

std::vector<ParamEvent> replay_trial(const Trial& trial, const Scene& scene, const MappingConfig& cfg);
// One parameter stream per trial. Needs the config and pool snapshots.
std::vector<std::vector<ParamEvent>> replay(const SessionRecord& record);

// Scores every trial that has both markings (partial or unmarked trials are
// skipped) and flags IQR outliers per metric within each model group. Rows
// follow trial order.
std::vector<MetricsRow> evaluate_session(const SessionRecord& record, const ShapePool& pool,
                                         bool parallel = true);

// Offline audio of what was heard during a trial: the replayed stream shifted
// so the first probe sample is at t = 0, plus a one second tail.
PcmBuffer render_trial_audio(const Trial& trial, const Scene& scene, const MappingConfig& mapping,
                             RenderConfig render_cfg = {});

}  // namespace sonoloc
