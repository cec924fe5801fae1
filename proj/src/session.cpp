#include "sonoloc/session.hpp"

#include "sonoloc/errors.hpp"
#include "sonoloc/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <numbers>
#include <sstream>

namespace sonoloc {

using nlohmann::json;

namespace {
constexpr int kSessionFormatVersion = 1;
}

std::vector<Point2> fourier_ellipse(const Point2& center, double semi_major, double semi_minor,
                                    double rotation, std::span<const double, 4> harmonics,
                                    std::span<const double, 4> phases, int n) {
  std::vector<Point2> ring;
  ring.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double t = 2.0 * std::numbers::pi * i / n;
    const double local = t - rotation;
    const double c = std::cos(local), s = std::sin(local);
    double r = semi_major * semi_minor /
               std::sqrt(semi_minor * semi_minor * c * c + semi_major * semi_major * s * s);
    double factor = 1.0;
    for (int k = 0; k < 4; ++k) factor += harmonics[k] * std::cos((k + 2) * t + phases[k]);
    r *= factor;
    ring.emplace_back(center.x() + r * std::cos(t), center.y() + r * std::sin(t));
  }
  return ring;
}

ShapePool generate_pool(std::size_t n, std::uint64_t rng_seed, SizeRange size, const PoolConfig& cfg) {
  if (n < 1) throw ValidationError("pool size must be >= 1");
  const double min_size = 2.0 * cfg.seed_clearance_mm + 6.0;
  if (!(size.min_mm >= min_size) || !(size.max_mm >= size.min_mm) ||
      !(size.max_mm + 2.0 * cfg.center_jitter_mm <= cfg.sheet_mm - 20.0)) {
    throw ValidationError("infeasible size range [" + std::to_string(size.min_mm) + ", " +
                          std::to_string(size.max_mm) + "] mm for a " +
                          std::to_string(cfg.sheet_mm) + " mm sheet");
  }

  Rng rng(rng_seed);
  ShapePool pool;
  pool.generation_seed = rng_seed;
  const Point2 mid = Point2::Constant(cfg.sheet_mm / 2.0);
  for (std::size_t s = 0; s < n; ++s) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const double diameter = rng.uniform(size.min_mm, size.max_mm);
      const double a = diameter / 2.0;
      const double b = a * rng.uniform(0.55, 1.0);
      const double rot = rng.uniform(0.0, std::numbers::pi);
      std::array<double, 4> harm{}, phase{};
      for (int k = 0; k < 4; ++k) {
        harm[k] = rng.uniform(-cfg.max_harmonic, cfg.max_harmonic);
        phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      }
      const Point2 center = mid + Point2(rng.uniform(-cfg.center_jitter_mm, cfg.center_jitter_mm),
                                         rng.uniform(-cfg.center_jitter_mm, cfg.center_jitter_mm));
      std::optional<Shape2D> shape;
      try {
        shape.emplace(fourier_ellipse(center, a, b, rot, harm, phase, cfg.vertices));
      } catch (const ValidationError&) {
        continue;
      }
      Point2 lo = shape->vertices().front(), hi = lo;
      for (const auto& v : shape->vertices()) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
      }
      for (int tries = 0; tries < 10000; ++tries) {
        const Point2 p(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()));
        if (signed_distance(*shape, p) <= -cfg.seed_clearance_mm) {
          char id[32];
          std::snprintf(id, sizeof id, "s%02zu", s + 1);
          pool.shapes.push_back({id, *shape, Seed{p, cfg.seed_radius_mm}});
          placed = true;
          break;
        }
      }
    }
    if (!placed) throw ValidationError("could not place a seed for shape " + std::to_string(s + 1));
  }
  return pool;
}

std::vector<std::string> select_trials(const ShapePool& pool, std::size_t k, std::uint64_t rng_seed) {
  if (k > pool.shapes.size())
    throw ValidationError("cannot select " + std::to_string(k) + " trials from a pool of " +
                          std::to_string(pool.shapes.size()));
  std::vector<std::string> ids;
  for (const auto& s : pool.shapes) ids.push_back(s.id);
  Rng rng(rng_seed);
  // Partial Fisher-Yates: the first k slots are a uniform sample.
  for (std::size_t i = 0; i < k; ++i) std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);
  ids.resize(k);
  return ids;
}

bool Trial::has_markings() const {
  if (surface) return surface->margin_marking_mm.size() >= 3 && surface->seed_marking_mm.has_value();
  return margin_marking.size() >= 3 && seed_marking.has_value();
}

void Trial::validate() const {
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (!(trace[i].t_ms > trace[i - 1].t_ms))
      throw ValidationError("trace timestamps must be strictly increasing");
}

GridSpec sheet_grid(double sheet_mm, double resolution_mm) {
  GridSpec g;
  g.resolution_mm = resolution_mm;
  g.width = g.height = static_cast<int>(std::lround(sheet_mm / resolution_mm));
  g.origin_mm = Point2::Zero();
  return g;
}

MetricsReport score_markings(std::span<const Point2> gt_ring, const Point2& gt_seed,
                             std::span<const Point2> margin_ring,
                             const std::optional<Point2>& seed_marking, double seed_radius_mm,
                             const GridSpec& grid) {
  if (margin_ring.size() < 3 || !seed_marking)
    throw ValidationError("trial needs both a margin marking and a seed marking");
  MetricsReport rep;

  const TumorPick gt_tumor = isolate_tumor(rasterize(gt_ring, grid));
  const RasterMask gt_mask = component_mask(grid, gt_tumor.component);
  const Component gt_seed_c =
      isolate_seed(rasterize_disk(gt_seed, seed_radius_mm, grid), gt_tumor.component);

  const RasterMask drawn = rasterize(margin_ring, grid);
  std::optional<TumorPick> ds_tumor;
  if (drawn.count() > 0) ds_tumor = isolate_tumor(drawn);
  const RasterMask ds_mask = ds_tumor ? component_mask(grid, ds_tumor->component) : RasterMask(grid);
  rep.tumor_low_circularity = ds_tumor && ds_tumor->low_circularity;

  rep.dice = dice(ds_mask, gt_mask);
  rep.area_ratio = area_ratio(ds_mask, gt_mask);

  const RasterMask seed_img = rasterize_disk(*seed_marking, seed_radius_mm, grid);
  std::optional<Component> ds_seed;
  if (ds_tumor) {
    try {
      ds_seed = isolate_seed(seed_img, ds_tumor->component);
    } catch (const NotFoundError&) {
    }
  }
  if (!ds_seed) {
    rep.seed_outside_margin = true;
    const auto comps = connected_components(seed_img);
    for (const auto& c : comps)
      if (!ds_seed || c.area_px > ds_seed->area_px) ds_seed = c;
  }
  rep.intercentroid_mm = ds_seed ? intercentroid(*ds_seed, gt_seed_c)
                                 : (*seed_marking - gt_seed_c.centroid_mm).norm();
  return rep;
}

MetricsReport score_trial(const Trial& trial, const ShapePool& pool, const GridSpec& grid) {
  if (!trial.has_markings()) throw ValidationError("trial " + trial.trial_id + " is missing a marking");
  const PoolShape& target = pool.find(trial.shape_id);
  if (!trial.surface) {
    return score_markings(target.shape.vertices(), target.seed.position, trial.margin_marking,
                          trial.seed_marking, target.seed.radius_mm, grid);
  }

  // Surface mode: fit one plane to the ground-truth outline and score in it.
  const SurfaceContext& sc = *trial.surface;
  const Plane plane = fit_plane(sc.gt_outline_mm);
  const auto gt2 = project_to_plane(sc.gt_outline_mm, plane);
  const auto mark2 = project_to_plane(sc.margin_marking_mm, plane);
  const Point3 seeds3[2] = {sc.gt_seed_mm, *sc.seed_marking_mm};
  const auto seeds2 = project_to_plane(seeds3, plane);

  Point2 lo = gt2.front(), hi = lo;
  for (const auto* pts : {&gt2, &mark2, &seeds2})
    for (const auto& p : *pts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  const GridSpec local = GridSpec::covering(lo, hi, grid.resolution_mm, 5.0);
  return score_markings(gt2, seeds2[0], mark2, seeds2[1], target.seed.radius_mm, local);
}

MetricsReport score_trial(const Trial& trial, const ShapePool& pool) {
  return score_trial(trial, pool, sheet_grid());
}

namespace {

json points_json(std::span<const Point2> pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back(to_json(p));
  return a;
}

json points_json(std::span<const Point3> pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back(to_json(p));
  return a;
}

}  // namespace

json metrics_to_json(const MetricsReport& m) {
  json j = {{"dice", m.dice},
            {"area_ratio", m.area_ratio},
            {"intercentroid_mm", m.intercentroid_mm},
            {"tumor_low_circularity", m.tumor_low_circularity},
            {"seed_outside_margin", m.seed_outside_margin}};
  j["crr"] = m.crr ? json(*m.crr) : json(nullptr);
  return j;
}

MetricsReport metrics_from_json(const json& j) {
  MetricsReport m;
  m.dice = j.at("dice").get<double>();
  m.area_ratio = j.at("area_ratio").get<double>();
  m.intercentroid_mm = j.at("intercentroid_mm").get<double>();
  m.tumor_low_circularity = j.value("tumor_low_circularity", false);
  m.seed_outside_margin = j.value("seed_outside_margin", false);
  if (j.contains("crr") && !j.at("crr").is_null()) m.crr = j.at("crr").get<double>();
  return m;
}

json trial_to_json(const Trial& t) {
  json trace = json::array();
  for (const auto& s : t.trace) trace.push_back({s.t_ms, s.position.x(), s.position.y()});
  json j = {{"type", "trial"},
            {"trial_id", t.trial_id},
            {"shape_id", t.shape_id},
            {"model", std::string(to_string(t.model))},
            {"started_ms", t.started_ms},
            {"ended_ms", t.ended_ms},
            {"partial", t.partial},
            {"trace", trace},
            {"margin_marking_mm", points_json(t.margin_marking)}};
  j["seed_marking_mm"] = t.seed_marking ? to_json(*t.seed_marking) : json(nullptr);
  if (t.surface) {
    json s = {{"gt_outline_mm", points_json(t.surface->gt_outline_mm)},
              {"gt_seed_mm", to_json(t.surface->gt_seed_mm)},
              {"margin_marking_mm", points_json(t.surface->margin_marking_mm)}};
    s["seed_marking_mm"] =
        t.surface->seed_marking_mm ? to_json(*t.surface->seed_marking_mm) : json(nullptr);
    j["surface"] = s;
  }
  if (t.metrics) j["metrics"] = metrics_to_json(*t.metrics);
  return j;
}

Trial trial_from_json(const json& j) {
  Trial t;
  t.trial_id = j.at("trial_id").get<std::string>();
  t.shape_id = j.at("shape_id").get<std::string>();
  const auto model = parse_model_kind(j.at("model").get<std::string>());
  if (!model) throw ParseError("unknown model '" + j.at("model").get<std::string>() + "'");
  t.model = *model;
  t.started_ms = j.value("started_ms", 0.0);
  t.ended_ms = j.value("ended_ms", 0.0);
  t.partial = j.value("partial", false);
  for (const auto& s : j.at("trace")) {
    if (!s.is_array() || s.size() != 3) throw ParseError("trace samples are [t_ms, x, y]");
    t.trace.push_back({s[0].get<double>(), Point2(s[1].get<double>(), s[2].get<double>())});
  }
  for (const auto& p : j.at("margin_marking_mm")) t.margin_marking.push_back(point2_from_json(p));
  if (j.contains("seed_marking_mm") && !j.at("seed_marking_mm").is_null())
    t.seed_marking = point2_from_json(j.at("seed_marking_mm"));
  if (j.contains("surface")) {
    const json& s = j.at("surface");
    SurfaceContext sc;
    for (const auto& p : s.at("gt_outline_mm")) sc.gt_outline_mm.push_back(point3_from_json(p));
    sc.gt_seed_mm = point3_from_json(s.at("gt_seed_mm"));
    for (const auto& p : s.at("margin_marking_mm")) sc.margin_marking_mm.push_back(point3_from_json(p));
    if (s.contains("seed_marking_mm") && !s.at("seed_marking_mm").is_null())
      sc.seed_marking_mm = point3_from_json(s.at("seed_marking_mm"));
    t.surface = std::move(sc);
  }
  if (j.contains("metrics")) t.metrics = metrics_from_json(j.at("metrics"));
  t.validate();
  return t;
}

std::string session_header_line(const SessionRecord& r) {
  json h = {{"type", "session"},
            {"format_version", kSessionFormatVersion},
            {"session_id", r.session_id},
            {"participant", r.participant}};
  if (r.config) h["config"] = to_json(*r.config);
  if (r.pool) h["pool"] = pool_to_json(*r.pool);
  return h.dump() + "\n";
}

std::string trial_line(const Trial& t) { return trial_to_json(t).dump() + "\n"; }

std::string session_to_jsonl(const SessionRecord& r) {
  std::string out = session_header_line(r);
  for (const auto& t : r.trials) out += trial_line(t);
  return out;
}

SessionRecord session_from_jsonl(const std::string& text) {
  SessionRecord r;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (!have_header) {
        if (type != "session") throw ParseError("first record must be the session header");
        const int version = j.at("format_version").get<int>();
        if (version != kSessionFormatVersion)
          throw UnsupportedVersionError("unsupported session format version " + std::to_string(version));
        r.session_id = j.at("session_id").get<std::string>();
        r.participant = j.value("participant", "");
        if (j.contains("config")) r.config = mapping_config_from_json(j.at("config"));
        if (j.contains("pool")) r.pool = pool_from_json(j.at("pool"));
        have_header = true;
      } else if (type == "trial") {
        r.trials.push_back(trial_from_json(j));
      } else {
        throw ParseError("unexpected record type '" + type + "'");
      }
    } catch (const UnsupportedVersionError& e) {
      throw UnsupportedVersionError(e.what(), lineno);
    } catch (const std::exception& e) {
      if (const auto* pe = dynamic_cast<const ParseError*>(&e); pe && pe->line() != 0) throw;
      throw ParseError(e.what(), lineno);
    }
  }
  if (!have_header) throw ParseError("session file has no header", lineno == 0 ? 1 : lineno);
  return r;
}

void save_session(const SessionRecord& r, const std::filesystem::path& path) {
  write_text_file(path, session_to_jsonl(r));
}

SessionRecord load_session(const std::filesystem::path& path) {
  return session_from_jsonl(read_text_file(path));
}

std::vector<ParamEvent> replay_trial(const Trial& trial, const Scene& scene, const MappingConfig& cfg) {
  std::vector<ParamEvent> events;
  events.reserve(trial.trace.size());
  for (const auto& s : trial.trace)
    events.push_back({s.t_ms, map_params(trial.model, compute_features(scene, s.position), cfg)});
  return events;
}

std::vector<std::vector<ParamEvent>> replay(const SessionRecord& record) {
  if (!record.config) throw ValidationError("session has no mapping config snapshot");
  if (!record.pool) throw ValidationError("session has no pool snapshot");
  std::vector<std::vector<ParamEvent>> out;
  for (const auto& t : record.trials)
    out.push_back(replay_trial(t, record.pool->find(t.shape_id).scene(), *record.config));
  return out;
}

}  // namespace sonoloc

namespace sonoloc {

PcmBuffer render_trial_audio(const Trial& trial, const Scene& scene, const MappingConfig& mapping,
                             RenderConfig render_cfg) {
  render_cfg.voice = beat_voice_for(trial.model);
  auto events = replay_trial(trial, scene, mapping);
  const double t0 = events.empty() ? 0.0 : events.front().t_ms;
  for (auto& e : events) e.t_ms -= t0;
  const double span_s = events.empty() ? 0.0 : events.back().t_ms / 1000.0;
  return render(events, span_s + 1.0, render_cfg);
}

}  // namespace sonoloc

namespace sonoloc {

std::vector<MetricsRow> evaluate_session(const SessionRecord& record, const ShapePool& pool, bool parallel) {
  std::vector<const Trial*> scored;
  for (const auto& t : record.trials)
    if (t.has_markings()) scored.push_back(&t);

  std::vector<MetricsRow> rows(scored.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(scored.size()); ++i) {
    try {
      const Trial& t = *scored[i];
      rows[i] = {record.session_id, t.trial_id, std::string(to_string(t.model)), score_trial(t, pool), ""};
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  using Getter = std::optional<double> (*)(const MetricsReport&);
  const std::pair<const char*, Getter> columns[] = {
      {"dice", [](const MetricsReport& m) -> std::optional<double> { return m.dice; }},
      {"area_ratio", [](const MetricsReport& m) -> std::optional<double> { return m.area_ratio; }},
      {"intercentroid_mm", [](const MetricsReport& m) -> std::optional<double> { return m.intercentroid_mm; }},
      {"crr", [](const MetricsReport& m) { return m.crr; }},
  };
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) groups[rows[i].model].push_back(i);
  for (const auto& [model, idx] : groups) {
    for (const auto& [name, get] : columns) {
      std::vector<std::size_t> who;
      std::vector<double> vals;
      for (std::size_t i : idx)
        if (const auto v = get(rows[i].report)) {
          who.push_back(i);
          vals.push_back(*v);
        }
      if (vals.size() < 4) continue;
      const IqrResult r = iqr_filter(vals);
      for (std::size_t k = 0; k < who.size(); ++k) {
        if (!r.is_outlier[k]) continue;
        std::string& flag = rows[who[k]].outlier_flag;
        if (!flag.empty()) flag += ';';
        flag += name;
      }
    }
  }
  return rows;
}

}  // namespace sonoloc
