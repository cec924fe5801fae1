// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include "sonoloc/agent.hpp"
#include "sonoloc/geometry.hpp"
#include "sonoloc/metrics.hpp"
#include "sonoloc/mlp.hpp"
#include "sonoloc/service.hpp"
#include "sonoloc/session.hpp"
#include "sonoloc/synth.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <Eigen/Geometry>

#include <chrono>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

using namespace sonoloc;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "failed: ";
      else detail << "; ";
      detail << what;
      pass = false;
    }
  }
};

GridSpec grid_px(int px, double res = 0.5) {
  GridSpec g;
  g.width = g.height = px;
  g.resolution_mm = res;
  return g;
}

RasterMask fill_rect(const GridSpec& g, int i0, int j0, int w, int h) {
  RasterMask m(g);
  for (int j = j0; j < j0 + h; ++j)
    for (int i = i0; i < i0 + w; ++i) m.set(i, j);
  return m;
}

Component only_component(const RasterMask& m) {
  const auto cs = connected_components(m);
  return cs.size() == 1 ? cs[0] : Component{};
}

Point2 brute_closest(const std::vector<Point2>& ring, const Point2& p) {
  Point2 best = ring[0];
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const Point2 a = ring[i], b = ring[(i + 1) % ring.size()];
    const double t = std::clamp((p - a).dot(b - a) / (b - a).squaredNorm(), 0.0, 1.0);
    const Point2 q = a + t * (b - a);
    if ((p - q).norm() < best_d) {
      best_d = (p - q).norm();
      best = q;
    }
  }
  return best;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q.normalized().toRotationMatrix();
}

void metric_exactness(Outcome& o) {
  const GridSpec g = grid_px(300);
  o.require(rasterize(Shape2D(testing::square_ring(20, 20, 10)), g).count() == 400, "10 mm square != 400 px");

  double worst = 0;
  const Shape2D circle(ellipse_ring(15, 15, 720, {75.13, 75.29}));
  worst = std::abs(rasterize(circle, g).count() * 0.25 / (std::numbers::pi * 225) - 1);
  Rng rng(21);
  for (int k = 0; k < 200; ++k) {
    const double a = rng.uniform(8, 30), b = rng.uniform(8, 30);
    const Shape2D e(ellipse_ring(a, b, 720, {rng.uniform(40, 110), rng.uniform(40, 110)}));
    worst = std::max(worst, std::abs(rasterize(e, g).count() * 0.25 / (std::numbers::pi * a * b) - 1));
  }
  o.require(worst <= 0.02, "raster area error above 2%");
  o.detail << "raster area error max " << worst;

  const GridSpec small = grid_px(100);
  const auto a = fill_rect(small, 10, 10, 20, 20);
  o.require(dice(a, a) == 1.0, "dice(A,A)");
  o.require(dice(a, fill_rect(small, 50, 50, 20, 20)) == 0.0, "dice disjoint");
  const Shape2D s1(testing::square_ring(10, 10, 10)), s2(testing::square_ring(15, 10, 10));
  o.require(dice(rasterize(s1, small), rasterize(s2, small)) == 0.5, "dice half overlap");
  Rng mrng(8);
  for (int k = 0; k < 200; ++k) {
    RasterMask x(grid_px(40)), y(grid_px(40));
    for (auto& b : x.bits) b = mrng.uniform() < 0.3;
    for (auto& b : y.bits) b = mrng.uniform() < 0.5;
    const double d = dice(x, y);
    if (d != dice(y, x) || d < 0 || d > 1) o.require(false, "dice symmetry/bounds");
  }
  const auto gt = rasterize(Shape2D(testing::square_ring(20.1, 20.3, 10)), grid_px(200));
  const auto big = rasterize(Shape2D(testing::square_ring(40.2, 40.1, 20)), grid_px(200));
  o.require(area_ratio(gt, gt) == 1.0, "area_ratio identity");
  o.require(std::abs(area_ratio(big, gt) - 4.0) <= 0.08, "area_ratio 4x");
  const auto c = only_component(fill_rect(small, 10, 10, 3, 3));
  o.require(intercentroid(c, c) == 0.0, "intercentroid identity");
  o.require(std::abs(intercentroid(c, only_component(fill_rect(small, 16, 18, 3, 3))) - 5.0) < 1e-12,
            "intercentroid 3-4-5");
  o.require(std::abs(intercentroid(c, only_component(fill_rect(small, 12, 12, 3, 3))) - std::sqrt(2.0)) < 1e-12,
            "intercentroid diagonal");
}

void circularity_suite(Outcome& o) {
  Rng rng(7);
  double lo = 10, hi = 0;
  for (int r = 10; r <= 100; ++r)
    for (int k = 0; k < 5; ++k) {
      const GridSpec g = grid_px(2 * r + 12);
      const double cc = (r + 6) * 0.5;
      const auto comp =
          only_component(rasterize_disk({cc + rng.uniform(-0.25, 0.25), cc + rng.uniform(-0.25, 0.25)}, r * 0.5, g));
      lo = std::min(lo, comp.circularity);
      hi = std::max(hi, comp.circularity);
    }
  o.require(lo >= 0.85 && hi <= 1.1, "disk circularity outside [0.85, 1.1]");
  double closed = 0;
  for (double R = 1; R <= 200; R += 0.5) {
    const double A = std::numbers::pi * R * R, P = 2 * std::numbers::pi * R;
    closed = std::max(closed, std::abs(circularity(A, P) - std::pow(R / (R + 0.5), 2)));
  }
  o.require(closed <= 1e-9, "closed form mismatch");
  o.detail << "disk range [" << lo << ", " << hi << "], closed-form error " << closed;
}

void geometry_suite(Outcome& o) {
  Rng rng(17);
  const auto pool = generate_pool(10, 3);
  double worst_cp = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto& s = pool.shapes[static_cast<std::size_t>(i) % pool.shapes.size()].shape;
    const Point2 p(rng.uniform(-20, 170), rng.uniform(-20, 170));
    const Point2 c = closest_point(s, p);
    worst_cp = std::max(worst_cp, std::abs((p - c).norm() - (p - brute_closest(s.vertices(), p)).norm()));
  }
  o.require(worst_cp <= 1e-6, "closest point disagrees with brute force");

  double worst_deg = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Matrix3d R = random_rotation(rng);
    std::vector<Point3> pts;
    for (int i = 0; i < 200; ++i) pts.push_back(R * Point3(rng.uniform(-25, 25), rng.uniform(-25, 25), 0.1 * rng.normal()));
    const double cosang = std::min(1.0, std::abs(fit_plane(pts).normal.dot(R.col(2))));
    worst_deg = std::max(worst_deg, std::acos(cosang) * 180 / std::numbers::pi);
  }
  o.require(worst_deg <= 1.0, "plane fit above 1 degree");

  double worst_reg = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Matrix3d R = random_rotation(rng);
    const Eigen::Vector3d t(rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-100, 100));
    std::vector<Point3> src, dst;
    for (int i = 0; i < 6; ++i) {
      src.emplace_back(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50));
      dst.push_back(R * src.back() + t);
    }
    const auto reg = rigid_register(src, dst);
    worst_reg = std::max({worst_reg, (reg.transform.rotation - R).cwiseAbs().maxCoeff(),
                          (reg.transform.translation - t).cwiseAbs().maxCoeff()});
  }
  o.require(worst_reg <= 1e-9, "registration not recovered");
  o.detail << "closest-point " << worst_cp << " mm, plane " << worst_deg << " deg, registration " << worst_reg;
}

void mlp_suite(Outcome& o) {
  Rng rng(11);
  double worst_grad = 0;
  for (int k = 0; k < 25; ++k) {
    const Mlp m = oracle::random_net(rng);
    const auto set = oracle::random_set(rng, static_cast<int>(m.n_inputs()), static_cast<int>(m.n_outputs()), 1 + rng.below(8));
    worst_grad = std::max(worst_grad, oracle::gradient_check(m, set));
  }
  o.require(worst_grad < 1e-4, "gradient check");

  double worst_fit = 0;
  const auto pool = generate_pool(15, 2024);
  for (const auto& s : pool.shapes) worst_fit = std::max(worst_fit, oracle::sine_mapping_fit(s.scene(), 1).max_error);
  o.require(worst_fit < 0.05, "Sine mapping fit");
  o.detail << "gradient rel err " << worst_grad << " over 25 nets, Sine fit max error " << worst_fit << " over 15 shapes";
}

void synth_suite(Outcome& o) {
  SoundParams p;
  p.beat_rate_hz = 5;
  p.beat_volume = 0.8;
  p.timbre_mix = 0.4;
  p.pad_volume = 1;
  SoundParams q;
  q.beat_rate_hz = 9;
  q.beat_volume = 0.3;
  const std::vector<ParamEvent> ev{{0.0, p}, {250.0, q}};
  for (auto voice : {BeatVoice::SineBeep, BeatVoice::ModalBar, BeatVoice::Tick}) {
    RenderConfig cfg;
    cfg.voice = voice;
    o.require(encode_wav(render(ev, 1.5, cfg)) == encode_wav(render(ev, 1.5, cfg)), "WAV bytes differ");
  }

  int law_cases = 0;
  for (double r : {1.5, 4.0, 6.0, 10.0})
    for (double T : {1.0, 2.0, 5.0}) {
      SoundParams b;
      b.beat_rate_hz = r;
      b.beat_volume = 1;
      const std::vector<ParamEvent> e{{0.0, b}};
      const auto n = static_cast<double>(schedule_onsets(e, T, RenderConfig{}).size());
      o.require(n >= std::floor(r * T) && n <= std::ceil(r * T), "onset law");
      ++law_cases;
    }

  for (auto voice : {BeatVoice::SineBeep, BeatVoice::ModalBar, BeatVoice::Tick}) {
    RenderConfig cfg;
    cfg.voice = voice;
    double last = -1;
    for (double v = 0.1; v <= 1.0001; v += 0.1) {
      SoundParams b;
      b.beat_rate_hz = 4;
      b.beat_volume = v;
      const std::vector<ParamEvent> e{{0.0, b}};
      const double r = rms(render(e, 1.0, cfg));
      o.require(r > last, "RMS not monotone in beat volume");
      last = r;
    }
  }
  double last = -1;
  for (double v = 0.1; v <= 1.0001; v += 0.1) {
    SoundParams b;
    b.pad_volume = v;
    const std::vector<ParamEvent> e{{0.0, b}};
    const double r = rms(render(e, 1.0, RenderConfig{}));
    o.require(r > last, "RMS not monotone in pad volume");
    last = r;
  }
  o.detail << "byte-identical WAV x3 voices, " << law_cases << " onset-law cases, RMS monotone";
}

void online_offline(Outcome& o) {
  testing::TempDir dir("accept");
  ServiceConfig cfg;
  cfg.pool = generate_pool(15, 99);
  cfg.out_dir = dir.path();
  Server server(cfg, "127.0.0.1", 0);
  server.start();
  const auto latency = server.config().latency;
  latency->clear();

  Rng rng(5);
  const char* models[] = {"beep1", "beep2", "rhythm", "synth", "sine"};
  std::size_t probes = 0;
  for (int session = 0; session < 3; ++session) {
    testing::WsClient c("127.0.0.1", server.port());
    const std::string id = c.request({{"type", "start_session"}})["session_id"];
    std::vector<std::vector<SoundParams>> live;
    for (int trial = 0; trial < 3; ++trial) {
      c.request({{"type", "start_trial"}, {"model", models[rng.below(5)]}});
      live.emplace_back();
      Point2 pos(rng.uniform(20, 130), rng.uniform(20, 130));
      auto next = std::chrono::steady_clock::now();
      const double dt = 1000.0 / 120;
      for (int i = 0; i < 240; ++i) {
        pos += Point2(rng.normal(), rng.normal()) * 1.5;
        const auto reply = c.request({{"type", "probe"}, {"x_mm", pos.x()}, {"y_mm", pos.y()}, {"t_ms", dt * i}});
        live.back().push_back(sound_params_from_json(reply["params"]));
        ++probes;
        next += std::chrono::microseconds(8333);
        std::this_thread::sleep_until(next);
      }
      c.request({{"type", "mark_margin"}, {"path", nlohmann::json::parse("[[60,60],[90,60],[90,90],[60,90]]")}});
      c.request({{"type", "mark_seed"}, {"x_mm", 75}, {"y_mm", 75}});
      c.request({{"type", "finish_trial"}});
    }
    c.request({{"type", "end_session"}});

    const auto streams = replay(load_session(dir / (id + ".jsonl")));
    bool same = streams.size() == live.size();
    for (std::size_t t = 0; same && t < live.size(); ++t) {
      same = streams[t].size() == live[t].size();
      for (std::size_t i = 0; same && i < live[t].size(); ++i) same = streams[t][i].params == live[t][i];
    }
    o.require(same, "session " + id + " replay differs");
  }
  server.stop();
  const double p99 = latency->percentile(99);
  o.require(latency->samples().size() == probes, "latency samples missing");
  o.require(p99 <= 5.0, "p99 above 5 ms");
  o.detail << "3 sessions, " << probes << " probes at 120 Hz bit-exact; p99 " << p99 << " ms";
}

void directional_study(Outcome& o) {
  const auto pool = generate_pool(15, 2024);
  const MappingConfig mapping;
  AgentConfig margin, seed_only;
  margin.policy = AgentPolicy::MarginFollowing;
  margin.model = ModelKind::Sine;
  margin.noise_mm = 1.0;
  seed_only.policy = AgentPolicy::SeedOnly;
  seed_only.model = ModelKind::Beep2;
  seed_only.noise_mm = 1.0;
  const auto mean_dice = [&](const AgentConfig& a) {
    const auto rec = simulate_session(pool, mapping, a, 200, 42, "study");
    double s = 0;
    for (const auto& t : rec.trials) s += t.metrics->dice;
    return s / static_cast<double>(rec.trials.size());
  };
  const double m = mean_dice(margin), s = mean_dice(seed_only);
  o.require(m - s >= 0.05, "margin-following advantage below 0.05");

  double worst_perfect = 1;
  for (const auto& shape : pool.shapes) {
    Trial t;
    t.trial_id = "p";
    t.shape_id = shape.id;
    t.margin_marking.assign(shape.shape.vertices().begin(), shape.shape.vertices().end());
    t.seed_marking = shape.seed.position;
    worst_perfect = std::min(worst_perfect, score_trial(t, pool).dice);
  }
  o.require(worst_perfect >= 0.98, "perfect trace below 0.98");
  o.detail << "200 trials each (simulated agents): margin/Sine " << m << ", seed-only/Beep " << s << ", difference "
           << m - s << "; perfect trace min " << worst_perfect;
}

void crr_check(Outcome& o) {
  // Tumor r = 10 mm, resection r = 15 mm, optimal r = 12 mm. The lattice
  // tumor sits slightly inside its sphere, so ORV runs small on coarse voxels;
  // 0.25 mm voxels keep that bias near 1%.
  const auto at = [](double voxel_mm) {
    const int n = static_cast<int>(std::ceil(36 / voxel_mm));
    const std::array<int, 3> dims{n, n, n};
    const Point3 c(18, 18, 18);
    const auto tumor = voxel_ball(dims, voxel_mm, c, 10);
    return std::pair{crr(voxel_ball(dims, voxel_mm, c, 15), tumor),
                     crr(dilate_ball(tumor, static_cast<int>(std::lround(2 / voxel_mm))), tumor)};
  };
  const double expect = std::pow(15.0 / 12.0, 3);
  const auto [v, one] = at(0.25);
  const auto [coarse, coarse_one] = at(0.5);
  o.require(std::abs(v / expect - 1) <= 0.03, "CRR off by more than 3%");
  o.require(one == 1.0 && coarse_one == 1.0, "trv = ORV not exactly 1");
  o.detail << "crr " << v << " vs " << expect << " at 0.25 mm voxels (" << coarse << " at 0.5 mm); trv = ORV gives "
           << one;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"metric exactness", metric_exactness},
      {"circularity suite", circularity_suite},
      {"geometry suite", geometry_suite},
      {"MLP suite", mlp_suite},
      {"synth determinism and laws", synth_suite},
      {"online/offline equivalence", online_offline},
      {"directional study analog", directional_study},
      {"CRR check", crr_check},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  %-28s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.str().c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
