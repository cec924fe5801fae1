#include "sonoloc/errors.hpp"
#include "sonoloc/mlp.hpp"
#include "sonoloc/session.hpp"
#include "sonoloc/sonification.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

using namespace sonoloc;

namespace {

const MappingConfig kCfg{};

DistanceFeatures features(double d_margin, double d_seed) { return {d_margin, d_seed, d_margin <= 0}; }

constexpr ModelKind kModels[] = {ModelKind::Beep1, ModelKind::Beep2, ModelKind::Rhythm, ModelKind::Synth,
                                 ModelKind::Sine};

}  // namespace

TEST_CASE("model names") {
  for (auto m : kModels) CHECK(parse_model_kind(to_string(m)) == m);
  CHECK(parse_model_kind("beep") == ModelKind::Beep2);
  CHECK(parse_model_kind("SINE") == ModelKind::Sine);
  CHECK_FALSE(parse_model_kind("theremin").has_value());
}

TEST_CASE("proximity and rate law") {
  CHECK(proximity(0, kCfg) == 1.0);
  CHECK(proximity(80, kCfg) == 0.0);
  CHECK(proximity(200, kCfg) == 0.0);
  CHECK(proximity(20, kCfg) == doctest::Approx(0.75));
  CHECK(beat_rate(0, kCfg) == kCfg.beat_rate_max_hz);
  CHECK(beat_rate(80, kCfg) == kCfg.beat_rate_min_hz);
}

TEST_CASE("Sine at the seed plays the fastest beat and the pad") {
  const auto s = map_params(ModelKind::Sine, features(-10, 0), kCfg);
  CHECK(s.beat_rate_hz == kCfg.beat_rate_max_hz);
  CHECK(s.pad_volume == 1.0);
  CHECK(s.beat_volume == 1.0);
  CHECK(s.beat_pitch_hz == 200.0);
  CHECK(s.pad_pitch_hz == 261.63);
}

TEST_CASE("Synth is silent outside the tumor and beyond the seed zone") {
  const auto s = map_params(ModelKind::Synth, features(5, 30), kCfg);
  CHECK(s.beat_volume == 0.0);
  CHECK(s.pad_volume == 0.0);
  CHECK(s.timbre_mix == 0.0);
  const auto tick = map_params(ModelKind::Synth, features(-3, 4), kCfg);
  CHECK(tick.beat_volume == doctest::Approx(0.6));
  CHECK(tick.beat_rate_hz == kCfg.tick_rate_hz);
  CHECK(tick.beat_pitch_hz == 660.0);
  CHECK(tick.pad_volume == 1.0);
}

TEST_CASE("Rhythm interpolation endpoints") {
  const auto on_margin = map_params(ModelKind::Rhythm, features(0, 12), kCfg);
  CHECK(on_margin.timbre_mix == 0.0);
  CHECK(on_margin.beat_volume == 1.0);
  CHECK(on_margin.beat_rate_hz == kCfg.rhythm_rate_hz);
  CHECK(on_margin.beat_pitch_hz == 330.0);

  CHECK(map_params(ModelKind::Rhythm, features(-7, 0), kCfg).timbre_mix == 1.0);
  CHECK(map_params(ModelKind::Rhythm, features(-3, 9), kCfg).timbre_mix == doctest::Approx(0.25));

  const auto outside = map_params(ModelKind::Rhythm, features(20, 30), kCfg);
  CHECK(outside.timbre_mix == 0.0);
  CHECK(outside.beat_volume == doctest::Approx(0.75));

  // Strict endpoints over many configurations.
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double dm = -rng.uniform(0.001, 40);
    REQUIRE(map_params(ModelKind::Rhythm, features(dm, 0), kCfg).timbre_mix == 1.0);
    REQUIRE(map_params(ModelKind::Rhythm, features(0, rng.uniform(0.001, 40)), kCfg).timbre_mix == 0.0);
    const double mix = map_params(ModelKind::Rhythm, features(dm, rng.uniform(0.001, 40)), kCfg).timbre_mix;
    REQUIRE(mix > 0.0);
    REQUIRE(mix < 1.0);
  }
}

TEST_CASE("Beep2 at half range follows the rate formula") {
  const auto s = map_params(ModelKind::Beep2, features(10, 40), kCfg);
  CHECK(s.beat_rate_hz == doctest::Approx(1.5 + 8.5 * 0.25));
  CHECK(s.beat_volume == 1.0);
  CHECK(s.beat_pitch_hz == 200.0);
  CHECK(map_params(ModelKind::Beep1, features(10, 40), kCfg).beat_pitch_hz == 440.0);
  CHECK(map_params(ModelKind::Beep1, features(10, 81), kCfg).beat_volume == 0.0);
  CHECK(map_params(ModelKind::Beep1, features(-10, 5), kCfg).pad_volume == 0.0);
}

TEST_CASE("beat rate is non-increasing in seed distance for Beep and Sine") {
  Rng rng(6);
  std::vector<double> ds(1000);
  for (auto& d : ds) d = rng.uniform(0, 80);
  std::sort(ds.begin(), ds.end());
  for (auto m : {ModelKind::Beep1, ModelKind::Beep2, ModelKind::Sine}) {
    double prev = std::numeric_limits<double>::infinity();
    for (double d : ds) {
      const double r = map_params(m, features(-1, d), kCfg).beat_rate_hz;
      REQUIRE(r <= prev);
      prev = r;
    }
  }
}

TEST_CASE("pad gate matches containment for random probes") {
  const ShapePool pool = generate_pool(5, 13);
  Rng rng(9);
  for (const auto& s : pool.shapes) {
    const Scene scene = s.scene();
    for (int i = 0; i < 10000; ++i) {
      const Point2 p(rng.uniform(20, 130), rng.uniform(20, 130));
      const bool inside = signed_distance(scene.shape, p) <= 0;
      const auto f = compute_features(scene, p);
      REQUIRE((map_params(ModelKind::Synth, f, kCfg).pad_volume > 0) == inside);
      REQUIRE((map_params(ModelKind::Sine, f, kCfg).pad_volume > 0) == inside);
    }
  }
}

TEST_CASE("parameters stay in range and are deterministic") {
  Rng rng(10);
  for (int i = 0; i < 5000; ++i) {
    const auto f = features(rng.uniform(-40, 100), rng.uniform(0, 150));
    for (auto m : kModels) {
      const auto a = map_params(m, f, kCfg);
      const auto b = map_params(m, f, kCfg);
      REQUIRE(std::memcmp(&a, &b, sizeof a) == 0);
      REQUIRE(a.beat_volume >= 0.0);
      REQUIRE(a.beat_volume <= 1.0);
      REQUIRE(a.pad_volume >= 0.0);
      REQUIRE(a.pad_volume <= 1.0);
      REQUIRE(a.timbre_mix >= 0.0);
      REQUIRE(a.timbre_mix <= 1.0);
      REQUIRE(a.beat_rate_hz >= 0.0);
      REQUIRE(a.beat_pitch_hz > 0.0);
      REQUIRE(a.pad_pitch_hz > 0.0);
    }
  }
}

TEST_CASE("parameters are Lipschitz inside zones") {
  // Away from the gates every parameter moves at most L per mm of feature change.
  const double h = 0.01;
  double worst = 0.0;
  for (auto m : kModels) {
    for (double dm = -39.5; dm <= 39.5; dm += 0.5) {
      if (std::abs(dm) < 1.0) continue;
      for (double ds = 0.5; ds <= 120; ds += 0.5) {
        if (std::abs(ds - kCfg.range_mm) < 1.0 || std::abs(ds - kCfg.seed_zone_mm) < 1.0) continue;
        const auto base = map_params(m, features(dm, ds), kCfg);
        for (const auto& step : {features(dm + h, ds), features(dm, ds + h)}) {
          const auto s = map_params(m, step, kCfg);
          const double diff = std::max({std::abs(s.beat_volume - base.beat_volume),
                                        std::abs(s.beat_rate_hz - base.beat_rate_hz) / kCfg.beat_rate_max_hz,
                                        std::abs(s.timbre_mix - base.timbre_mix),
                                        std::abs(s.pad_volume - base.pad_volume)});
          worst = std::max(worst, diff / h);
        }
      }
    }
  }
  CHECK(worst < 1.0);  // per mm, in normalized units
}

TEST_CASE("mapping config validation and JSON") {
  MappingConfig bad;
  bad.range_mm = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.beat_rate_max_hz = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  MappingConfig c;
  c.range_mm = 60;
  c.tick_pitch_hz = 700;
  CHECK(mapping_config_from_json(to_json(c)) == c);
  CHECK(mapping_config_from_json(nlohmann::json::object()) == MappingConfig{});
  CHECK_THROWS_AS(mapping_config_from_json(nlohmann::json{{"range_mm", -1}}), ValidationError);

  const auto p = map_params(ModelKind::Rhythm, features(-3, 9), kCfg);
  CHECK(sound_params_from_json(nlohmann::json::parse(to_json(p).dump())) == p);
}

TEST_CASE("smoothing of a constant stream is the identity") {
  SoundParams s;
  s.beat_volume = 0.4;
  s.pad_volume = 1;
  s.timbre_mix = 0.3;
  std::vector<ParamEvent> in;
  for (int i = 0; i < 50; ++i) in.push_back({i * 8.3, s});
  CHECK(smooth(in) == in);
}

TEST_CASE("smoothing step response reaches 1 - 1/e after one time constant") {
  SoundParams off, on;
  on.pad_volume = 1;
  on.beat_volume = 1;
  const std::vector<ParamEvent> in{{0, off}, {100, on}, {130, on}, {250, on}};
  const auto out = smooth(in, 30);
  CHECK(out[1].params.pad_volume == 0.0);  // the step is heard from its timestamp on
  CHECK(out[2].params.pad_volume == doctest::Approx(1 - std::exp(-1.0)).epsilon(1e-12));
  CHECK(out[3].params.pad_volume >= 0.99);  // past 5 tau
  CHECK(out[3].params.beat_volume == out[3].params.pad_volume);
}

TEST_CASE("smoothing matches a fine-step Euler simulation of the first-order lag") {
  // Held input sampled on an irregular grid; the oracle integrates dy/dt = (u - y)/tau.
  Rng rng(15);
  std::vector<ParamEvent> in;
  double t = 0;
  for (int i = 0; i < 60; ++i) {
    SoundParams s;
    s.pad_volume = rng.uniform() < 0.5 ? 0.0 : 1.0;
    s.timbre_mix = rng.uniform();
    s.beat_rate_hz = rng.uniform(1, 10);
    in.push_back({t, s});
    t += rng.uniform(2, 40);
  }
  const auto out = smooth(in, 30);
  double y = in[0].params.pad_volume;
  for (std::size_t k = 1; k < in.size(); ++k) {
    const double u = in[k - 1].params.pad_volume;
    const int steps = 20000;
    const double dt = (in[k].t_ms - in[k - 1].t_ms) / steps;
    for (int s = 0; s < steps; ++s) y += dt * (u - y) / 30.0;
    REQUIRE(out[k].params.pad_volume == doctest::Approx(y).epsilon(1e-3));
    REQUIRE(out[k].params.beat_rate_hz == in[k].params.beat_rate_hz);
  }
}

TEST_CASE("a short impulse never reaches full volume") {
  SoundParams off, on;
  on.beat_volume = 1;
  const std::vector<ParamEvent> in{{0, off}, {10, on}, {20, off}, {30, off}, {60, off}};
  double peak = 0;
  for (const auto& e : smooth(in, 30)) peak = std::max(peak, e.params.beat_volume);
  CHECK(peak < 1.0);
  CHECK(peak == doctest::Approx(1 - std::exp(-10.0 / 30)).epsilon(1e-12));
}

TEST_CASE("smoothing rejects non-monotone time") {
  const std::vector<ParamEvent> in{{0, {}}, {10, {}}, {10, {}}};
  CHECK_THROWS_AS(smooth(in), ValidationError);
  const std::vector<ParamEvent> back{{5, {}}, {1, {}}};
  CHECK_THROWS_AS(smooth(back), ValidationError);
}
