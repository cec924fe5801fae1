#include "sonoloc/errors.hpp"
#include "sonoloc/geometry_io.hpp"
#include "sonoloc/synth.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <numbers>

using namespace sonoloc;

namespace {

SoundParams beat(double rate, double volume) {
  SoundParams p;
  p.beat_rate_hz = rate;
  p.beat_volume = volume;
  return p;
}

SoundParams pad(double volume) {
  SoundParams p;
  p.pad_volume = volume;
  return p;
}

std::uint32_t u32_at(const std::vector<std::uint8_t>& b, std::size_t at) {
  return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t u16_at(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

// Magnitude spectrum by a direct DFT over bins [lo, hi).
std::size_t peak_bin(const std::vector<std::int16_t>& x, std::size_t lo, std::size_t hi) {
  const double n = static_cast<double>(x.size());
  std::size_t best = lo;
  double best_mag = -1;
  for (std::size_t k = lo; k < hi; ++k) {
    std::complex<double> s = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      s += static_cast<double>(x[i]) * std::polar(1.0, -2 * std::numbers::pi * static_cast<double>(k * i) / n);
    if (std::abs(s) > best_mag) {
      best_mag = std::abs(s);
      best = k;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("patch constants") {
  const auto m = ModalBarPatch::marimba(), x = ModalBarPatch::xylophone(), t = ModalBarPatch::tick();
  REQUIRE(m.modes.size() == 3);
  CHECK(m.modes[1].freq_ratio == 3.99);
  CHECK(m.modes[2].decay_s == 0.08);
  CHECK(x.modes[2].freq_ratio == 9.2);
  CHECK(t.modes[0].decay_s == doctest::Approx(0.1));
  CHECK(t.modes[0].freq_ratio == 1.0);
  const auto half = ModalBarPatch::blend(m, x, 0.5);
  CHECK(half.modes[1].freq_ratio == doctest::Approx(3.495));
  CHECK(half.modes[0].decay_s == doctest::Approx(0.35));
  ModalBarPatch bad{{{0.5, 1.0, 0.1}}};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.modes[0] = {1.0, 0.0, 0.1};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("strike examples") {
  const RenderConfig cfg;
  const PcmBuffer silent = strike(440, 0.3, 0.0, cfg);
  CHECK_FALSE(silent.samples.empty());
  for (auto s : silent.samples) REQUIRE(s == 0);
  CHECK(strike(440, 0.0, 0.5, cfg) == strike(ModalBarPatch::marimba(), 440, 0.5, cfg));
  CHECK(strike(440, 1.0, 0.5, cfg) == strike(ModalBarPatch::xylophone(), 440, 0.5, cfg));
  CHECK(strike(440, 0.0, 0.5, cfg).samples.front() == 0);
  CHECK_THROWS_AS(strike(0.0, 0.0, 0.5, cfg), ValidationError);
}

TEST_CASE("strike spectral peak sits at the pitch") {
  RenderConfig cfg;
  cfg.sample_rate_hz = 8000;
  for (double pitch : {440.0, 523.25, 300.0}) {
    auto buf = strike(pitch, 0.0, 0.8, cfg);
    buf.samples.resize(4000);  // 2 Hz bins
    const double bin_hz = static_cast<double>(cfg.sample_rate_hz) / 4000.0;
    const std::size_t k = peak_bin(buf.samples, 1, 1000);
    CHECK(std::abs(static_cast<double>(k) * bin_hz - pitch) <= bin_hz);
  }
}

TEST_CASE("strike follows the modal sum") {
  RenderConfig cfg;
  const auto buf = strike(ModalBarPatch::marimba(), 440, 0.5, cfg);
  const double sr = cfg.sample_rate_hz;
  for (std::size_t i : {200u, 1000u, 5000u, 20000u}) {
    const double t = static_cast<double>(i) / sr;
    double s = 0;
    for (const auto& m : ModalBarPatch::marimba().modes)
      s += m.gain * std::sin(2 * std::numbers::pi * 440 * m.freq_ratio * t) * std::exp(-t / m.decay_s);
    CHECK(buf.samples[i] == std::lround(0.5 * s * 32767));
  }
}

TEST_CASE("4 Hz for 2 s gives 8 onsets") {
  const std::vector<ParamEvent> ev{{0.0, beat(4, 1)}};
  const auto on = schedule_onsets(ev, 2.0, RenderConfig{});
  REQUIRE(on.size() == 8);
  for (std::size_t i = 0; i < on.size(); ++i) CHECK(on[i] == doctest::Approx(0.25 * static_cast<double>(i)));
}

TEST_CASE("onset count law over rates and durations") {
  for (double r : {1.5, 4.0, 6.0, 10.0})
    for (double T : {1.0, 2.0, 5.0}) {
      const std::vector<ParamEvent> ev{{0.0, beat(r, 1)}};
      const auto n = static_cast<double>(schedule_onsets(ev, T, RenderConfig{}).size());
      CAPTURE(r);
      CAPTURE(T);
      CHECK(n >= std::floor(r * T));
      CHECK(n <= std::ceil(r * T));
    }
}

TEST_CASE("rate change applies from the next onset") {
  const std::vector<ParamEvent> ev{{0.0, beat(2, 1)}, {100.0, beat(10, 1)}};
  const auto on = schedule_onsets(ev, 1.0, RenderConfig{});
  REQUIRE(on.size() >= 3);
  CHECK(on[1] == doctest::Approx(0.5));
  CHECK(on[2] == doctest::Approx(0.6));
}

TEST_CASE("beat starts when it becomes audible and stops when muted") {
  const std::vector<ParamEvent> ev{{0.0, beat(4, 0)}, {300.0, beat(4, 1)}, {1000.0, beat(4, 0)}};
  const auto on = schedule_onsets(ev, 2.0, RenderConfig{});
  REQUIRE(on.size() == 3);
  CHECK(on[0] == doctest::Approx(0.3));
  CHECK(on[2] == doctest::Approx(0.8));
}

TEST_CASE("silence") {
  SoundParams p = beat(6, 0);
  p.pad_volume = 0;
  const std::vector<ParamEvent> ev{{0.0, p}};
  const auto buf = render(ev, 1.0, RenderConfig{});
  CHECK(buf.samples.size() == 48000);
  for (auto s : buf.samples) REQUIRE(s == 0);
  CHECK(render({}, 0.5, RenderConfig{}).samples.size() == 24000);
}

TEST_CASE("pad RMS scales with pad volume") {
  RenderConfig cfg;
  const std::vector<ParamEvent> full{{0.0, pad(1.0)}}, half{{0.0, pad(0.5)}};
  auto a = render(full, 3.0, cfg), b = render(half, 3.0, cfg);
  // Measure after the smoother has settled.
  a.samples.erase(a.samples.begin(), a.samples.begin() + 48000);
  b.samples.erase(b.samples.begin(), b.samples.begin() + 48000);
  CHECK(rms(b) / rms(a) == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("RMS increases strictly with beat volume") {
  for (auto voice : {BeatVoice::SineBeep, BeatVoice::ModalBar, BeatVoice::Tick}) {
    RenderConfig cfg;
    cfg.voice = voice;
    double last = -1;
    for (double v : {0.2, 0.4, 0.6, 0.8, 1.0}) {
      const std::vector<ParamEvent> ev{{0.0, beat(4, v)}};
      const double r = rms(render(ev, 1.0, cfg));
      CHECK(r > last);
      last = r;
    }
  }
}

TEST_CASE("pad gate transitions have no clicks") {
  RenderConfig cfg;
  const double sr = cfg.sample_rate_hz;
  const std::vector<ParamEvent> ev{{0.0, pad(0.0)}, {200.0, pad(1.0)}, {600.0, pad(0.0)}, {800.0, pad(1.0)}};
  const auto buf = render(ev, 1.0, cfg);
  // Largest step a sine of amplitude pad_level can take, plus the most the
  // smoothed envelope can move in one sample, plus one rounding step.
  const double alpha = 1.0 - std::exp(-1.0 / (cfg.smoothing_ms / 1000.0 * sr));
  const double bound =
      cfg.pad_level * (2 * std::numbers::pi * SoundParams{}.pad_pitch_hz / sr + alpha) * 32767 + 1;
  int worst = 0;
  for (std::size_t i = 1; i < buf.samples.size(); ++i)
    worst = std::max(worst, std::abs(buf.samples[i] - buf.samples[i - 1]));
  CHECK(worst > 0);
  CHECK(worst <= bound);

  // An unsmoothed gate would jump by up to the full pad amplitude.
  CHECK(bound < cfg.pad_level * 32767 * 0.2);
}

TEST_CASE("render rejects bad input") {
  const std::vector<ParamEvent> unsorted{{10.0, pad(1)}, {5.0, pad(0)}};
  CHECK_THROWS_AS(render(unsorted, 1.0, RenderConfig{}), ValidationError);
  const std::vector<ParamEvent> dup{{10.0, pad(1)}, {10.0, pad(0)}};
  CHECK_THROWS_AS(render(dup, 1.0, RenderConfig{}), ValidationError);
  CHECK_THROWS_AS(render({}, 0.0, RenderConfig{}), ValidationError);
  RenderConfig cfg;
  cfg.sample_rate_hz = 4000;
  CHECK_THROWS_AS(render({}, 1.0, cfg), ValidationError);
}

TEST_CASE("WAV encoding") {
  PcmBuffer buf;
  buf.samples.assign(48000, 0);
  buf.samples[0] = -2;
  const auto bytes = encode_wav(buf);
  CHECK(bytes.size() == 44 + 96000);
  CHECK(std::memcmp(bytes.data(), "RIFF", 4) == 0);
  CHECK(u32_at(bytes, 4) == 36 + 96000);
  CHECK(std::memcmp(bytes.data() + 8, "WAVEfmt ", 8) == 0);
  CHECK(u32_at(bytes, 16) == 16);
  CHECK(u16_at(bytes, 20) == 1);
  CHECK(u16_at(bytes, 22) == 1);
  CHECK(u32_at(bytes, 24) == 48000);
  CHECK(u32_at(bytes, 28) == 96000);
  CHECK(u16_at(bytes, 34) == 16);
  CHECK(std::memcmp(bytes.data() + 36, "data", 4) == 0);
  CHECK(u32_at(bytes, 40) == 96000);
  CHECK(bytes[44] == 0xFE);
  CHECK(bytes[45] == 0xFF);
}

TEST_CASE("rendering the same stream twice gives byte-identical files") {
  testing::TempDir dir("wav");
  SoundParams p = beat(5, 0.8);
  p.timbre_mix = 0.4;
  p.pad_volume = 1;
  const std::vector<ParamEvent> ev{{0.0, p}, {250.0, beat(9, 0.3)}, {700.0, pad(0.6)}};
  write_wav(render(ev, 1.5, RenderConfig{}), dir / "a.wav");
  write_wav(render(ev, 1.5, RenderConfig{}), dir / "b.wav");
  CHECK(read_text_file(dir / "a.wav") == read_text_file(dir / "b.wav"));
  CHECK_THROWS_AS(write_wav(PcmBuffer{}, dir / "no" / "x.wav"), IoError);
}

TEST_CASE("event log round trip") {
  SoundParams p = beat(3.25, 0.125);
  p.timbre_mix = 1.0 / 3;
  const std::vector<ParamEvent> ev{{0.0, p}, {16.5, pad(0.7)}};
  CHECK(events_from_jsonl(events_to_jsonl(ev)) == ev);
  try {
    events_from_jsonl(events_to_jsonl(ev) + "not json\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("beat voice per model") {
  CHECK(beat_voice_for(ModelKind::Beep1) == BeatVoice::SineBeep);
  CHECK(beat_voice_for(ModelKind::Synth) == BeatVoice::Tick);
  CHECK(beat_voice_for(ModelKind::Sine) == BeatVoice::ModalBar);
  CHECK(beat_voice_for(ModelKind::Rhythm) == BeatVoice::ModalBar);
}
