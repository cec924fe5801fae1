#include "sonoloc/synth.hpp"

#include "sonoloc/errors.hpp"
#include "sonoloc/geometry_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace sonoloc {

using nlohmann::json;

ModalBarPatch ModalBarPatch::marimba() {
  return {{{1.0, 1.0, 0.45}, {3.99, 0.4, 0.2}, {10.65, 0.15, 0.08}}};
}

ModalBarPatch ModalBarPatch::xylophone() {
  return {{{1.0, 1.0, 0.25}, {3.0, 0.5, 0.12}, {9.2, 0.2, 0.05}}};
}

ModalBarPatch ModalBarPatch::tick() {
  ModalBarPatch p = xylophone();
  for (auto& m : p.modes) m.decay_s *= 0.4;
  return p;
}

ModalBarPatch ModalBarPatch::blend(const ModalBarPatch& a, const ModalBarPatch& b, double mix) {
  if (a.modes.size() != b.modes.size()) throw ValidationError("patches differ in mode count");
  const double t = std::clamp(mix, 0.0, 1.0);
  ModalBarPatch out;
  for (std::size_t i = 0; i < a.modes.size(); ++i) {
    const Mode& x = a.modes[i];
    const Mode& y = b.modes[i];
    out.modes.push_back({x.freq_ratio + t * (y.freq_ratio - x.freq_ratio),
                         x.gain + t * (y.gain - x.gain), x.decay_s + t * (y.decay_s - x.decay_s)});
  }
  return out;
}

void ModalBarPatch::validate() const {
  if (modes.empty()) throw ValidationError("patch has no modes");
  for (const auto& m : modes) {
    if (!(m.freq_ratio >= 1.0)) throw ValidationError("mode ratio must be >= 1");
    if (!(m.decay_s > 0.0)) throw ValidationError("mode decay must be positive");
    if (!(m.gain > 0.0 && m.gain <= 1.0)) throw ValidationError("mode gain must be in (0,1]");
  }
}

BeatVoice beat_voice_for(ModelKind model) {
  switch (model) {
    case ModelKind::Beep1: return BeatVoice::SineBeep;
    case ModelKind::Synth: return BeatVoice::Tick;
    default: return BeatVoice::ModalBar;
  }
}

void RenderConfig::validate() const {
  if (sample_rate_hz < 8000) throw ValidationError("sample rate must be >= 8000 Hz");
  if (channels != 1) throw ValidationError("only mono output is supported");
  if (bit_depth != 16) throw ValidationError("only 16-bit output is supported");
  if (!(smoothing_ms > 0) || !(beep_length_ms > 0) || attack_ms < 0)
    throw ValidationError("envelope times must be positive");
}

std::int16_t to_pcm16(double x) {
  const double c = std::clamp(x, -1.0, 1.0);
  return static_cast<std::int16_t>(std::lround(c * 32767.0));
}

double rms(const PcmBuffer& buf) {
  if (buf.samples.empty()) return 0.0;
  double sum = 0.0;
  for (auto s : buf.samples) sum += static_cast<double>(s) * s;
  return std::sqrt(sum / static_cast<double>(buf.samples.size()));
}

namespace {

double raised_cosine(double t, double ramp) {
  if (ramp <= 0.0 || t >= ramp) return 1.0;
  return 0.5 * (1.0 - std::cos(std::numbers::pi * t / ramp));
}

constexpr double kTailDecays = 8.0;
constexpr double kTailFadeS = 0.005;

PcmBuffer quantize(const std::vector<double>& x, int sample_rate) {
  PcmBuffer buf;
  buf.sample_rate_hz = sample_rate;
  buf.samples.reserve(x.size());
  for (double v : x) buf.samples.push_back(to_pcm16(v));
  return buf;
}

}  // namespace

std::vector<double> strike_samples(const ModalBarPatch& patch, double pitch_hz, double gain,
                                   int sample_rate_hz, double attack_ms) {
  patch.validate();
  if (!(pitch_hz > 0)) throw ValidationError("pitch must be positive");
  double longest = 0.0;
  for (const auto& m : patch.modes) longest = std::max(longest, m.decay_s);
  const double sr = sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::ceil(kTailDecays * longest * sr));
  const double attack = attack_ms / 1000.0;
  const double length = static_cast<double>(n) / sr;

  std::vector<double> out(n, 0.0);
  if (gain == 0.0) return out;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    double s = 0.0;
    for (const auto& m : patch.modes)
      s += m.gain * std::sin(2.0 * std::numbers::pi * pitch_hz * m.freq_ratio * t) *
           std::exp(-t / m.decay_s);
    double env = raised_cosine(t, attack);
    if (length - t < kTailFadeS) env *= raised_cosine(length - t, kTailFadeS);
    out[i] = gain * env * s;
  }
  return out;
}

std::vector<double> beep_samples(double pitch_hz, double gain, int sample_rate_hz, double length_ms,
                                 double ramp_ms) {
  if (!(pitch_hz > 0)) throw ValidationError("pitch must be positive");
  const double sr = sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::lround(length_ms / 1000.0 * sr));
  const double length = static_cast<double>(n) / sr;
  const double ramp = ramp_ms / 1000.0;
  std::vector<double> out(n, 0.0);
  if (gain == 0.0) return out;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double env = raised_cosine(t, ramp) * raised_cosine(length - t, ramp);
    out[i] = gain * env * std::sin(2.0 * std::numbers::pi * pitch_hz * t);
  }
  return out;
}

PcmBuffer strike(const ModalBarPatch& patch, double pitch_hz, double gain, const RenderConfig& cfg) {
  cfg.validate();
  return quantize(strike_samples(patch, pitch_hz, gain, cfg.sample_rate_hz, cfg.attack_ms),
                  cfg.sample_rate_hz);
}

PcmBuffer strike(double pitch_hz, double timbre_mix, double gain, const RenderConfig& cfg) {
  return strike(ModalBarPatch::blend(ModalBarPatch::marimba(), ModalBarPatch::xylophone(), timbre_mix),
                pitch_hz, gain, cfg);
}

namespace {

void check_events(std::span<const ParamEvent> events, double duration_s) {
  if (!(duration_s > 0)) throw ValidationError("render duration must be positive");
  for (std::size_t i = 1; i < events.size(); ++i)
    if (!(events[i].t_ms > events[i - 1].t_ms))
      throw ValidationError("events must be sorted by strictly increasing t_ms");
}

SoundParams silent_params() {
  SoundParams p;
  p.beat_volume = 0.0;
  p.pad_volume = 0.0;
  return p;
}

struct Onset {
  std::size_t sample;
  SoundParams params;
};

// Walks the sample clock and reports each onset with the parameters in force.
std::vector<Onset> onsets_in_samples(std::span<const ParamEvent> events, std::size_t n_samples,
                                     int sample_rate) {
  std::vector<Onset> onsets;
  const double sr = sample_rate;
  SoundParams cur = silent_params();
  std::size_t next_ev = 0;
  double next_onset = -1.0;  // sample position, < 0 when idle
  for (std::size_t n = 0; n < n_samples; ++n) {
    const double t_ms = static_cast<double>(n) * 1000.0 / sr;
    while (next_ev < events.size() && events[next_ev].t_ms <= t_ms) cur = events[next_ev++].params;
    const bool active = cur.beat_volume > 0.0 && cur.beat_rate_hz > 0.0;
    const double pos = static_cast<double>(n);
    if (next_onset < 0.0) {
      if (active) {
        onsets.push_back({n, cur});
        next_onset = pos + sr / cur.beat_rate_hz;
      }
    } else if (pos >= next_onset - 1e-6) {
      if (active) {
        onsets.push_back({n, cur});
        next_onset += sr / cur.beat_rate_hz;
        if (next_onset <= pos) next_onset = pos + sr / cur.beat_rate_hz;
      } else {
        next_onset = -1.0;
      }
    }
  }
  return onsets;
}

std::size_t sample_count(double duration_s, int sample_rate) {
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate));
}

}  // namespace

std::vector<double> schedule_onsets(std::span<const ParamEvent> events, double duration_s,
                                    const RenderConfig& cfg) {
  cfg.validate();
  check_events(events, duration_s);
  std::vector<double> times;
  for (const auto& o : onsets_in_samples(events, sample_count(duration_s, cfg.sample_rate_hz),
                                         cfg.sample_rate_hz))
    times.push_back(static_cast<double>(o.sample) / cfg.sample_rate_hz);
  return times;
}

PcmBuffer render(std::span<const ParamEvent> events, double duration_s, const RenderConfig& cfg) {
  cfg.validate();
  check_events(events, duration_s);
  const std::size_t n = sample_count(duration_s, cfg.sample_rate_hz);
  const double sr = cfg.sample_rate_hz;
  std::vector<double> mix(n, 0.0);

  for (const auto& onset : onsets_in_samples(events, n, cfg.sample_rate_hz)) {
    const SoundParams& p = onset.params;
    const double gain = cfg.beat_level * std::clamp(p.beat_volume, 0.0, 1.0);
    std::vector<double> voice;
    switch (cfg.voice) {
      case BeatVoice::SineBeep:
        voice = beep_samples(p.beat_pitch_hz, gain, cfg.sample_rate_hz, cfg.beep_length_ms,
                             cfg.attack_ms);
        break;
      case BeatVoice::ModalBar:
        voice = strike_samples(ModalBarPatch::blend(ModalBarPatch::marimba(),
                                                    ModalBarPatch::xylophone(), p.timbre_mix),
                               p.beat_pitch_hz, gain, cfg.sample_rate_hz, cfg.attack_ms);
        break;
      case BeatVoice::Tick:
        voice = strike_samples(ModalBarPatch::tick(), p.beat_pitch_hz, gain, cfg.sample_rate_hz,
                               cfg.attack_ms);
        break;
    }
    for (std::size_t i = 0; i < voice.size() && onset.sample + i < n; ++i)
      mix[onset.sample + i] += voice[i];
  }

  // Pad: continuous sine scaled by the exponentially smoothed pad volume.
  const double alpha = 1.0 - std::exp(-1.0 / (cfg.smoothing_ms / 1000.0 * sr));
  SoundParams cur = silent_params();
  std::size_t next_ev = 0;
  double level = 0.0, phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t_ms = static_cast<double>(i) * 1000.0 / sr;
    while (next_ev < events.size() && events[next_ev].t_ms <= t_ms) cur = events[next_ev++].params;
    level += alpha * (std::clamp(cur.pad_volume, 0.0, 1.0) - level);
    if (level != 0.0) mix[i] += cfg.pad_level * level * std::sin(phase);
    phase += 2.0 * std::numbers::pi * cur.pad_pitch_hz / sr;
    if (phase >= 2.0 * std::numbers::pi) phase = std::fmod(phase, 2.0 * std::numbers::pi);
  }

  return quantize(mix, cfg.sample_rate_hz);
}

std::vector<std::uint8_t> encode_wav(const PcmBuffer& buf) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(buf.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  const auto put_tag = [&](const char* tag) { out.insert(out.end(), tag, tag + 4); };
  const auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  const auto put_u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  const std::uint32_t rate = static_cast<std::uint32_t>(buf.sample_rate_hz);
  put_tag("RIFF");
  put_u32(36 + data_bytes);
  put_tag("WAVE");
  put_tag("fmt ");
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(rate);
  put_u32(rate * 2);
  put_u16(2);
  put_u16(16);
  put_tag("data");
  put_u32(data_bytes);
  for (auto s : buf.samples) put_u16(static_cast<std::uint16_t>(s));
  return out;
}

void write_wav(const PcmBuffer& buf, const std::filesystem::path& path) {
  const auto bytes = encode_wav(buf);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::string events_to_jsonl(std::span<const ParamEvent> events) {
  std::string out;
  for (const auto& e : events) out += json{{"t_ms", e.t_ms}, {"params", to_json(e.params)}}.dump() + "\n";
  return out;
}

std::vector<ParamEvent> events_from_jsonl(const std::string& text) {
  std::vector<ParamEvent> events;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      events.push_back({j.at("t_ms").get<double>(), sound_params_from_json(j.at("params"))});
    } catch (const json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return events;
}

}  // namespace sonoloc
