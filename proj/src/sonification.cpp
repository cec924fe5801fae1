#include "sonoloc/sonification.hpp"

#include "sonoloc/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace sonoloc {

using nlohmann::json;

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Beep1: return "beep1";
    case ModelKind::Beep2: return "beep2";
    case ModelKind::Rhythm: return "rhythm";
    case ModelKind::Synth: return "synth";
    case ModelKind::Sine: return "sine";
  }
  return "unknown";
}

std::optional<ModelKind> parse_model_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "beep1") return ModelKind::Beep1;
  if (lower == "beep2" || lower == "beep") return ModelKind::Beep2;
  if (lower == "rhythm") return ModelKind::Rhythm;
  if (lower == "synth") return ModelKind::Synth;
  if (lower == "sine") return ModelKind::Sine;
  return std::nullopt;
}

void MappingConfig::validate() const {
  if (!(range_mm > 0)) throw ValidationError("range_mm must be positive");
  if (!(beat_rate_min_hz > 0 && beat_rate_max_hz > beat_rate_min_hz))
    throw ValidationError("need 0 < beat_rate_min_hz < beat_rate_max_hz");
  if (!(rhythm_rate_hz > 0 && tick_rate_hz > 0)) throw ValidationError("rates must be positive");
  if (!(seed_zone_mm > 0)) throw ValidationError("seed_zone_mm must be positive");
  for (double p : {beep1_pitch_hz, beep2_pitch_hz, rhythm_pitch_hz, tick_pitch_hz, pad_pitch_hz})
    if (!(p > 0)) throw ValidationError("pitches must be positive");
}

double proximity(double d_mm, const MappingConfig& cfg) {
  return 1.0 - std::clamp(d_mm / cfg.range_mm, 0.0, 1.0);
}

double beat_rate(double d_mm, const MappingConfig& cfg) {
  const double p = proximity(d_mm, cfg);
  return cfg.beat_rate_min_hz + (cfg.beat_rate_max_hz - cfg.beat_rate_min_hz) * p * p;
}

SoundParams map_params(ModelKind model, const DistanceFeatures& f, const MappingConfig& cfg) {
  SoundParams out;
  out.pad_pitch_hz = cfg.pad_pitch_hz;
  const bool in_range = f.d_seed_mm <= cfg.range_mm;

  switch (model) {
    case ModelKind::Beep1:
    case ModelKind::Beep2:
      out.beat_pitch_hz = model == ModelKind::Beep1 ? cfg.beep1_pitch_hz : cfg.beep2_pitch_hz;
      out.beat_rate_hz = beat_rate(f.d_seed_mm, cfg);
      out.beat_volume = in_range ? 1.0 : 0.0;
      break;

    case ModelKind::Rhythm: {
      out.beat_pitch_hz = cfg.rhythm_pitch_hz;
      out.beat_rate_hz = cfg.rhythm_rate_hz;
      if (f.inside) {
        const double to_margin = std::abs(f.d_margin_mm);
        const double denom = to_margin + f.d_seed_mm;
        out.timbre_mix = denom > 0.0 ? to_margin / denom : 1.0;
        if (f.d_seed_mm == 0.0) out.timbre_mix = 1.0;
        out.beat_volume = 1.0;
      } else {
        out.timbre_mix = 0.0;
        out.beat_volume = proximity(f.d_margin_mm, cfg);
      }
      break;
    }

    case ModelKind::Synth:
      out.beat_pitch_hz = cfg.tick_pitch_hz;
      out.pad_volume = f.inside ? 1.0 : 0.0;
      if (f.d_seed_mm <= cfg.seed_zone_mm) {
        out.beat_volume = 1.0 - f.d_seed_mm / cfg.seed_zone_mm;
        out.beat_rate_hz = cfg.tick_rate_hz;
      }
      break;

    case ModelKind::Sine:
      out.beat_pitch_hz = cfg.beep2_pitch_hz;
      out.beat_rate_hz = beat_rate(f.d_seed_mm, cfg);
      out.beat_volume = in_range ? 1.0 : 0.0;
      out.pad_volume = f.inside ? 1.0 : 0.0;
      break;
  }
  return out;
}

std::vector<ParamEvent> smooth(std::span<const ParamEvent> stream, double tau_ms) {
  if (!(tau_ms > 0)) throw ValidationError("smoothing time constant must be positive");
  std::vector<ParamEvent> out;
  out.reserve(stream.size());
  if (stream.empty()) return out;

  SoundParams state = stream.front().params;
  out.push_back(stream.front());
  for (std::size_t i = 1; i < stream.size(); ++i) {
    const double dt = stream[i].t_ms - stream[i - 1].t_ms;
    if (!(dt > 0)) throw ValidationError("event timestamps must be strictly increasing");
    const double alpha = 1.0 - std::exp(-dt / tau_ms);
    const SoundParams& held = stream[i - 1].params;
    state.beat_volume += alpha * (held.beat_volume - state.beat_volume);
    state.timbre_mix += alpha * (held.timbre_mix - state.timbre_mix);
    state.pad_volume += alpha * (held.pad_volume - state.pad_volume);

    ParamEvent ev = stream[i];
    ev.params.beat_volume = state.beat_volume;
    ev.params.timbre_mix = state.timbre_mix;
    ev.params.pad_volume = state.pad_volume;
    out.push_back(ev);
  }
  return out;
}

json to_json(const SoundParams& p) {
  return {{"beat_volume", p.beat_volume}, {"beat_rate_hz", p.beat_rate_hz},
          {"beat_pitch_hz", p.beat_pitch_hz}, {"timbre_mix", p.timbre_mix},
          {"pad_volume", p.pad_volume},   {"pad_pitch_hz", p.pad_pitch_hz}};
}

SoundParams sound_params_from_json(const json& j) {
  SoundParams p;
  p.beat_volume = j.at("beat_volume").get<double>();
  p.beat_rate_hz = j.at("beat_rate_hz").get<double>();
  p.beat_pitch_hz = j.at("beat_pitch_hz").get<double>();
  p.timbre_mix = j.at("timbre_mix").get<double>();
  p.pad_volume = j.at("pad_volume").get<double>();
  p.pad_pitch_hz = j.at("pad_pitch_hz").get<double>();
  return p;
}

json to_json(const MappingConfig& c) {
  return {{"range_mm", c.range_mm},
          {"beat_rate_min_hz", c.beat_rate_min_hz},
          {"beat_rate_max_hz", c.beat_rate_max_hz},
          {"rhythm_rate_hz", c.rhythm_rate_hz},
          {"tick_rate_hz", c.tick_rate_hz},
          {"seed_zone_mm", c.seed_zone_mm},
          {"pitches",
           {{"beep1", c.beep1_pitch_hz},
            {"beep2", c.beep2_pitch_hz},
            {"rhythm", c.rhythm_pitch_hz},
            {"tick", c.tick_pitch_hz},
            {"pad", c.pad_pitch_hz}}}};
}

MappingConfig mapping_config_from_json(const json& j) {
  MappingConfig c;
  try {
    c.range_mm = j.value("range_mm", c.range_mm);
    c.beat_rate_min_hz = j.value("beat_rate_min_hz", c.beat_rate_min_hz);
    c.beat_rate_max_hz = j.value("beat_rate_max_hz", c.beat_rate_max_hz);
    c.rhythm_rate_hz = j.value("rhythm_rate_hz", c.rhythm_rate_hz);
    c.tick_rate_hz = j.value("tick_rate_hz", c.tick_rate_hz);
    c.seed_zone_mm = j.value("seed_zone_mm", c.seed_zone_mm);
    if (j.contains("pitches")) {
      const json& p = j.at("pitches");
      c.beep1_pitch_hz = p.value("beep1", c.beep1_pitch_hz);
      c.beep2_pitch_hz = p.value("beep2", c.beep2_pitch_hz);
      c.rhythm_pitch_hz = p.value("rhythm", c.rhythm_pitch_hz);
      c.tick_pitch_hz = p.value("tick", c.tick_pitch_hz);
      c.pad_pitch_hz = p.value("pad", c.pad_pitch_hz);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed mapping config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace sonoloc
