#pragma once

// Distance features -> sound parameters for the Beep, Rhythm, Synth and Sine
// models.

#include "sonoloc/geometry.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sonoloc {

enum class ModelKind { Beep1, Beep2, Rhythm, Synth, Sine };

std::string_view to_string(ModelKind kind);
// Accepts canonical names (case-insensitive); "beep" means Beep2.
std::optional<ModelKind> parse_model_kind(std::string_view name);

struct SoundParams {
  double beat_volume = 0.0;     // [0,1]
  double beat_rate_hz = 0.0;    // >= 0
  double beat_pitch_hz = 440.0;
  double timbre_mix = 0.0;      // 0 marimba, 1 xylophone
  double pad_volume = 0.0;      // [0,1]
  double pad_pitch_hz = 261.63;

  bool operator==(const SoundParams&) const = default;
};

struct MappingConfig {
  double range_mm = 80.0;
  double beat_rate_min_hz = 1.5;
  double beat_rate_max_hz = 10.0;
  double rhythm_rate_hz = 4.0;
  double tick_rate_hz = 6.0;
  double seed_zone_mm = 10.0;
  double beep1_pitch_hz = 440.0;
  double beep2_pitch_hz = 200.0;
  double rhythm_pitch_hz = 330.0;
  double tick_pitch_hz = 660.0;
  double pad_pitch_hz = 261.63;  // C4

  void validate() const;  // ValidationError
  bool operator==(const MappingConfig&) const = default;
};

// 1 at the target, falling linearly to 0 at range_mm.
double proximity(double d_mm, const MappingConfig& cfg);
// Quadratic ease-in from rate_min (at range) to rate_max (at the target).
double beat_rate(double d_mm, const MappingConfig& cfg);

SoundParams map_params(ModelKind model, const DistanceFeatures& f, const MappingConfig& cfg);

struct ParamEvent {
  double t_ms = 0.0;
  SoundParams params;

  bool operator==(const ParamEvent&) const = default;
};

// Exponential smoothing of the volumes and timbre_mix, treating the input as
// held between events. Rates and pitches pass through. Throws
// ValidationError on non-increasing timestamps.
std::vector<ParamEvent> smooth(std::span<const ParamEvent> stream, double tau_ms = 30.0);

nlohmann::json to_json(const SoundParams& p);
SoundParams sound_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MappingConfig& cfg);
MappingConfig mapping_config_from_json(const nlohmann::json& j);  // missing keys keep defaults

}  // namespace sonoloc
