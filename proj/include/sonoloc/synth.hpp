#pragma once

// Offline rendering of a SoundParams stream to 16-bit mono PCM.

#include "sonoloc/sonification.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sonoloc {

struct Mode {
  double freq_ratio;
  double gain;
  double decay_s;
};

struct ModalBarPatch {
  std::vector<Mode> modes;

  static ModalBarPatch marimba();
  static ModalBarPatch xylophone();
  static ModalBarPatch tick();  // xylophone with shortened decays
  // Per-mode linear interpolation; patches must have the same mode count.
  static ModalBarPatch blend(const ModalBarPatch& a, const ModalBarPatch& b, double mix);

  void validate() const;
};

// What plays on each beat onset.
enum class BeatVoice {
  SineBeep,  // fixed-length sine tone
  ModalBar,  // marimba/xylophone blend by timbre_mix
  Tick,      // tick patch
};

BeatVoice beat_voice_for(ModelKind model);

struct RenderConfig {
  int sample_rate_hz = 48000;
  int channels = 1;
  int bit_depth = 16;
  BeatVoice voice = BeatVoice::ModalBar;
  double beep_length_ms = 60.0;
  double attack_ms = 2.0;
  double smoothing_ms = 30.0;
  double beat_level = 0.5;  // full-scale fraction for a unit-volume strike
  double pad_level = 0.3;

  void validate() const;
};

struct PcmBuffer {
  std::vector<std::int16_t> samples;
  int sample_rate_hz = 48000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate_hz);
  }
  bool operator==(const PcmBuffer&) const = default;
};

std::int16_t to_pcm16(double x);
double rms(const PcmBuffer& buf);

// One strike as floating-point samples (full scale = 1) for a given patch,
// including the raised-cosine attack. Length covers the longest decay.
std::vector<double> strike_samples(const ModalBarPatch& patch, double pitch_hz, double gain,
                                   int sample_rate_hz, double attack_ms = 2.0);
std::vector<double> beep_samples(double pitch_hz, double gain, int sample_rate_hz,
                                 double length_ms = 60.0, double ramp_ms = 2.0);

// Modal strike with timbre_mix interpolating marimba -> xylophone.
PcmBuffer strike(double pitch_hz, double timbre_mix, double gain, const RenderConfig& cfg);
PcmBuffer strike(const ModalBarPatch& patch, double pitch_hz, double gain, const RenderConfig& cfg);

// Beat onset times (seconds) for an event stream: an onset fires as soon as
// the beat becomes audible, then every 1/rate using the rate in force at the
// previous onset.
std::vector<double> schedule_onsets(std::span<const ParamEvent> events, double duration_s,
                                    const RenderConfig& cfg);

// Event times are relative to sample 0. Throws ValidationError on unsorted
// events or non-positive duration.
PcmBuffer render(std::span<const ParamEvent> events, double duration_s, const RenderConfig& cfg);

std::vector<std::uint8_t> encode_wav(const PcmBuffer& buf);
void write_wav(const PcmBuffer& buf, const std::filesystem::path& path);  // IoError

// Parameter event log, one {"t_ms":..,"params":{..}} object per line.
std::string events_to_jsonl(std::span<const ParamEvent> events);
std::vector<ParamEvent> events_from_jsonl(const std::string& text);

}  // namespace sonoloc
