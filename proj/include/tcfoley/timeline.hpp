#pragma once

#include "tcfoley/dsp.hpp"

#include <nlohmann/json_fwd.hpp>

#include <vector>

namespace tcfoley::timeline {

struct EventInterval {
  double start_s = 0.0;
  double end_s = 0.0;

  double duration() const { return end_s - start_s; }
  bool operator==(const EventInterval&) const = default;
};

struct EventTrack {
  std::vector<EventInterval> intervals;
  double source_duration_s = 0.0;

  std::size_t size() const { return intervals.size(); }
  double total_duration() const;
};

struct BinaryTimeline {
  std::vector<std::uint8_t> bits;
  double frame_rate = 62.5;

  std::size_t size() const { return bits.size(); }
  double duration_s() const { return static_cast<double>(bits.size()) / frame_rate; }
  std::size_t count() const;
  bool operator==(const BinaryTimeline&) const = default;
};

/// Frame k analyses samples in [k*hop_s, k*hop_s + frame_len_s). When it is
/// turned into time, frame k owns the hop-wide cell centred in its window.
struct ActivityConfig {
  double frame_len_s = 0.02;
  double hop_s = 0.01;
  double threshold_db = -35.0;
  double merge_gap_s = 0.02;

  void validate() const;
  /// Start of the time cell owned by frame k.
  double cell_start(std::size_t k) const { return static_cast<double>(k) * hop_s + 0.5 * (frame_len_s - hop_s); }
  /// Largest count of silent frames that still fuses two runs.
  std::size_t merge_gap_frames() const;
};

std::vector<bool> detect_activity(const dsp::Waveform& w, const ActivityConfig& cfg);
EventTrack merge_events(const std::vector<bool>& frames, const ActivityConfig& cfg, double duration_s);
EventTrack extract_track(const dsp::Waveform& w, const ActivityConfig& cfg);

BinaryTimeline intervals_to_timeline(const EventTrack& track, double frame_rate, std::size_t n_frames);
/// Run-length decode: each maximal run of ones becomes [first/fr, (last+1)/fr).
EventTrack timeline_to_intervals(const BinaryTimeline& t);
/// OR-pooling over the source frames whose span overlaps each target frame.
BinaryTimeline resample_timeline(const BinaryTimeline& t, std::size_t target_frames);

/// Event start times in seconds.
std::vector<double> onsets(const EventTrack& track);

nlohmann::json to_json(const EventTrack& track);
nlohmann::json to_json(const BinaryTimeline& t);
EventTrack track_from_json(const nlohmann::json& j);
BinaryTimeline timeline_from_json(const nlohmann::json& j);

}  // namespace tcfoley::timeline
