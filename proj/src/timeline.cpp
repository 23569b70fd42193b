#include "tcfoley/timeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace tcfoley::timeline {

double EventTrack::total_duration() const {
  double acc = 0.0;
  for (const auto& e : intervals) acc += e.duration();
  return acc;
}

std::size_t BinaryTimeline::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void ActivityConfig::validate() const {
  if (!(hop_s > 0.0 && frame_len_s >= hop_s)) throw usage_error("activity: need frame_len_s >= hop_s > 0");
  if (!(merge_gap_s >= 0.0)) throw usage_error("activity: merge_gap_s must be >= 0");
}

std::size_t ActivityConfig::merge_gap_frames() const {
  return static_cast<std::size_t>(std::floor(merge_gap_s / hop_s + 1e-9));
}

std::vector<bool> detect_activity(const dsp::Waveform& w, const ActivityConfig& cfg) {
  cfg.validate();
  if (w.samples.empty()) throw data_error("detect_activity: empty waveform");
  const double sr = w.sample_rate;
  const std::size_t n = w.samples.size();
  const auto hop = static_cast<std::size_t>(std::llround(cfg.hop_s * sr));
  const auto len = static_cast<std::size_t>(std::llround(cfg.frame_len_s * sr));
  if (hop == 0 || len == 0) throw usage_error("activity frame shorter than one sample");
  const std::size_t n_frames = (n + hop - 1) / hop;
  std::vector<bool> active(n_frames, false);
  for (std::size_t k = 0; k < n_frames; ++k) {
    const std::size_t start = k * hop;
    const std::size_t stop = std::min(n, start + len);
    // The window is always len samples wide; samples past the end count as silence.
    double acc = 0.0;
    for (std::size_t i = start; i < stop; ++i) acc += w.samples[i] * w.samples[i];
    const double rms = std::sqrt(acc / static_cast<double>(len));
    active[k] = rms > 0.0 && 20.0 * std::log10(rms) > cfg.threshold_db;
  }
  return active;
}

EventTrack merge_events(const std::vector<bool>& frames, const ActivityConfig& cfg, double duration_s) {
  cfg.validate();
  EventTrack track;
  track.source_duration_s = duration_s;
  const std::size_t max_gap = cfg.merge_gap_frames();

  std::size_t run_start = 0, run_end = 0;  // [run_start, run_end) of the open event
  bool open = false;
  auto close = [&] {
    double s = std::clamp(cfg.cell_start(run_start), 0.0, duration_s);
    double e = std::clamp(cfg.cell_start(run_end), 0.0, duration_s);
    if (e > s) track.intervals.push_back({s, e});
  };
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (!frames[k]) continue;
    if (open && k - run_end <= max_gap) {
      run_end = k + 1;
    } else {
      if (open) close();
      run_start = k;
      run_end = k + 1;
      open = true;
    }
  }
  if (open) close();
  return track;
}

EventTrack extract_track(const dsp::Waveform& w, const ActivityConfig& cfg) {
  return merge_events(detect_activity(w, cfg), cfg, w.duration_s());
}

BinaryTimeline intervals_to_timeline(const EventTrack& track, double frame_rate, std::size_t n_frames) {
  if (n_frames < 1) throw usage_error("timeline needs at least one frame");
  if (!(frame_rate > 0.0)) throw usage_error("frame_rate must be positive");
  const double span = static_cast<double>(n_frames) / frame_rate;
  BinaryTimeline t;
  t.frame_rate = frame_rate;
  t.bits.assign(n_frames, 0);
  for (const auto& e : track.intervals) {
    if (e.start_s < 0.0 || e.end_s > span + 1e-9)
      throw data_error("interval [" + std::to_string(e.start_s) + ", " + std::to_string(e.end_s) +
                       ") exceeds timeline span " + std::to_string(span));
    for (std::size_t k = 0; k < n_frames; ++k) {
      const double center = (static_cast<double>(k) + 0.5) / frame_rate;
      if (center >= e.start_s && center < e.end_s) t.bits[k] = 1;
    }
  }
  return t;
}

EventTrack timeline_to_intervals(const BinaryTimeline& t) {
  EventTrack track;
  track.source_duration_s = t.duration_s();
  std::size_t k = 0;
  while (k < t.size()) {
    if (!t.bits[k]) {
      ++k;
      continue;
    }
    std::size_t j = k;
    while (j < t.size() && t.bits[j]) ++j;
    track.intervals.push_back({k / t.frame_rate, j / t.frame_rate});
    k = j;
  }
  return track;
}

BinaryTimeline resample_timeline(const BinaryTimeline& t, std::size_t target_frames) {
  if (target_frames < 1) throw usage_error("resample target needs at least one frame");
  if (t.size() == 0) throw data_error("cannot resample an empty timeline");
  const std::size_t n = t.size();
  BinaryTimeline out;
  out.frame_rate = t.frame_rate * static_cast<double>(target_frames) / static_cast<double>(n);
  out.bits.assign(target_frames, 0);
  // Target frame j spans [j*n, (j+1)*n) in units of 1/(n*target) of the clip,
  // source frame i spans [i*target, (i+1)*target). Integer arithmetic avoids
  // rounding at shared boundaries.
  for (std::size_t j = 0; j < target_frames; ++j) {
    const std::size_t lo = j * n, hi = (j + 1) * n;
    const std::size_t first = lo / target_frames;
    for (std::size_t i = first; i < n && i * target_frames < hi; ++i) {
      if ((i + 1) * target_frames > lo && t.bits[i]) {
        out.bits[j] = 1;
        break;
      }
    }
  }
  return out;
}

std::vector<double> onsets(const EventTrack& track) {
  std::vector<double> out;
  out.reserve(track.size());
  for (const auto& e : track.intervals) out.push_back(e.start_s);
  return out;
}

nlohmann::json to_json(const EventTrack& track) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : track.intervals) events.push_back({{"start_s", e.start_s}, {"end_s", e.end_s}});
  return {{"duration_s", track.source_duration_s}, {"events", events}};
}

nlohmann::json to_json(const BinaryTimeline& t) {
  std::string bits(t.size(), '0');
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.bits[i]) bits[i] = '1';
  return {{"frame_rate", t.frame_rate}, {"bits", bits}};
}

EventTrack track_from_json(const nlohmann::json& j) {
  try {
    EventTrack track;
    track.source_duration_s = j.at("duration_s").get<double>();
    for (const auto& e : j.at("events")) {
      EventInterval iv{e.at("start_s").get<double>(), e.at("end_s").get<double>()};
      if (!(iv.start_s >= 0.0 && iv.start_s < iv.end_s)) throw data_error("event with start >= end or negative start");
      track.intervals.push_back(iv);
    }
    return track;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("event track json: ") + e.what());
  }
}

BinaryTimeline timeline_from_json(const nlohmann::json& j) {
  try {
    BinaryTimeline t;
    t.frame_rate = j.at("frame_rate").get<double>();
    const auto bits = j.at("bits").get<std::string>();
    if (bits.empty()) throw data_error("timeline json: empty bitstring");
    if (!(t.frame_rate > 0.0)) throw data_error("timeline json: frame_rate must be positive");
    t.bits.reserve(bits.size());
    for (char c : bits) {
      if (c != '0' && c != '1') throw data_error(std::string("timeline json: invalid bit '") + c + "'");
      t.bits.push_back(c == '1' ? 1 : 0);
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("timeline json: ") + e.what());
  }
}

}  // namespace tcfoley::timeline
