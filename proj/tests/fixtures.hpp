#pragma once

// Loads the hand-computed metric fixture table and evaluates every row with
// the metrics module. Shared by the unit tests and the acceptance binary.

#include "tcfoley/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace tcfoley::testing {

struct FixtureResult {
  std::string name;
  double expected = 0.0;
  double got = 0.0;
  bool matches() const { return std::abs(expected - got) <= 1e-12; }
};

inline timeline::BinaryTimeline bits_of(const std::string& s, double frame_rate = 10.0) {
  timeline::BinaryTimeline t;
  t.frame_rate = frame_rate;
  for (char c : s) t.bits.push_back(c == '1');
  return t;
}

inline timeline::EventTrack track_of(const nlohmann::json& pairs, double duration = 10.0) {
  timeline::EventTrack t;
  t.source_duration_s = duration;
  for (const auto& p : pairs) t.intervals.push_back({p[0].get<double>(), p[1].get<double>()});
  return t;
}

inline dsp::Waveform burst_audio(const nlohmann::json& bursts, double duration, double dbfs) {
  dsp::Waveform w;
  w.samples.assign(static_cast<std::size_t>(std::lround(duration * w.sample_rate)), 0.0);
  const double amp = std::pow(10.0, dbfs / 20.0) * std::sqrt(2.0);
  for (const auto& b : bursts) {
    const long lo = std::lround(b[0].get<double>() * w.sample_rate), hi = std::lround(b[1].get<double>() * w.sample_rate);
    for (long i = lo; i < hi; ++i)
      w.samples[static_cast<std::size_t>(i)] = amp * std::sin(2.0 * 3.14159265358979 * 700.0 * i / w.sample_rate);
  }
  return w;
}

inline std::vector<FixtureResult> evaluate_metric_fixtures(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixture table " + path);
  const auto j = nlohmann::json::parse(in);
  std::vector<FixtureResult> out;

  for (const auto& c : j.at("iou"))
    out.push_back({"iou/" + c.at("name").get<std::string>(), c.at("expected").get<double>(),
                   metrics::iou(bits_of(c.at("a").get<std::string>()), bits_of(c.at("b").get<std::string>()))});

  for (const auto& c : j.at("onset_acc"))
    out.push_back({"onset_acc/" + c.at("name").get<std::string>(), c.at("expected").get<double>(),
                   metrics::onset_acc(metrics::make_onsets(c.at("pred").get<std::vector<double>>()),
                                      metrics::make_onsets(c.at("gt").get<std::vector<double>>()))});
  {
    double sum = 0.0;
    const auto& pairs = j.at("onset_acc_corpus").at("pairs");
    for (const auto& p : pairs)
      sum += metrics::onset_acc(metrics::make_onsets(std::vector<double>(p[0].get<std::size_t>(), 0.0)),
                                metrics::make_onsets(std::vector<double>(p[1].get<std::size_t>(), 0.0)));
    out.push_back({"onset_acc/corpus mean", j.at("onset_acc_corpus").at("expected").get<double>(), sum / pairs.size()});
  }

  for (const auto& c : j.at("time_acc"))
    out.push_back({"time_acc/" + c.at("name").get<std::string>(), c.at("expected").get<double>(),
                   metrics::time_acc(track_of(c.at("pred")), track_of(c.at("gt")))});
  {
    double sum = 0.0;
    const auto& pairs = j.at("time_acc_corpus").at("pairs");
    for (const auto& p : pairs) {
      timeline::EventTrack a, b;
      a.intervals.assign(p[0].get<std::size_t>(), {0.0, 1.0});
      b.intervals.assign(p[1].get<std::size_t>(), {0.0, 1.0});
      sum += metrics::time_acc(a, b);
    }
    out.push_back({"time_acc/corpus mean", j.at("time_acc_corpus").at("expected").get<double>(), sum / pairs.size()});
  }

  for (const auto& c : j.at("onset_ap")) {
    metrics::OnsetList pred;
    for (const auto& p : c.at("pred")) pred.push_back({p[0].get<double>(), p[1].get<double>()});
    out.push_back({"onset_ap/" + c.at("name").get<std::string>(), c.at("expected").get<double>(),
                   metrics::onset_ap(pred, metrics::make_onsets(c.at("gt").get<std::vector<double>>()), 0.1)});
  }

  const auto& clips = j.at("clips");
  const auto target = timeline::timeline_from_json(clips.at("target"));
  std::vector<metrics::MetricReport> reports;
  for (const auto& row : clips.at("rows")) {
    const auto audio = burst_audio(row.at("bursts"), clips.at("duration_s").get<double>(), clips.at("level_dbfs").get<double>());
    const auto r = metrics::evaluate_clip(audio, target, {});
    reports.push_back(r);
    const std::string n = "clip/" + row.at("name").get<std::string>() + "/";
    out.push_back({n + "iou", row.at("iou").get<double>(), r.iou});
    out.push_back({n + "onset_acc", row.at("onset_acc").get<double>(), r.onset_acc});
    out.push_back({n + "time_acc", row.at("time_acc").get<double>(), r.time_acc});
    out.push_back({n + "onset_ap", row.at("onset_ap").get<double>(), r.onset_ap});
  }
  const auto mean = metrics::mean_report(reports);
  const auto& m = clips.at("mean");
  out.push_back({"clip/mean/iou", m.at("iou").get<double>(), mean.iou});
  out.push_back({"clip/mean/onset_acc", m.at("onset_acc").get<double>(), mean.onset_acc});
  out.push_back({"clip/mean/time_acc", m.at("time_acc").get<double>(), mean.time_acc});
  out.push_back({"clip/mean/onset_ap", m.at("onset_ap").get<double>(), mean.onset_ap});
  return out;
}

}  // namespace tcfoley::testing
