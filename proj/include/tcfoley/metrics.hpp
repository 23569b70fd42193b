#pragma once

#include "tcfoley/timeline.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace tcfoley::metrics {

struct Onset {
  double time_s = 0.0;
  double confidence = 1.0;
};
using OnsetList = std::vector<Onset>;

OnsetList make_onsets(const std::vector<double>& times, double confidence = 1.0);

/// |a AND b| / |a OR b|; two all-zero timelines agree perfectly (1.0).
double iou(const timeline::BinaryTimeline& a, const timeline::BinaryTimeline& b);

/// 1 when the onset counts agree, else 0.
double onset_acc(const OnsetList& pred, const OnsetList& gt);
/// 1 when the interval counts agree, else 0.
double time_acc(const timeline::EventTrack& pred, const timeline::EventTrack& gt);

/// Greedy one-to-one matching in descending confidence (ties broken by time),
/// step-interpolated area under the precision/recall trace.
double onset_ap(const OnsetList& pred, const OnsetList& gt, double tol_s = 0.1);

struct MetricReport {
  double iou = 0.0;
  double onset_acc = 0.0;
  double time_acc = 0.0;
  double onset_ap = 0.0;
  std::size_t pred_events = 0;
  std::size_t gt_events = 0;
};

struct EvalConfig {
  timeline::ActivityConfig activity;
  double onset_tol_s = 0.1;
};

/// Extracts the event track from generated audio and scores it against the
/// requested timeline. The timeline's own frame grid is used for IoU.
MetricReport evaluate_clip(const dsp::Waveform& pred_audio, const timeline::BinaryTimeline& target,
                           const EvalConfig& cfg);
/// Same scoring when the predicted track is already known.
MetricReport evaluate_track(const timeline::EventTrack& pred, const timeline::BinaryTimeline& target,
                            const EvalConfig& cfg);

/// Field-wise mean over clips.
MetricReport mean_report(const std::vector<MetricReport>& reports);

nlohmann::json to_json(const MetricReport& r);

/// CSV with header `clip,iou,onset_acc,time_acc,onset_ap,pred_events,gt_events`,
/// one row per clip then a `mean` row.
std::string to_csv(const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace tcfoley::metrics
