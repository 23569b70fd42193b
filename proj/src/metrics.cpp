#include "tcfoley/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tcfoley::metrics {

OnsetList make_onsets(const std::vector<double>& times, double confidence) {
  OnsetList out;
  out.reserve(times.size());
  for (double t : times) out.push_back({t, confidence});
  return out;
}

double iou(const timeline::BinaryTimeline& a, const timeline::BinaryTimeline& b) {
  if (a.size() != b.size())
    throw data_error("iou: timelines differ in length (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + "); resample first");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a.bits[i] && b.bits[i]) ? 1 : 0;
    uni += (a.bits[i] || b.bits[i]) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double onset_acc(const OnsetList& pred, const OnsetList& gt) { return pred.size() == gt.size() ? 1.0 : 0.0; }

double time_acc(const timeline::EventTrack& pred, const timeline::EventTrack& gt) {
  return pred.size() == gt.size() ? 1.0 : 0.0;
}

double onset_ap(const OnsetList& pred, const OnsetList& gt, double tol_s) {
  if (gt.empty()) return pred.empty() ? 1.0 : 0.0;
  if (pred.empty()) return 0.0;

  std::vector<std::size_t> order(pred.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pred[a].confidence != pred[b].confidence) return pred[a].confidence > pred[b].confidence;
    return pred[a].time_s < pred[b].time_s;
  });

  std::vector<bool> used(gt.size(), false);
  std::size_t tp = 0;
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const Onset& p = pred[order[rank]];
    std::size_t best = gt.size();
    double best_dist = tol_s;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double d = std::abs(gt[g].time_s - p.time_s);
      if (!used[g] && d <= best_dist + 1e-12 && (best == gt.size() || d < best_dist)) {
        best = g;
        best_dist = d;
      }
    }
    if (best == gt.size()) continue;
    used[best] = true;
    ++tp;
    const double precision = static_cast<double>(tp) / static_cast<double>(rank + 1);
    const double recall = static_cast<double>(tp) / static_cast<double>(gt.size());
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

MetricReport evaluate_track(const timeline::EventTrack& pred, const timeline::BinaryTimeline& target,
                            const EvalConfig& cfg) {
  const double span = target.duration_s();
  timeline::EventTrack clipped;
  clipped.source_duration_s = span;
  for (const auto& e : pred.intervals) {
    const double s = std::min(e.start_s, span), t = std::min(e.end_s, span);
    if (t > s) clipped.intervals.push_back({s, t});
  }
  const auto pred_tl = timeline::intervals_to_timeline(clipped, target.frame_rate, target.size());
  const auto gt_track = timeline::timeline_to_intervals(target);
  const auto pred_on = make_onsets(timeline::onsets(clipped));
  const auto gt_on = make_onsets(timeline::onsets(gt_track));

  MetricReport r;
  r.iou = iou(pred_tl, target);
  r.onset_acc = onset_acc(pred_on, gt_on);
  r.time_acc = time_acc(clipped, gt_track);
  r.onset_ap = onset_ap(pred_on, gt_on, cfg.onset_tol_s);
  r.pred_events = clipped.size();
  r.gt_events = gt_track.size();
  return r;
}

MetricReport evaluate_clip(const dsp::Waveform& pred_audio, const timeline::BinaryTimeline& target,
                           const EvalConfig& cfg) {
  return evaluate_track(timeline::extract_track(pred_audio, cfg.activity), target, cfg);
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  MetricReport m;
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.iou += r.iou;
    m.onset_acc += r.onset_acc;
    m.time_acc += r.time_acc;
    m.onset_ap += r.onset_ap;
    m.pred_events += r.pred_events;
    m.gt_events += r.gt_events;
  }
  const double n = static_cast<double>(reports.size());
  m.iou /= n;
  m.onset_acc /= n;
  m.time_acc /= n;
  m.onset_ap /= n;
  return m;
}

nlohmann::json to_json(const MetricReport& r) {
  return {{"iou", r.iou},           {"onset_acc", r.onset_acc},     {"time_acc", r.time_acc},
          {"onset_ap", r.onset_ap}, {"pred_events", r.pred_events}, {"gt_events", r.gt_events}};
}

std::string to_csv(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "clip,iou,onset_acc,time_acc,onset_ap,pred_events,gt_events\n";
  std::vector<MetricReport> all;
  auto line = [&out](const std::string& name, const MetricReport& r) {
    out << name << ',' << r.iou << ',' << r.onset_acc << ',' << r.time_acc << ',' << r.onset_ap << ','
        << r.pred_events << ',' << r.gt_events << '\n';
  };
  for (const auto& [name, r] : rows) {
    line(name, r);
    all.push_back(r);
  }
  line("mean", mean_report(all));
  return out.str();
}

}  // namespace tcfoley::metrics
