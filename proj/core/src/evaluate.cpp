#include "lqt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "lqt/error.hpp"

namespace lqt {

namespace {

struct FlatPred {
  std::size_t video = 0;
  ActionSegment seg;
};

// Deterministic score ordering with stable tie-breaking.
bool pred_order(const FlatPred& a, const FlatPred& b) {
  if (a.seg.score != b.seg.score) return a.seg.score > b.seg.score;
  if (a.video != b.video) return a.video < b.video;
  if (a.seg.start != b.seg.start) return a.seg.start < b.seg.start;
  return a.seg.end < b.seg.end;
}

// AP for one class at one threshold. Predictions must already be sorted by
// descending score; gt holds per-video ground-truth segments of this class.
double average_precision(const std::vector<FlatPred>& preds,
                         const std::vector<std::vector<ActionSegment>>& gt, double threshold) {
  std::size_t npos = 0;
  for (const auto& v : gt) npos += v.size();
  if (npos == 0) return 0.0;
  if (preds.empty()) return 0.0;

  std::vector<std::vector<bool>> used(gt.size());
  for (std::size_t v = 0; v < gt.size(); ++v) used[v].assign(gt[v].size(), false);

  std::vector<char> tp(preds.size(), 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    double best = 0.0;
    std::size_t best_j = 0;
    bool found = false;
    const auto& cands = gt[p.video];
    for (std::size_t j = 0; j < cands.size(); ++j) {
      if (used[p.video][j]) continue;
      const double v = segment_iou(p.seg, cands[j]);
      if (v >= threshold && v > best) {
        best = v;
        best_j = j;
        found = true;
      }
    }
    if (found) {
      used[p.video][best_j] = true;
      tp[i] = 1;
    }
  }

  // All-point interpolation: area under the monotone precision envelope.
  std::vector<double> precision(preds.size()), recall(preds.size());
  std::size_t cum_tp = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    cum_tp += tp[i];
    precision[i] = static_cast<double>(cum_tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(cum_tp) / static_cast<double>(npos);
  }
  for (std::size_t i = preds.size() - 1; i > 0; --i) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

}  // namespace

EvalResult evaluate(const std::vector<VideoSegments>& predictions,
                    const std::vector<VideoSegments>& ground_truth,
                    std::vector<double> thresholds) {
  if (thresholds.empty()) throw ConfigError("evaluate: no IoU thresholds");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0)) {
      throw ConfigError("evaluate: thresholds must lie in (0,1)");
    }
    if (i > 0 && thresholds[i] <= thresholds[i - 1]) {
      throw ConfigError("evaluate: thresholds must be sorted ascending");
    }
  }

  // Classes with at least one ground-truth instance define the average.
  std::set<int> class_set;
  for (const auto& v : ground_truth) {
    for (const auto& s : v.segments) class_set.insert(s.class_id);
  }
  if (class_set.empty()) {
    throw ConfigError("evaluate: ground truth contains no instances");
  }

  std::map<std::string, std::size_t> video_index;
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    video_index[ground_truth[i].video_id] = i;
  }

  EvalResult result;
  result.thresholds = thresholds;
  result.classes.assign(class_set.begin(), class_set.end());

  for (const double thr : thresholds) {
    std::vector<double> aps;
    for (const int cls : result.classes) {
      std::vector<FlatPred> preds;
      for (const auto& vp : predictions) {
        auto it = video_index.find(vp.video_id);
        if (it == video_index.end()) continue;
        for (const auto& s : vp.segments) {
          if (s.class_id == cls) preds.push_back(FlatPred{it->second, s});
        }
      }
      std::sort(preds.begin(), preds.end(), pred_order);
      std::vector<std::vector<ActionSegment>> gt(ground_truth.size());
      for (std::size_t v = 0; v < ground_truth.size(); ++v) {
        for (const auto& s : ground_truth[v].segments) {
          if (s.class_id == cls) gt[v].push_back(s);
        }
      }
      aps.push_back(average_precision(preds, gt, thr));
    }
    result.per_class_ap.push_back(aps);
    double mean = 0.0;
    for (double v : aps) mean += v;
    result.map_per_threshold.push_back(mean / static_cast<double>(aps.size()));
  }
  double avg = 0.0;
  for (double v : result.map_per_threshold) avg += v;
  result.avg_map = avg / static_cast<double>(result.map_per_threshold.size());
  return result;
}

void write_eval_report(const EvalResult& result, const std::filesystem::path& json_path,
                       const std::filesystem::path& csv_path) {
  nlohmann::json j;
  j["thresholds"] = result.thresholds;
  j["map_per_threshold"] = result.map_per_threshold;
  j["avg_map"] = result.avg_map;
  j["classes"] = result.classes;
  j["per_class_ap"] = result.per_class_ap;
  std::ofstream os(json_path);
  if (!os) throw IoError("cannot write eval report: " + json_path.string());
  os << j.dump(2) << "\n";

  std::ofstream cs(csv_path);
  if (!cs) throw IoError("cannot write eval csv: " + csv_path.string());
  cs << "threshold,mAP";
  for (const int c : result.classes) cs << ",ap_class_" << c;
  cs << "\n";
  for (std::size_t t = 0; t < result.thresholds.size(); ++t) {
    cs << result.thresholds[t] << "," << result.map_per_threshold[t];
    for (double ap : result.per_class_ap[t]) cs << "," << ap;
    cs << "\n";
  }
  cs << "avg," << result.avg_map;
  for (std::size_t c = 0; c < result.classes.size(); ++c) cs << ",";
  cs << "\n";
}

}  // namespace lqt
