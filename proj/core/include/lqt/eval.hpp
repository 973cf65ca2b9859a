#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lqt/segments.hpp"

// Detection evaluation: greedy matching of score-sorted predictions to
// unmatched ground truth at each IoU threshold, all-point interpolated AP per
// class, mAP averaged over classes with at least one ground-truth instance.

namespace lqt {

struct VideoSegments {
  std::string video_id;
  std::vector<ActionSegment> segments;
};

struct EvalResult {
  std::vector<double> thresholds;
  std::vector<double> map_per_threshold;
  double avg_map = 0.0;
  std::vector<int> classes;                      // class ids with >= 1 GT instance
  std::vector<std::vector<double>> per_class_ap; // [threshold][class index]
};

EvalResult evaluate(const std::vector<VideoSegments>& predictions,
                    const std::vector<VideoSegments>& ground_truth,
                    std::vector<double> thresholds);

// JSON report ({thresholds, per_class_ap, map_per_threshold, avg_map}) plus a
// CSV mirror.
void write_eval_report(const EvalResult& result, const std::filesystem::path& json_path,
                       const std::filesystem::path& csv_path);

}  // namespace lqt
