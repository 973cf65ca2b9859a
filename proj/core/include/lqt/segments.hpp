#pragma once

#include <cstddef>
#include <vector>

namespace lqt {

// Detected or annotated action instance. Times are seconds; invariants
// end > start and score in [0,1] hold for every segment the library emits.
struct ActionSegment {
  double start = 0.0;
  double end = 0.0;
  int class_id = 0;
  double score = 1.0;
};

// Temporal intersection over union of two intervals (class-agnostic).
double segment_iou(const ActionSegment& a, const ActionSegment& b);

// Greedy hard NMS per class over descending scores, suppressing IoU >
// threshold, then a global cap of max_keep. Output is sorted by descending
// score with deterministic tie-breaking.
std::vector<ActionSegment> nms(std::vector<ActionSegment> segments, double iou_threshold,
                               std::size_t max_keep);

}  // namespace lqt
