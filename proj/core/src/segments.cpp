#include "lqt/segments.hpp"

#include <algorithm>
#include <cmath>

#include "lqt/error.hpp"

namespace lqt {

double segment_iou(const ActionSegment& a, const ActionSegment& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = (a.end - a.start) + (b.end - b.start) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

bool score_order(const ActionSegment& a, const ActionSegment& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  if (a.end != b.end) return a.end < b.end;
  return a.class_id < b.class_id;
}

}  // namespace

std::vector<ActionSegment> nms(std::vector<ActionSegment> segments, double iou_threshold,
                               std::size_t max_keep) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw ConfigError("nms: iou_threshold must be in (0, 1]");
  }
  std::sort(segments.begin(), segments.end(), score_order);
  std::vector<ActionSegment> kept;
  std::vector<bool> suppressed(segments.size(), false);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (suppressed[i]) continue;
    kept.push_back(segments[i]);
    for (std::size_t j = i + 1; j < segments.size(); ++j) {
      if (suppressed[j] || segments[j].class_id != segments[i].class_id) continue;
      if (segment_iou(segments[i], segments[j]) > iou_threshold) suppressed[j] = true;
    }
  }
  if (kept.size() > max_keep) kept.resize(max_keep);
  return kept;
}

}  // namespace lqt
