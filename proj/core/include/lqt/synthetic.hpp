#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lqt/array.hpp"
#include "lqt/segments.hpp"

// Synthetic stand-in for pre-extracted video features: Gaussian background
// with planted, non-overlapping action segments. Each segment adds a
// class-specific unit direction scaled by a trapezoid envelope (linear
// attack/decay over 10% of the segment length).

namespace lqt {

struct SyntheticSpec {
  int num_train_videos = 200;
  int num_test_videos = 50;
  int sequence_length = 256;  // tokens per video
  int feature_dim = 32;
  int num_classes = 5;
  int min_segments = 1;
  int max_segments = 3;
  int min_duration = 8;   // tokens
  int max_duration = 48;  // tokens
  double noise_sigma = 0.25;
  double base_dt = 4.0 / 30.0;  // seconds represented by one token
  std::uint64_t seed = 7;
};

// One video: features plus its ground-truth segments (seconds, score fixed
// at 1, sorted by start).
struct VideoEntry {
  std::string id;
  std::string split;  // "train" or "test"
  Array<float> features;
  std::vector<ActionSegment> segments;
};

struct Dataset {
  std::size_t sequence_length = 0;
  std::size_t feature_dim = 0;
  int num_classes = 0;
  double base_dt = 0.0;
  std::vector<VideoEntry> videos;

  std::vector<const VideoEntry*> split(const std::string& name) const {
    std::vector<const VideoEntry*> out;
    for (const auto& v : videos) {
      if (v.split == name) out.push_back(&v);
    }
    return out;
  }
};

// Deterministic per-class unit-norm directions derived from the spec seed.
std::vector<std::vector<double>> class_signatures(const SyntheticSpec& spec);

// Deterministic given spec.seed regardless of worker count. Throws
// ConfigError when the drawn segments cannot be packed without overlap.
Dataset generate(const SyntheticSpec& spec, int workers = 1);

// Directory layout: manifest.json + features/<video_id>.lqt.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace lqt
