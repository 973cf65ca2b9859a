#include "lqt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "lqt/error.hpp"
#include "lqt/rng.hpp"
#include "lqt/serial.hpp"

namespace lqt {

namespace {

using nlohmann::json;

constexpr std::uint64_t kSignatureStream = 0x51674EA7;
constexpr std::uint64_t kVideoStream = 0x71DE0;
constexpr int kMinGap = 2;  // tokens between planted segments

struct PlannedSegment {
  int start_tok = 0;
  int duration = 0;
  int class_id = 0;
};

std::vector<PlannedSegment> plan_segments(const SyntheticSpec& spec, rng::Counter& rc,
                                          const std::string& video_id) {
  const int count =
      static_cast<int>(rc.next_range(static_cast<std::uint64_t>(spec.min_segments),
                                     static_cast<std::uint64_t>(spec.max_segments)));
  std::vector<PlannedSegment> segs(static_cast<std::size_t>(count));
  int total = 0;
  for (auto& s : segs) {
    s.duration = static_cast<int>(rc.next_range(static_cast<std::uint64_t>(spec.min_duration),
                                                static_cast<std::uint64_t>(spec.max_duration)));
    s.class_id = static_cast<int>(rc.next_range(0, static_cast<std::uint64_t>(spec.num_classes - 1)));
    total += s.duration;
  }
  const int slack = spec.sequence_length - total - kMinGap * (count - 1);
  if (slack < 0) {
    throw ConfigError("generate: segments cannot fit without overlap in video " + video_id);
  }
  // Split the slack into count+1 gaps proportional to uniform draws.
  std::vector<double> w(static_cast<std::size_t>(count) + 1);
  double wsum = 0.0;
  for (auto& v : w) {
    v = rc.next_uniform() + 1e-9;
    wsum += v;
  }
  std::vector<int> gaps(w.size());
  int used = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    gaps[i] = static_cast<int>(std::floor(w[i] / wsum * slack));
    used += gaps[i];
  }
  gaps[0] += slack - used;
  int cursor = 0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    cursor += gaps[i] + (i > 0 ? kMinGap : 0);
    segs[i].start_tok = cursor;
    cursor += segs[i].duration;
  }
  return segs;
}

VideoEntry make_video(const SyntheticSpec& spec,
                      const std::vector<std::vector<double>>& signatures, std::size_t index) {
  const bool is_train = index < static_cast<std::size_t>(spec.num_train_videos);
  VideoEntry v;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04zu", is_train ? "train" : "test",
                is_train ? index : index - static_cast<std::size_t>(spec.num_train_videos));
  v.id = buf;
  v.split = is_train ? "train" : "test";

  rng::Counter rc(rng::mix(spec.seed, kVideoStream + index));
  const auto planned = plan_segments(spec, rc, v.id);

  const std::size_t T = static_cast<std::size_t>(spec.sequence_length);
  const std::size_t C = static_cast<std::size_t>(spec.feature_dim);
  v.features = Array<float>({T, C});
  for (std::size_t i = 0; i < T * C; ++i) {
    v.features[i] = static_cast<float>(spec.noise_sigma * rc.next_normal());
  }
  for (const auto& seg : planned) {
    const int ramp = std::max(1, static_cast<int>(std::llround(0.1 * seg.duration)));
    for (int o = 0; o < seg.duration; ++o) {
      const double attack = static_cast<double>(o + 1) / ramp;
      const double decay = static_cast<double>(seg.duration - o) / ramp;
      const double env = std::min(1.0, std::min(attack, decay));
      const std::size_t t = static_cast<std::size_t>(seg.start_tok + o);
      const auto& sig = signatures[static_cast<std::size_t>(seg.class_id)];
      for (std::size_t c = 0; c < C; ++c) {
        v.features(t, c) = static_cast<float>(static_cast<double>(v.features(t, c)) + env * sig[c]);
      }
    }
    ActionSegment gt;
    gt.start = seg.start_tok * spec.base_dt;
    gt.end = (seg.start_tok + seg.duration) * spec.base_dt;
    gt.class_id = seg.class_id;
    gt.score = 1.0;
    v.segments.push_back(gt);
  }
  std::sort(v.segments.begin(), v.segments.end(),
            [](const ActionSegment& a, const ActionSegment& b) { return a.start < b.start; });
  return v;
}

}  // namespace

std::vector<std::vector<double>> class_signatures(const SyntheticSpec& spec) {
  rng::Counter rc(rng::mix(spec.seed, kSignatureStream));
  std::vector<std::vector<double>> sigs(static_cast<std::size_t>(spec.num_classes));
  for (auto& sig : sigs) {
    sig.resize(static_cast<std::size_t>(spec.feature_dim));
    double norm2 = 0.0;
    for (auto& v : sig) {
      v = rc.next_normal();
      norm2 += v * v;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& v : sig) v *= inv;
  }
  return sigs;
}

Dataset generate(const SyntheticSpec& spec, int workers) {
  if (spec.num_classes < 1 || spec.sequence_length < 1 || spec.feature_dim < 1) {
    throw ConfigError("generate: spec dimensions must be positive");
  }
  if (spec.min_segments < 1 || spec.max_segments < spec.min_segments) {
    throw ConfigError("generate: invalid segments_per_video range");
  }
  if (spec.min_duration < 1 || spec.max_duration < spec.min_duration ||
      spec.max_duration >= spec.sequence_length) {
    throw ConfigError("generate: duration_range must fit inside the sequence");
  }
  const auto signatures = class_signatures(spec);
  const std::size_t n =
      static_cast<std::size_t>(spec.num_train_videos + spec.num_test_videos);
  Dataset data;
  data.sequence_length = static_cast<std::size_t>(spec.sequence_length);
  data.feature_dim = static_cast<std::size_t>(spec.feature_dim);
  data.num_classes = spec.num_classes;
  data.base_dt = spec.base_dt;
  data.videos.resize(n);

  const int nworkers = std::max(1, workers);
  if (nworkers == 1) {
    for (std::size_t i = 0; i < n; ++i) data.videos[i] = make_video(spec, signatures, i);
  } else {
    // Per-video derived seeds make the result independent of the partition.
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex mu;
    for (int w = 0; w < nworkers; ++w) {
      pool.emplace_back([&, w]() {
        try {
          for (std::size_t i = static_cast<std::size_t>(w); i < n;
               i += static_cast<std::size_t>(nworkers)) {
            data.videos[i] = make_video(spec, signatures, i);
          }
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "features");
  json manifest;
  manifest["format"] = "lqt-dataset-v1";
  manifest["sequence_length"] = data.sequence_length;
  manifest["feature_dim"] = data.feature_dim;
  manifest["num_classes"] = data.num_classes;
  manifest["base_dt"] = data.base_dt;
  json videos = json::array();
  for (const auto& v : data.videos) {
    json jv;
    jv["id"] = v.id;
    jv["split"] = v.split;
    json segs = json::array();
    for (const auto& s : v.segments) {
      segs.push_back({{"start", s.start}, {"end", s.end}, {"class", s.class_id}});
    }
    jv["segments"] = std::move(segs);
    videos.push_back(std::move(jv));
    io::save_array(dir / "features" / (v.id + ".lqt"), v.features);
  }
  manifest["videos"] = std::move(videos);
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write manifest: " + (dir / "manifest.json").string());
  os << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("cannot open manifest: " + (dir / "manifest.json").string());
  json manifest;
  try {
    is >> manifest;
  } catch (const json::exception& e) {
    throw IoError(std::string("manifest parse error: ") + e.what());
  }
  if (manifest.value("format", "") != "lqt-dataset-v1") {
    throw IoError("manifest format mismatch: expected lqt-dataset-v1");
  }
  Dataset data;
  data.sequence_length = manifest.at("sequence_length").get<std::size_t>();
  data.feature_dim = manifest.at("feature_dim").get<std::size_t>();
  data.num_classes = manifest.at("num_classes").get<int>();
  data.base_dt = manifest.at("base_dt").get<double>();
  for (const auto& jv : manifest.at("videos")) {
    VideoEntry v;
    v.id = jv.at("id").get<std::string>();
    v.split = jv.at("split").get<std::string>();
    v.features = io::load_array<float>(dir / "features" / (v.id + ".lqt"));
    if (v.features.rows() != data.sequence_length || v.features.cols() != data.feature_dim) {
      throw IoError("feature shape of " + v.id + " disagrees with manifest: got " +
                    shape_str(v.features.shape()));
    }
    for (const auto& js : jv.at("segments")) {
      ActionSegment s;
      s.start = js.at("start").get<double>();
      s.end = js.at("end").get<double>();
      s.class_id = js.at("class").get<int>();
      s.score = 1.0;
      if (!(s.end > s.start)) throw IoError("invalid segment in manifest for " + v.id);
      v.segments.push_back(s);
    }
    data.videos.push_back(std::move(v));
  }
  return data;
}

}  // namespace lqt
