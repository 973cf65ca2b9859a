#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lqt/lptb.hpp"
#include "lqt/segments.hpp"

// Multi-level temporal feature pyramid of relaxation blocks with anchor-free
// detection heads. Level l runs at 1/stride^l of the input resolution; every
// block owns an independent decay rate.

namespace lqt {

struct PyramidConfig {
  int levels = 6;
  int downsample_stride = 2;
  int embed_dim = 64;
  int blocks_per_level = 1;
  int kernel_size = 3;
  int head_layers = 2;
  int num_classes = 5;
  double dropout_rate = 0.1;
  double decay_epsilon = 1e-3;
  DecaySharingMode decay_sharing = DecaySharingMode::BlockShared;
  DtPolicy dt;

  // Input lengths are right-padded with zeros to a multiple of this.
  std::size_t input_multiple() const {
    std::size_t m = 1;
    for (int l = 1; l < levels; ++l) m *= static_cast<std::size_t>(downsample_stride);
    return m;
  }
};

template <class S>
struct LevelFeatures {
  std::vector<Var<S>> feats;           // level l: T_l x C
  std::vector<double> token_dt;        // seconds between token centers at level l
  std::vector<std::size_t> valid_len;  // tokens backed by real (unpadded) input
};

template <class S>
struct LevelOutputs {
  std::vector<Var<S>> cls_logits;   // T_l x num_classes
  std::vector<Var<S>> reg_offsets;  // T_l x 2, strictly positive (softplus)
};

// Zero rows appended on the right so the row count becomes a multiple of m.
template <class S>
Array<S> pad_rows(const Array<S>& x, std::size_t m) {
  const std::size_t T = x.rows(), C = x.cols();
  if (T == 0) throw ShapeError("pad_rows: empty sequence");
  const std::size_t padded = (T + m - 1) / m * m;
  if (padded == T) return x;
  Array<S> out({padded, C});
  std::copy(x.data(), x.data() + T * C, out.data());
  return out;
}

template <class S>
class Detector {
 public:
  PyramidConfig cfg;
  std::size_t in_dim = 0;

  Parameter<S> stem_w, stem_b, stem_gamma, stem_beta;
  std::vector<std::vector<LptbWeights<S>>> blocks;  // [level][block]
  std::vector<Parameter<S>> trunk_w, trunk_b;       // shared head trunk
  Parameter<S> cls_w, cls_b, reg_w, reg_b;

  static Detector init(const PyramidConfig& cfg, std::size_t in_dim, std::uint64_t seed) {
    if (cfg.levels < 1) throw ConfigError("PyramidConfig: levels must be >= 1");
    if (cfg.downsample_stride < 2) throw ConfigError("PyramidConfig: stride must be >= 2");
    if (in_dim == 0) throw ShapeError("Detector: input feature dim must be >= 1");
    Detector d;
    d.cfg = cfg;
    d.in_dim = in_dim;
    const std::size_t C = static_cast<std::size_t>(cfg.embed_dim);

    rng::Counter rc(rng::mix(seed, 0xDE7EC7));
    auto uniform_init = [&rc](const std::string& name, std::vector<std::size_t> shape,
                              double bound) {
      Array<S> a(std::move(shape));
      for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = static_cast<S>((rc.next_uniform() * 2.0 - 1.0) * bound);
      }
      return Parameter<S>(name, std::move(a));
    };

    d.stem_w = uniform_init("stem.weight", {in_dim, C}, 1.0 / std::sqrt(static_cast<double>(in_dim)));
    d.stem_b = Parameter<S>("stem.bias", Array<S>({C}));
    d.stem_gamma = Parameter<S>("stem.ln_gamma", Array<S>({C}, S(1)));
    d.stem_beta = Parameter<S>("stem.ln_beta", Array<S>({C}));

    d.blocks.resize(static_cast<std::size_t>(cfg.levels));
    for (int l = 0; l < cfg.levels; ++l) {
      for (int b = 0; b < cfg.blocks_per_level; ++b) {
        const std::string prefix =
            "level" + std::to_string(l) + ".block" + std::to_string(b);
        d.blocks[static_cast<std::size_t>(l)].push_back(LptbWeights<S>::init(
            prefix, C, static_cast<std::size_t>(cfg.kernel_size), cfg.decay_sharing, cfg.dt, l,
            cfg.downsample_stride, cfg.decay_epsilon, cfg.dropout_rate,
            rng::mix(seed, 0x1000 + static_cast<std::uint64_t>(l * 64 + b))));
      }
    }

    const double wb = 1.0 / std::sqrt(static_cast<double>(C));
    for (int i = 0; i < cfg.head_layers; ++i) {
      d.trunk_w.push_back(uniform_init("head.trunk" + std::to_string(i) + ".weight", {C, C}, wb));
      d.trunk_b.push_back(
          Parameter<S>("head.trunk" + std::to_string(i) + ".bias", Array<S>({C})));
    }
    d.cls_w = uniform_init("head.cls.weight", {C, static_cast<std::size_t>(cfg.num_classes)}, wb);
    // Bias the classifier toward background so early focal loss stays calm.
    const double prior = 0.01;
    d.cls_b = Parameter<S>("head.cls.bias",
                           Array<S>({static_cast<std::size_t>(cfg.num_classes)},
                                    static_cast<S>(-std::log((1.0 - prior) / prior))));
    d.reg_w = uniform_init("head.reg.weight", {C, std::size_t{2}}, wb);
    d.reg_b = Parameter<S>("head.reg.bias", Array<S>({2}));
    return d;
  }

  std::vector<std::pair<std::string, Parameter<S>*>> parameters() {
    std::vector<std::pair<std::string, Parameter<S>*>> out;
    out.emplace_back(stem_w.name, &stem_w);
    out.emplace_back(stem_b.name, &stem_b);
    out.emplace_back(stem_gamma.name, &stem_gamma);
    out.emplace_back(stem_beta.name, &stem_beta);
    for (auto& level : blocks) {
      for (auto& blk : level) blk.collect(out);
    }
    for (std::size_t i = 0; i < trunk_w.size(); ++i) {
      out.emplace_back(trunk_w[i].name, &trunk_w[i]);
      out.emplace_back(trunk_b[i].name, &trunk_b[i]);
    }
    out.emplace_back(cls_w.name, &cls_w);
    out.emplace_back(cls_b.name, &cls_b);
    out.emplace_back(reg_w.name, &reg_w);
    out.emplace_back(reg_b.name, &reg_b);
    return out;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (auto& [name, p] : parameters()) n += p->size();
    return n;
  }

  std::size_t decay_param_count() {
    std::size_t n = 0;
    for (auto& level : blocks) {
      for (auto& blk : level) n += blk.decay.count();
    }
    return n;
  }

  std::size_t pyramid_param_count() {
    std::size_t n = 0;
    for (auto& level : blocks) {
      for (auto& blk : level) n += blk.param_count();
    }
    return n;
  }

  // Per-timestep linear projection to the embed dim followed by layer norm.
  Var<S> stem(Graph<S>& g, const Var<S>& x) {
    if (x.v().rows() == 0) throw ShapeError("stem: empty sequence");
    Var<S> y = ops::linear_per_timestep(x, g.leaf(stem_w), g.leaf(stem_b));
    return ops::layer_norm(y, g.leaf(stem_gamma), g.leaf(stem_beta),
                           static_cast<S>(kLayerNormEps));
  }

  // x must already be embedded (T x C) with T divisible by input_multiple().
  // valid_t is the unpadded token count used for per-level masks.
  LevelFeatures<S> build_pyramid(Graph<S>& g, Var<S> x, std::size_t valid_t,
                                 const Backend& backend, bool training, std::uint64_t seed) {
    const std::size_t T = x.v().rows();
    if (T % input_multiple_checked(T) != 0) {
      throw ShapeError("build_pyramid: T=" + std::to_string(T) + " not a multiple of stride^(L-1)");
    }
    LevelFeatures<S> out;
    std::size_t len = valid_t;
    for (int l = 0; l < cfg.levels; ++l) {
      if (l > 0) {
        x = ops::maxpool_rows(x, static_cast<std::size_t>(cfg.downsample_stride));
        len = (len + static_cast<std::size_t>(cfg.downsample_stride) - 1) /
              static_cast<std::size_t>(cfg.downsample_stride);
      }
      for (int b = 0; b < cfg.blocks_per_level; ++b) {
        x = lptb_forward(g, x, blocks[static_cast<std::size_t>(l)][static_cast<std::size_t>(b)],
                         l, cfg.downsample_stride, backend, training,
                         rng::mix(seed, 0x2000 + static_cast<std::uint64_t>(l * 64 + b)));
      }
      out.feats.push_back(x);
      out.token_dt.push_back(cfg.dt.base_dt * std::pow(cfg.downsample_stride, l));
      out.valid_len.push_back(std::min(len, x.v().rows()));
    }
    return out;
  }

  // Shared anchor-free heads: head_layers of linear+relu, then class logits
  // and softplus-positive start/end distances in level-token units.
  LevelOutputs<S> heads(Graph<S>& g, const LevelFeatures<S>& feats) {
    LevelOutputs<S> out;
    std::vector<Var<S>> tw, tb;
    for (std::size_t i = 0; i < trunk_w.size(); ++i) {
      tw.push_back(g.leaf(trunk_w[i]));
      tb.push_back(g.leaf(trunk_b[i]));
    }
    Var<S> vcw = g.leaf(cls_w), vcb = g.leaf(cls_b);
    Var<S> vrw = g.leaf(reg_w), vrb = g.leaf(reg_b);
    for (const Var<S>& f : feats.feats) {
      Var<S> h = f;
      for (std::size_t i = 0; i < tw.size(); ++i) {
        h = ops::relu(ops::linear_per_timestep(h, tw[i], tb[i]));
      }
      out.cls_logits.push_back(ops::linear_per_timestep(h, vcw, vcb));
      out.reg_offsets.push_back(ops::softplus(ops::linear_per_timestep(h, vrw, vrb)));
    }
    return out;
  }

  struct ForwardResult {
    LevelFeatures<S> feats;
    LevelOutputs<S> out;
  };

  // Full model on raw features (T x in_dim): pad, stem, pyramid, heads.
  ForwardResult forward(Graph<S>& g, const Array<S>& features, const Backend& backend,
                        bool training, std::uint64_t seed) {
    if (features.cols() != in_dim) {
      throw ShapeError("Detector::forward: feature dim " + std::to_string(features.cols()) +
                       " != expected " + std::to_string(in_dim));
    }
    const std::size_t valid_t = features.rows();
    Var<S> x = g.constant(pad_rows(features, cfg.input_multiple()));
    x = stem(g, x);
    ForwardResult r;
    r.feats = build_pyramid(g, x, valid_t, backend, training, seed);
    r.out = heads(g, r.feats);
    return r;
  }

 private:
  std::size_t input_multiple_checked(std::size_t T) const {
    const std::size_t m = cfg.input_multiple();
    if (T < m) {
      throw ShapeError("build_pyramid: T=" + std::to_string(T) + " shorter than stride^(L-1)=" +
                       std::to_string(m));
    }
    return m;
  }
};

// Analytic MAC count of one pyramid forward at padded input length T
// (divisible by stride^(levels-1)). Counts the relaxation blocks and, when
// include_heads is set, the shared head stack; the parameter-free max-pool
// downsampling contributes comparisons, not MACs, and is excluded. Every term
// is proportional to a level length, so the total is exactly linear in T.
inline std::uint64_t pyramid_flops(const PyramidConfig& cfg, std::uint64_t T,
                                   bool include_heads) {
  const std::uint64_t C = static_cast<std::uint64_t>(cfg.embed_dim);
  const std::uint64_t K = static_cast<std::uint64_t>(cfg.kernel_size);
  const std::uint64_t ncls = static_cast<std::uint64_t>(cfg.num_classes);
  std::uint64_t total = 0;
  std::uint64_t Tl = T;
  for (int l = 0; l < cfg.levels; ++l) {
    if (l > 0) Tl /= static_cast<std::uint64_t>(cfg.downsample_stride);
    total += static_cast<std::uint64_t>(cfg.blocks_per_level) * lptb_flops(Tl, C, K);
    if (include_heads) {
      // trunk: linear+relu per layer; then class and regression projections.
      total += static_cast<std::uint64_t>(cfg.head_layers) * Tl * (C * (C + 1) + C);
      total += Tl * (C + 1) * ncls;
      total += Tl * ((C + 1) * 2 + 2);
    }
  }
  return total;
}

// Head outputs pulled out of the graph for decoding and serialization.
template <class S>
struct HeadValues {
  std::vector<Array<S>> cls_logits;
  std::vector<Array<S>> reg_offsets;
  std::vector<double> token_dt;
  std::vector<std::size_t> valid_len;
};

template <class S>
HeadValues<S> extract_head_values(const LevelFeatures<S>& feats, const LevelOutputs<S>& out) {
  HeadValues<S> hv;
  for (std::size_t l = 0; l < out.cls_logits.size(); ++l) {
    hv.cls_logits.push_back(out.cls_logits[l].v());
    hv.reg_offsets.push_back(out.reg_offsets[l].v());
  }
  hv.token_dt = feats.token_dt;
  hv.valid_len = feats.valid_len;
  return hv;
}

// Anchor-free decoding: token t at level l with class probability >= threshold
// emits [center - left*dt_l, center + right*dt_l] where center = t*dt_l and
// (left, right) are the predicted distances in level-token units.
template <class S>
std::vector<ActionSegment> decode(const HeadValues<S>& hv, double score_threshold) {
  if (score_threshold < 0.0 || score_threshold > 1.0) {
    throw ConfigError("decode: score_threshold must be in [0, 1]");
  }
  std::vector<ActionSegment> out;
  for (std::size_t l = 0; l < hv.cls_logits.size(); ++l) {
    const Array<S>& cls = hv.cls_logits[l];
    const Array<S>& reg = hv.reg_offsets[l];
    const double dt = hv.token_dt[l];
    const std::size_t T = std::min(hv.valid_len[l], cls.rows());
    const std::size_t ncls = cls.cols();
    for (std::size_t t = 0; t < T; ++t) {
      const double center = static_cast<double>(t) * dt;
      const double left = static_cast<double>(reg(t, 0)) * dt;
      const double right = static_cast<double>(reg(t, 1)) * dt;
      for (std::size_t k = 0; k < ncls; ++k) {
        const double z = static_cast<double>(cls(t, k));
        const double p = 1.0 / (1.0 + std::exp(-z));
        if (p < score_threshold) continue;
        ActionSegment seg;
        seg.start = std::max(0.0, center - left);
        seg.end = center + right;
        seg.class_id = static_cast<int>(k);
        seg.score = p;
        out.push_back(seg);
      }
    }
  }
  return out;
}

}  // namespace lqt
