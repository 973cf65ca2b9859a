#include <doctest.h>

#include <cmath>

#include "lqt/pyramid.hpp"
#include "support/test_util.hpp"

using namespace lqt;

namespace {

PyramidConfig small_cfg(int levels = 6) {
  PyramidConfig cfg;
  cfg.levels = levels;
  cfg.embed_dim = 8;
  cfg.num_classes = 3;
  cfg.dropout_rate = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("stem preserves length and normalizes statistics") {
  PyramidConfig cfg = small_cfg();
  auto d = Detector<double>::init(cfg, 5, 17);
  Graph<double> g(false);
  auto x = g.constant(test::random_array({21, 5}, 18, -2.0, 2.0));
  auto y = d.stem(g, x);
  CHECK(y.v().rows() == 21);
  CHECK(y.v().cols() == 8);
  for (std::size_t t = 0; t < 21; ++t) {
    double mean = 0.0;
    for (std::size_t c = 0; c < 8; ++c) mean += y.v()(t, c);
    mean /= 8.0;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-6));  // beta = 0 at init
  }

  // identity-shaped stem on matching dims: layer-normalized passthrough
  auto d2 = Detector<double>::init(small_cfg(), 8, 19);
  d2.stem_w.value.fill(0.0);
  for (std::size_t i = 0; i < 8; ++i) d2.stem_w.value(i, i) = 1.0;
  d2.stem_b.value.fill(0.0);
  auto x2v = test::random_array({4, 8}, 20);
  auto y2 = d2.stem(g, g.constant(x2v));
  Parameter<double> gamma("g", Array<double>({8}, 1.0));
  Parameter<double> beta("b", Array<double>({8}, 0.0));
  auto ln = ops::layer_norm(g.constant(x2v), g.leaf(gamma), g.leaf(beta),
                            static_cast<double>(kLayerNormEps));
  for (std::size_t i = 0; i < y2.v().size(); ++i) {
    CHECK(y2.v()[i] == doctest::Approx(ln.v()[i]).epsilon(1e-12));
  }
}

TEST_CASE("pyramid level lengths and token spacing") {
  PyramidConfig cfg = small_cfg();
  auto d = Detector<double>::init(cfg, 8, 21);
  Graph<double> g(false);
  auto x = g.constant(test::random_array({2304, 8}, 22));
  auto feats = d.build_pyramid(g, x, 2304, Backend{}, false, 0);
  REQUIRE(feats.feats.size() == 6);
  const std::size_t expect[] = {2304, 1152, 576, 288, 144, 72};
  for (std::size_t l = 0; l < 6; ++l) {
    CHECK(feats.feats[l].v().rows() == expect[l]);
    CHECK(feats.feats[l].v().cols() == 8);
    CHECK(feats.token_dt[l] ==
          doctest::Approx(cfg.dt.base_dt * std::pow(2.0, l)).epsilon(1e-12));
  }

  // Single level config: no downsampling.
  auto d1 = Detector<double>::init(small_cfg(1), 8, 23);
  auto f1 = d1.build_pyramid(g, g.constant(test::random_array({10, 8}, 24)), 10, Backend{}, false, 0);
  REQUIRE(f1.feats.size() == 1);
  CHECK(f1.feats[0].v().rows() == 10);

  // Length not divisible by stride^(L-1) is rejected at this layer.
  CHECK_THROWS_AS(d.build_pyramid(g, g.constant(test::random_array({100, 8}, 25)), 100,
                                  Backend{}, false, 0),
                  ShapeError);
}

TEST_CASE("padding policy covers arbitrary lengths") {
  Array<double> x = test::random_array({100, 4}, 26);
  Array<double> padded = pad_rows(x, 32);
  CHECK(padded.rows() == 128);
  CHECK(padded(99, 2) == x(99, 2));
  CHECK(padded(100, 0) == 0.0);
  CHECK(padded(127, 3) == 0.0);

  PyramidConfig cfg = small_cfg();
  auto d = Detector<double>::init(cfg, 4, 27);
  Graph<double> g(false);
  auto r = d.forward(g, x, Backend{}, false, 0);
  CHECK(r.feats.feats[0].v().rows() == 128);
  CHECK(r.feats.valid_len[0] == 100);
  CHECK(r.feats.valid_len[1] == 50);
  CHECK(r.feats.valid_len[5] == 4);  // ceil(100/32)
}

TEST_CASE("heads shapes and zero-weight values") {
  PyramidConfig cfg = small_cfg();
  auto d = Detector<double>::init(cfg, 8, 28);
  for (auto& w : d.trunk_w) w.value.fill(0.0);
  for (auto& b : d.trunk_b) b.value.fill(0.0);
  d.cls_w.value.fill(0.0);
  d.cls_b.value.fill(0.0);
  d.reg_w.value.fill(0.0);
  d.reg_b.value.fill(0.0);

  Graph<double> g(false);
  auto x = g.constant(test::random_array({64, 8}, 29));
  auto feats = d.build_pyramid(g, x, 64, Backend{}, false, 0);
  auto out = d.heads(g, feats);
  REQUIRE(out.cls_logits.size() == 6);
  for (std::size_t l = 0; l < 6; ++l) {
    CHECK(out.cls_logits[l].v().rows() == feats.feats[l].v().rows());
    CHECK(out.cls_logits[l].v().cols() == 3);
    CHECK(out.reg_offsets[l].v().cols() == 2);
    for (double v : out.cls_logits[l].v().values()) CHECK(v == 0.0);
    for (double v : out.reg_offsets[l].v().values()) {
      CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("decode thresholds and hand arithmetic") {
  // Single level built by hand: level 2, stride 2, base_dt = 4/30.
  HeadValues<double> hv;
  const double dt = (4.0 / 30.0) * 4.0;
  hv.token_dt = {dt};
  hv.valid_len = {8};
  Array<double> logits({8, 2}, -20.0);
  Array<double> reg({8, 2}, 0.5);
  logits(5, 1) = 0.8;
  reg(5, 0) = 1.25;
  reg(5, 1) = 2.5;
  hv.cls_logits = {logits};
  hv.reg_offsets = {reg};

  auto segs = decode(hv, 0.1);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].class_id == 1);
  CHECK(segs[0].score == doctest::Approx(1.0 / (1.0 + std::exp(-0.8))).epsilon(1e-12));
  CHECK(segs[0].start == doctest::Approx((5.0 - 1.25) * dt).epsilon(1e-12));
  CHECK(segs[0].end == doctest::Approx((5.0 + 2.5) * dt).epsilon(1e-12));
  CHECK(segs[0].end > segs[0].start);

  // Everything below threshold: empty result is valid.
  auto none = decode(hv, 0.9999);
  CHECK(none.empty());

  // Padding tokens (beyond valid_len) never decode.
  logits(7, 0) = 5.0;
  hv.cls_logits = {logits};
  hv.valid_len = {7};
  auto clipped = decode(hv, 0.1);
  REQUIRE(clipped.size() == 1);
  CHECK(clipped[0].class_id == 1);
}

TEST_CASE("nms hand cases") {
  std::vector<ActionSegment> segs = {
      {0.0, 10.0, 0, 0.9},
      {0.0, 10.0, 0, 0.8},
  };
  auto kept = nms(segs, 0.5, 100);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);

  std::vector<ActionSegment> disjoint = {
      {0.0, 1.0, 0, 0.5}, {2.0, 3.0, 0, 0.6}, {4.0, 5.0, 0, 0.7}};
  CHECK(nms(disjoint, 0.5, 100).size() == 3);

  // IoU 1/3 < 0.5 keeps both.
  std::vector<ActionSegment> pair = {{0.0, 10.0, 0, 0.9}, {5.0, 15.0, 0, 0.8}};
  CHECK(nms(pair, 0.5, 100).size() == 2);

  // Different classes never suppress each other.
  std::vector<ActionSegment> classes = {{0.0, 10.0, 0, 0.9}, {0.0, 10.0, 1, 0.8}};
  CHECK(nms(classes, 0.5, 100).size() == 2);

  CHECK_THROWS_AS(nms(pair, 0.0, 100), ConfigError);
  CHECK_THROWS_AS(nms(pair, 1.5, 100), ConfigError);
}

TEST_CASE("nms properties on a random battery") {
  rng::Counter rc(314);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ActionSegment> segs;
    const std::size_t n = 30 + rc.next_range(0, 40);
    for (std::size_t i = 0; i < n; ++i) {
      ActionSegment s;
      s.start = 20.0 * rc.next_uniform();
      s.end = s.start + 0.2 + 5.0 * rc.next_uniform();
      s.class_id = static_cast<int>(rc.next_range(0, 3));
      s.score = rc.next_uniform();
      segs.push_back(s);
    }
    const double thr = 0.3 + 0.5 * rc.next_uniform();
    const std::size_t cap = 10 + rc.next_range(0, 30);
    auto kept = nms(segs, thr, cap);
    CHECK(kept.size() <= cap);
    for (std::size_t i = 0; i + 1 < kept.size(); ++i) CHECK(kept[i].score >= kept[i + 1].score);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      bool found = false;
      for (const auto& s : segs) {
        if (s.start == kept[i].start && s.end == kept[i].end && s.score == kept[i].score &&
            s.class_id == kept[i].class_id) {
          found = true;
          break;
        }
      }
      CHECK(found);  // output is a subset of the input
      for (std::size_t j = i + 1; j < kept.size(); ++j) {
        if (kept[i].class_id == kept[j].class_id) {
          CHECK(segment_iou(kept[i], kept[j]) <= thr);
        }
      }
    }
  }
}

TEST_CASE("decay parameter accounting at model level") {
  PyramidConfig cfg = small_cfg();
  cfg.blocks_per_level = 2;
  auto shared = Detector<double>::init(cfg, 8, 31);
  CHECK(shared.decay_param_count() == 6 * 2);

  cfg.decay_sharing = DecaySharingMode::PerChannel;
  auto perchan = Detector<double>::init(cfg, 8, 31);
  CHECK(perchan.decay_param_count() == 6 * 2 * 8);
  CHECK(perchan.param_count() == shared.param_count() + 6 * 2 * (8 - 1));
}

TEST_CASE("pyramid flops are exactly linear in T") {
  PyramidConfig cfg = small_cfg();
  for (bool heads : {false, true}) {
    const std::uint64_t f1 = pyramid_flops(cfg, 2304, heads);
    const std::uint64_t f2 = pyramid_flops(cfg, 4608, heads);
    CHECK(f2 == 2 * f1);
  }
  // Geometric series audit against per-level block counts.
  std::uint64_t expect = 0;
  std::uint64_t Tl = 2304;
  for (int l = 0; l < cfg.levels; ++l) {
    if (l > 0) Tl /= 2;
    expect += lptb_flops(Tl, 8, 3);
  }
  CHECK(pyramid_flops(cfg, 2304, false) == expect);
}

TEST_CASE("full detector forward is deterministic") {
  PyramidConfig cfg = small_cfg();
  cfg.dropout_rate = 0.1;
  auto d = Detector<double>::init(cfg, 5, 32);
  Array<double> x = test::random_array({96, 5}, 33);
  auto run = [&](bool training) {
    Graph<double> g(false);
    auto r = d.forward(g, x, Backend{}, training, 1234);
    return r.out.cls_logits[2].v();
  };
  auto a = run(true);
  auto b = run(true);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  // eval mode ignores dropout: differs from training output
  auto c = run(false);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) any_diff = any_diff || a[i] != c[i];
  CHECK(any_diff);
}
