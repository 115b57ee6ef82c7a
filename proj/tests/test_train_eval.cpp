#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "dfres/baselines.hpp"
#include "dfres/errors.hpp"
#include "dfres/evaluate.hpp"
#include "dfres/metrics.hpp"
#include "dfres/ppm.hpp"
#include "dfres/synthetic.hpp"
#include "dfres/train.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace dfres;

namespace {

Frame constant(std::size_t h, std::size_t w, float v) {
  Frame f(h, w);
  for (auto& p : f.pixels) p = v;
  return f;
}

Frame row_coded(std::size_t h, std::size_t w) {
  Frame f(h, w);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) f.at(c, y, x) = float(y) / 8.0f;
    }
  }
  return f;
}

// A bright vertical bar on black sliding `speed` columns per frame.
std::vector<Frame> moving_bar(std::size_t frames, std::size_t speed) {
  std::vector<Frame> clip;
  for (std::size_t t = 0; t < frames; ++t) {
    Frame f(16, 32);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < 16; ++y) {
        for (std::size_t x = 0; x < 4; ++x) f.at(c, y, (t * speed + x + 4) % 32) = 1.0f;
      }
    }
    clip.push_back(f);
  }
  return clip;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

NetworkConfig small_net() {
  NetworkConfig c;
  c.set("base_channels", "8");
  c.feat_blocks = 1;
  c.align_blocks = 1;
  c.recon_blocks = 1;
  return c;
}

std::vector<ClipStream> small_streams(std::size_t clips, std::uint64_t seed) {
  SyntheticConfig sc;
  sc.clips = clips;
  sc.frames = 8;
  sc.height = 16;
  sc.width = 16;
  sc.seed = seed;
  std::vector<ClipStream> out;
  for (std::size_t i = 0; i < clips; ++i) out.push_back(synth_interlaced(synthetic_clip(sc, i)));
  return out;
}

}  // namespace

TEST_CASE("psnr examples") {
  const Frame a = constant(8, 8, 0.5f), b = constant(8, 8, 0.6f);
  CHECK(std::abs(psnr(a, b) - 20.0) <= 0.01);
  CHECK(psnr(a, b) == psnr(b, a));
  CHECK(psnr(constant(4, 4, 0.0f), constant(4, 4, 1.0f)) == doctest::Approx(0.0));
  CHECK(std::isinf(psnr(a, a)));
  CHECK(format_metric(psnr(a, a)) == "inf");
  CHECK(format_metric(20.0) == "20.000000");
  CHECK_THROWS_AS(psnr(a, constant(8, 6, 0.5f)), DimensionError);
}

TEST_CASE("ssim agrees with the direct-window oracle") {
  std::mt19937_64 rng(71);
  const Frame a = oracle::random_frame(rng, 16, 20);
  Frame b = a;
  std::normal_distribution<float> noise(0.0f, 0.05f);
  for (auto& v : b.pixels) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
  CHECK(ssim(a, b) == doctest::Approx(oracle::ssim(a, b)).epsilon(1e-10));
  CHECK(ssim(a, b) == ssim(b, a));
  CHECK(std::abs(ssim(a, a) - 1.0) <= 1e-9);
  CHECK_THROWS_AS(ssim(constant(10, 20, 0.1f), constant(10, 20, 0.1f)), DimensionError);
}

TEST_CASE("ssim of a high-contrast pattern against its inverse is low") {
  Frame a(16, 16);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < 16; ++y) {
      for (std::size_t x = 0; x < 16; ++x) a.at(c, y, x) = ((x / 2 + y / 2) % 2) ? 1.0f : 0.0f;
    }
  }
  Frame inv = a;
  for (auto& v : inv.pixels) v = 1.0f - v;
  const double s = ssim(a, inv);
  CHECK(s < 0.5);
  CHECK(s == doctest::Approx(oracle::ssim(a, inv)).epsilon(1e-10));
}

TEST_CASE("bob and linear fill missing lines from the reference field") {
  const ClipStream s = synth_interlaced(std::vector<Frame>(3, row_coded(6, 2)));
  // Position 1 has an even reference (frame rows 1,3,5); missing rows 0,2,4.
  const Field bob = baseline_estimate(Baseline::Bob, s, 1);
  const Field lin = baseline_estimate(Baseline::Linear, s, 1);
  CHECK(bob.parity == Parity::Odd);
  CHECK(bob.at(0, 0, 0) == 1.0f / 8);  // top edge: the line below
  CHECK(bob.at(0, 1, 0) == 1.0f / 8);  // row 2 <- row 1
  CHECK(bob.at(0, 2, 0) == 3.0f / 8);
  CHECK(lin.at(0, 0, 0) == 1.0f / 8);
  CHECK(lin.at(0, 1, 0) == doctest::Approx(2.0f / 8));
  CHECK(lin.at(0, 2, 0) == doctest::Approx(4.0f / 8));
  // Position 0 has an odd reference (rows 0,2,4); missing rows 1,3,5.
  const Field lin0 = baseline_estimate(Baseline::Linear, s, 0);
  CHECK(lin0.at(0, 0, 0) == doctest::Approx(1.0f / 8));
  CHECK(lin0.at(0, 2, 0) == doctest::Approx(4.0f / 8));  // bottom edge: the line above
  // A linear ramp is reproduced exactly away from the bottom edge.
  const Frame f = baseline_deinterlace(Baseline::Linear, s, 0);
  for (std::size_t y = 0; y < 5; ++y) CHECK(f.at(1, y, 1) == doctest::Approx(float(y) / 8));
}

TEST_CASE("baseline behaviour on static, constant and moving clips") {
  std::mt19937_64 rng(72);
  const Frame still = oracle::random_frame(rng, 12, 12);
  const auto static_clip = std::vector<Frame>(6, still);
  CHECK(std::isinf(eval_clip(Method::classical(Baseline::Weave), static_clip).mean_psnr()));

  const auto flat = std::vector<Frame>(6, constant(12, 12, 0.3f));
  for (Baseline b : kAllBaselines) {
    CAPTURE(to_string(b));
    CHECK(std::isinf(eval_clip(Method::classical(b), flat).mean_psnr()));
  }

  const auto bar = moving_bar(10, 3);
  const double weave = eval_clip(Method::classical(Baseline::Weave), bar).mean_psnr();
  const double linear = eval_clip(Method::classical(Baseline::Linear), bar).mean_psnr();
  MESSAGE("moving bar: weave " << weave << " dB, linear " << linear << " dB");
  CHECK(weave < linear);
}

TEST_CASE("intra-field baselines ignore other fields, temporal ones ignore ground truth") {
  std::mt19937_64 rng(73);
  std::vector<Frame> clip;
  for (int i = 0; i < 5; ++i) clip.push_back(oracle::random_frame(rng, 6, 4));
  ClipStream a = synth_interlaced(clip);
  ClipStream b = a;
  for (std::size_t i : {0u, 1u, 3u, 4u}) b.fields[i] = Field(b.fields[i].parity, 3, 4);
  ClipStream c = a;
  for (auto& g : c.ground_truth) g = Field(g.parity, 3, 4);
  for (Baseline m : {Baseline::Bob, Baseline::Linear}) {
    CHECK(baseline_estimate(m, a, 2) == baseline_estimate(m, b, 2));
  }
  for (Baseline m : kAllBaselines) CHECK(baseline_estimate(m, a, 2) == baseline_estimate(m, c, 2));
  CHECK(baseline_estimate(Baseline::Weave, a, 2) == a.fields[1]);
  CHECK(baseline_estimate(Baseline::Weave, a, 0) == a.fields[1]);
  CHECK_THROWS_AS(baseline_from_string("median"), std::invalid_argument);
  CHECK(baseline_from_string("temporal_mean") == Baseline::TemporalMean);
}

TEST_CASE("eval_clip reports every interior frame") {
  testutil::TempDir dir;
  std::mt19937_64 rng(74);
  std::vector<Frame> clip;
  for (int i = 0; i < 12; ++i) clip.push_back(oracle::random_frame(rng, 12, 12));
  const auto gt = eval_clip(Method::ground_truth(), clip, dir / "gt.csv");
  REQUIRE(gt.frames.size() == 8);
  CHECK(gt.excluded_edge_frames == 4);
  CHECK(gt.frames.front().frame_index == 2);
  CHECK(gt.frames.back().frame_index == 9);
  for (const auto& f : gt.frames) {
    CHECK(std::isinf(f.psnr_db));
    CHECK(f.ssim == doctest::Approx(1.0).epsilon(1e-12));
  }
  const auto bob = eval_clip(Method::classical(Baseline::Bob), clip, dir / "bob.csv");
  std::istringstream g(slurp(dir / "gt.csv")), o(slurp(dir / "bob.csv"));
  std::string lg, lo;
  std::getline(g, lg);
  std::getline(o, lo);
  CHECK(lg == "frame_index,psnr_db,ssim");
  CHECK(lo == lg);
  std::size_t rows = 0;
  std::string last;
  while (std::getline(g, lg) && std::getline(o, lo)) {
    CHECK(lg.substr(0, lg.find(',')) == lo.substr(0, lo.find(',')));
    last = lg;
    ++rows;
  }
  CHECK(rows == 9);  // 8 frames plus the mean line
  CHECK(last.rfind("mean,inf,", 0) == 0);
  CHECK_THROWS(eval_clip(Method::ground_truth(), std::vector<Frame>(4, clip[0])));
  CHECK_THROWS_AS(eval_clip(Method::ground_truth(), clip, dir / "missing" / "x.csv"), FormatError);
}

TEST_CASE("config key handling for training and synthetic data") {
  TrainConfig t;
  t.set("learning_rate", "0.001");
  t.set("crop_size", "32");
  CHECK(t.learning_rate == 0.001);
  CHECK(t.serialize().find("learning_rate=0.001\n") != std::string::npos);
  CHECK(t.serialize().find("beta1=0.9\n") != std::string::npos);
  CHECK_THROWS_AS(t.set("seed", "3"), std::invalid_argument);
  t.crop_size = 31;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);

  SyntheticConfig s;
  s.set("max_speed", "2.5");
  CHECK(s.max_speed == 2.5);
  CHECK(s.serialize().find("max_speed=2.5\n") != std::string::npos);
  CHECK_THROWS_AS(s.set("colour", "red"), std::invalid_argument);
}

TEST_CASE("synthetic clips are deterministic, quantized and moving") {
  SyntheticConfig sc;
  sc.frames = 4;
  sc.seed = 9;
  const auto a = synthetic_clip(sc, 3), b = synthetic_clip(sc, 3), c = synthetic_clip(sc, 4);
  REQUIRE(a.size() == 4);
  CHECK(a[0].height == 64);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a[0] != a[1]);
  for (float v : a[2].pixels) REQUIRE(from_byte(to_byte(v)) == v);
  testutil::TempDir dir;
  sc.clips = 2;
  write_synthetic_set(dir.path(), sc);
  CHECK(read_clip(dir / clip_dir_name(1)) == synthetic_clip(sc, 1));
}

TEST_CASE("training samples alternate indicators and use even-aligned crops") {
  const auto streams = small_streams(2, 1);
  SampleSource src(streams, 8, 5, 3);
  for (int k = 0; k < 20; ++k) {
    const TrainSample s = src.next();
    CHECK(s.window.indicator == k % 2);
    CHECK(s.window.fields.size() == 5);
    CHECK(s.window.reference().height == 4);
    CHECK(s.window.reference().width == 8);
    CHECK(s.target.parity == opposite(s.window.reference().parity));
  }
  const TrainSample m = make_sample(streams[0], 3, 2, 4, 8, 5);
  // Ground truth rows come from the same frame rows as the crop.
  const auto [odd, even] = split_fields(crop(synthetic_clip([] {
                                               SyntheticConfig sc;
                                               sc.clips = 2;
                                               sc.frames = 8;
                                               sc.height = 16;
                                               sc.width = 16;
                                               sc.seed = 1;
                                               return sc;
                                             }(), 0)[3],
                                             2, 4, 8, 8));
  CHECK(m.window.reference().pixels == even.pixels);
  CHECK(m.target.pixels == odd.pixels);
  CHECK_THROWS(make_sample(streams[0], 3, 1, 0, 8, 5));
}

TEST_CASE("one Adam step moves each weight by the learning rate against its gradient") {
  auto p = Tensor<float>::from_data({3}, {1.0f, 2.0f, 3.0f}, true);
  sum(mul(p, Tensor<float>::from_data({3}, {0.5f, -2.0f, 0.0f}))).backward();
  std::map<std::string, Tensor<float>> params{{"p", p}};
  Adam adam(0.01, 0.9, 0.999, 1e-8);
  adam.step(params);
  CHECK(p.data()[0] == doctest::Approx(0.99f));
  CHECK(p.data()[1] == doctest::Approx(2.01f));
  CHECK(p.data()[2] == 3.0f);
  CHECK(adam.steps() == 1);
}

TEST_CASE("training smoke run on 8x8 crops") {
  const auto streams = small_streams(2, 2);
  TrainConfig tc;
  tc.iterations = 10;
  tc.crop_size = 8;
  tc.learning_rate = 1e-3;
  auto w = init_weights<float>(small_net(), 1);
  const auto init = w.clone();
  const auto r = train(w, streams, tc);
  REQUIRE(r.losses.size() == 10);
  for (double l : r.losses) CHECK(std::isfinite(l));
  // Both reconstruction branches received updates.
  for (const char* name : {"head.even.weight", "head.odd.weight"}) {
    const auto a = w.param(name).data(), b = init.param(name).data();
    CHECK_FALSE(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST_CASE("training is deterministic and writes loss and checkpoints") {
  testutil::TempDir dir;
  const auto streams = small_streams(2, 3);
  TrainConfig tc;
  tc.iterations = 6;
  tc.batch_size = 2;
  tc.crop_size = 8;
  tc.checkpoint_interval = 3;
  tc.seed = 11;
  for (const char* run : {"a", "b"}) {
    auto w = init_weights<float>(small_net(), 11);
    train(w, streams, tc, {dir / (std::string(run) + ".csv"), dir / run});
    save_weights(w, dir / (std::string(run) + ".dfrs"));
  }
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.dfrs") == slurp(dir / "b.dfrs"));
  CHECK(slurp(dir / "a.csv").rfind("iteration,loss\n1,", 0) == 0);
  CHECK(std::filesystem::exists(dir / "a" / "checkpoint_000003.dfrs"));
  CHECK(std::filesystem::exists(dir / "a" / "checkpoint_000006.dfrs"));
  CHECK(slurp(dir / "a" / "checkpoint_000006.dfrs") == slurp(dir / "a.dfrs"));
}

TEST_CASE("divergence names the iteration and learning rate") {
  const auto streams = small_streams(1, 4);
  TrainConfig tc;
  tc.iterations = 200;
  tc.crop_size = 8;
  tc.learning_rate = 1e30;
  auto w = init_weights<float>(small_net(), 1);
  try {
    train(w, streams, tc);
    FAIL("expected divergence");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("iteration") != std::string::npos);
    CHECK(msg.find("learning_rate=1e+30") != std::string::npos);
  }
}
