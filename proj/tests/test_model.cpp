#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include "dfres/errors.hpp"
#include "dfres/losses.hpp"
#include "dfres/model.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace dfres;

namespace {

NetworkConfig tiny(std::size_t channels = 8) {
  NetworkConfig c;
  c.set("base_channels", std::to_string(channels));
  c.feat_blocks = 1;
  c.align_blocks = 1;
  c.recon_blocks = 1;
  return c;
}

FieldWindow random_window(std::mt19937_64& rng, std::size_t h, std::size_t w, int indicator) {
  std::vector<Frame> clip;
  for (int i = 0; i < 6; ++i) clip.push_back(oracle::random_frame(rng, 2 * h, w));
  return make_window(synth_interlaced(clip), indicator == 0 ? 2 : 3);
}

// Uniform weights with fan-in variance (unit gain per layer), small biases.
template <typename T>
void randomize(ModelWeights<T>& w, std::uint64_t seed, double gain = 1.0) {
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : w.params()) {
    const double fan_in = t.rank() == 4 ? double(t.numel() / t.dim(0)) : 1.0;
    const double scale = t.rank() == 4 ? gain * std::sqrt(3.0 / fan_in) : 0.1;
    std::uniform_real_distribution<double> d(-scale, scale);
    for (auto& v : t.mutable_data()) v = static_cast<T>(d(rng));
  }
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config serialization round trip and validation") {
  NetworkConfig c = tiny();
  c.align_mode = AlignMode::DeltaDfRes;
  c.attention_mode = AttentionMode::ESA;
  c.seed = 17;
  CHECK(NetworkConfig::parse(c.serialize()) == c);
  CHECK(c.qk_channels == 1);
  CHECK(NetworkConfig::has_key("align_mode"));
  CHECK_FALSE(NetworkConfig::has_key("learning_rate"));
  CHECK_THROWS_AS(c.set("bogus", "1"), std::invalid_argument);
  CHECK_THROWS_AS(c.set("align_mode", "nope"), std::invalid_argument);
  CHECK_THROWS_AS(c.set("feat_blocks", "-2"), std::invalid_argument);
  NetworkConfig bad;
  bad.num_fields = 4;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = NetworkConfig{};
  bad.base_channels = 12;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("parameter counts at the default architecture") {
  const std::size_t conv64 = 64 * 64 * 9 + 64;  // 36,928
  const std::size_t conv1 = 3 * 64 * 9 + 64;
  const std::size_t features = 5 * 2 * conv64;
  const std::size_t fusion = 5 * 64 * 64 + 64;
  const std::size_t attention = conv64 + 2 * (64 * 8 + 8) + (64 * 64 + 64) + 1;
  const std::size_t recon = 2 * 7 * 2 * conv64;
  const std::size_t head = 2 * (64 * 3 * 9 + 3);
  const std::size_t offset = 128 * 18 * 9 + 18;
  const std::size_t shared = conv1 + features + fusion + attention + recon + head;

  NetworkConfig c;
  const auto dfres = param_count(ModelWeights<float>(c));
  CHECK(dfres.by_subsystem.at("align") == 16 * (2 * offset + 2 * conv64));
  CHECK(dfres.total == shared + 16 * 115364);
  CHECK(dfres.total == 3317015);

  c.align_mode = AlignMode::DeltaDfRes;
  const auto delta = param_count(ModelWeights<float>(c));
  CHECK(delta.total == shared + 16 * 57682);
  CHECK(delta.total == 2394103);
  CHECK(delta.total < dfres.total);

  c.align_mode = AlignMode::RegularOffsets;
  CHECK(param_count(ModelWeights<float>(c)).total == shared + 16 * 94610);

  NetworkConfig only_dfres;
  only_dfres.attention_mode = AttentionMode::None;
  CHECK(param_count(ModelWeights<float>(only_dfres)).total == dfres.total - attention);
  NetworkConfig only_sa;
  only_sa.alignment_enabled = false;
  CHECK(param_count(ModelWeights<float>(only_sa)).total == dfres.total - 16 * 115364 - fusion);
}

TEST_CASE("forward shape contract and zero-weight output") {
  std::mt19937_64 rng(61);
  const auto window = random_window(rng, 32, 64, 0);
  ModelWeights<float> zero(tiny());
  for (auto mode : {ForwardMode::Training, ForwardMode::Inference}) {
    const auto out = forward(window, zero, mode);
    CHECK(out.shape() == Shape{3, 32, 64});
    for (float v : out.data()) REQUIRE(v == 0.0f);
  }
  FieldWindow short_window = window;
  short_window.fields.pop_back();
  CHECK_THROWS_AS(forward(short_window, zero), DimensionError);
}

TEST_CASE("inference clamps, training does not") {
  std::mt19937_64 rng(62);
  const auto window = random_window(rng, 4, 6, 1);
  ModelWeights<float> w(tiny());
  randomize(w, 3, 3.0);
  const auto raw = forward(window, w, ForwardMode::Training);
  const auto clamped = forward(window, w, ForwardMode::Inference);
  bool outside = false;
  for (std::size_t i = 0; i < raw.numel(); ++i) {
    outside |= raw.data()[i] < 0.0f || raw.data()[i] > 1.0f;
    CHECK(clamped.data()[i] == std::clamp(raw.data()[i], 0.0f, 1.0f));
  }
  CHECK(outside);
}

TEST_CASE("the indicator routes to exactly one reconstruction branch") {
  std::mt19937_64 rng(63);
  for (int indicator : {0, 1}) {
    const auto window = random_window(rng, 4, 6, indicator);
    REQUIRE(window.indicator == indicator);
    ModelWeights<double> w(tiny());
    randomize(w, 4);
    const auto before = forward(window, w, ForwardMode::Training);
    const char* unused = indicator == 0 ? "head.odd.bias" : "head.even.bias";
    const char* used = indicator == 0 ? "head.even.bias" : "head.odd.bias";
    w.param(unused).mutable_data()[0] += 1.0;
    const auto same = forward(window, w, ForwardMode::Training);
    CHECK(std::equal(before.data().begin(), before.data().end(), same.data().begin()));
    w.param(used).mutable_data()[0] += 1.0;
    CHECK(forward(window, w, ForwardMode::Training).data()[0] == doctest::Approx(before.data()[0] + 1.0));
  }
}

TEST_CASE("ablation arms drop the expected modules") {
  NetworkConfig only_dfres = tiny();
  only_dfres.attention_mode = AttentionMode::None;
  ModelWeights<float> a(only_dfres);
  CHECK(a.params().count("sa.scale") == 0);
  CHECK(a.params().count("align.0.0.offset_first.weight") == 1);

  NetworkConfig only_sa = tiny();
  only_sa.alignment_enabled = false;
  ModelWeights<float> b(only_sa);
  CHECK(b.params().count("sa.scale") == 1);
  CHECK(b.params().count("fusion.weight") == 0);
  for (const auto& [name, t] : b.params()) CHECK(name.rfind("align.", 0) != 0);

  std::mt19937_64 rng(64);
  const auto window = random_window(rng, 4, 8, 0);
  CHECK(forward(window, init_weights<float>(only_sa, 1)).shape() == Shape{3, 4, 8});
  CHECK(forward(window, init_weights<float>(only_dfres, 1)).shape() == Shape{3, 4, 8});
}

TEST_CASE("initialization is deterministic and per-parameter") {
  const NetworkConfig c = tiny(16);
  const auto a = init_weights<float>(c, 5), b = init_weights<float>(c, 5), d = init_weights<float>(c, 6);
  bool differs = false;
  for (const auto& [name, t] : a.params()) {
    const auto other = b.param(name).data();
    CHECK(std::equal(t.data().begin(), t.data().end(), other.begin()));
    const auto third = d.param(name).data();
    differs |= !std::equal(t.data().begin(), t.data().end(), third.begin());
    if (name.find("offset") != std::string::npos) {
      for (float v : t.data()) REQUIRE(v == 0.0f);
    }
  }
  CHECK(differs);
  CHECK(a.param("sa.scale").item() == 0.0f);

  // Removing a module leaves every other parameter's draw unchanged.
  NetworkConfig no_sa = c;
  no_sa.attention_mode = AttentionMode::None;
  const auto e = init_weights<float>(no_sa, 5);
  for (const auto& [name, t] : e.params()) {
    const auto ref = a.param(name).data();
    CHECK(std::equal(t.data().begin(), t.data().end(), ref.begin()));
  }
}

TEST_CASE("zero offsets at init: alignment reduces to residual convs") {
  // With zero offset convs every deformable layer is an ordinary 3x3 conv,
  // so the model output must not depend on the offset conv inputs at all.
  std::mt19937_64 rng(65);
  const auto window = random_window(rng, 4, 6, 0);
  auto w = init_weights<double>(tiny(), 9);
  const auto out = forward(window, w, ForwardMode::Training);
  sum(out).backward();
  const auto g = w.param("align.0.0.offset_first.weight").grad();
  double mag = 0;
  for (double v : g) mag = std::max(mag, std::abs(v));
  CHECK(mag > 0.0);  // gradient still flows so offsets can learn
}

TEST_CASE("weight files round trip byte-identically and reject bad input") {
  testutil::TempDir dir;
  auto w = init_weights<float>(tiny(16), 7);
  w.param("sa.scale").mutable_data()[0] = 0.25f;
  save_weights(w, dir / "a.dfrs");
  const auto loaded = load_weights(dir / "a.dfrs");
  CHECK(loaded.config() == w.config());
  CHECK(param_count(loaded).total == param_count(w).total);
  for (const auto& [name, t] : w.params()) {
    const auto other = loaded.param(name).data();
    CHECK(std::equal(t.data().begin(), t.data().end(), other.begin()));
  }
  save_weights(loaded, dir / "b.dfrs");
  CHECK(file_bytes(dir / "a.dfrs") == file_bytes(dir / "b.dfrs"));

  auto bytes = file_bytes(dir / "a.dfrs");
  bytes[0] = 'X';
  std::ofstream(dir / "magic.dfrs", std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
  CHECK_THROWS_AS(load_weights(dir / "magic.dfrs"), FormatError);

  bytes = file_bytes(dir / "a.dfrs");
  bytes.resize(bytes.size() / 2);
  std::ofstream(dir / "short.dfrs", std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
  CHECK_THROWS_AS(load_weights(dir / "short.dfrs"), FormatError);
  CHECK_THROWS_AS(load_weights(dir / "missing.dfrs"), FormatError);

  NetworkConfig delta = tiny(16);
  delta.align_mode = AlignMode::DeltaDfRes;
  CHECK_THROWS_AS(load_weights(dir / "a.dfrs", delta), FormatError);
  CHECK_NOTHROW(load_weights(dir / "a.dfrs", tiny(16)));
}

TEST_CASE("deinterlace_frame keeps the reference rows bit-exact") {
  std::mt19937_64 rng(66);
  const auto w = init_weights<float>(tiny(), 8);
  for (int indicator : {0, 1}) {
    const auto window = random_window(rng, 5, 7, indicator);
    const Frame f = deinterlace_frame(window, w);
    CHECK(f.height == 10);
    const auto [odd, even] = split_fields(f);
    CHECK((indicator == 0 ? odd : even) == window.reference());
  }
}

TEST_CASE("attention mode swap keeps parameters") {
  auto w = init_weights<float>(tiny(), 1);
  const auto before = param_count(w).total;
  w.set_attention_mode(AttentionMode::ESA);
  CHECK(w.config().attention_mode == AttentionMode::ESA);
  CHECK(param_count(w).total == before);
  CHECK_THROWS_AS(w.set_attention_mode(AttentionMode::None), std::invalid_argument);
}

TEST_CASE("gradcheck of a tiny end-to-end model") {
  // Randomized weights with offset biases in (0.2, 0.4) and small offset
  // weights so every deformable
  // sample sits off the integer lattice; 64-bit throughout.
  for (auto align : {AlignMode::DfRes, AlignMode::DeltaDfRes}) {
    for (auto attention : {AttentionMode::SA, AttentionMode::ESA}) {
      CAPTURE(to_string(align));
      CAPTURE(to_string(attention));
      NetworkConfig c = tiny();
      c.align_mode = align;
      c.attention_mode = attention;
      ModelWeights<double> w(c);
      randomize(w, 10);
      for (auto& [name, t] : w.params()) {
        if (name.find("offset") == std::string::npos) continue;
        const bool bias = t.rank() == 1;
        for (auto& v : t.mutable_data()) v = bias ? 0.3 + v : 0.05 * v;
      }
      w.param("sa.scale").mutable_data()[0] = 0.5;
      std::mt19937_64 rng(67);
      const auto window = random_window(rng, 3, 4, 1);
      const auto gt = to_tensor<double>(oracle::random_frame(rng, 3, 4));
      // One tensor from each subsystem keeps the unit run short; the
      // acceptance binary checks every parameter.
      std::vector<Tensor<double>> inputs;
      for (const char* name : {"conv1.weight", "feat.0.second.weight", "align.1.0.deform_first.weight",
                               "fusion.bias", "sa.query.weight", "sa.value.weight", "sa.scale",
                               "recon.odd.0.first.weight", "head.odd.bias"}) {
        const std::string n = (align == AlignMode::DeltaDfRes && std::string(name).find("deform_first") != std::string::npos)
                                  ? "align.1.0.deform.weight"
                                  : name;
        inputs.push_back(w.param(n));
      }
      inputs.push_back(w.param(align == AlignMode::DfRes ? "align.3.0.offset_second.weight"
                                                         : "align.3.0.offset_delta.weight"));
      const auto r = gradcheck(
          [&](std::span<const Tensor<double>>) {
            return total_loss(forward(window, w, ForwardMode::Training), gt);
          },
          inputs);
      INFO("worst input " << r.worst_input << " index " << r.worst_index << " analytic "
                          << r.analytic << " numeric " << r.numeric);
      CHECK(r.max_rel_error <= 1e-3);
    }
  }
}
