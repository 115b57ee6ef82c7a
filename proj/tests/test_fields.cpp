#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "dfres/errors.hpp"
#include "dfres/fields.hpp"
#include "dfres/ppm.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace dfres;

namespace {

// Frame whose row r is filled with value (r+1)/10 in every channel.
Frame row_coded(std::size_t h, std::size_t w) {
  Frame f(h, w);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) f.at(c, y, x) = float(y + 1) / 10.0f;
    }
  }
  return f;
}

float row_value(const Image& img, std::size_t row) { return img.at(0, row, 0); }

}  // namespace

TEST_CASE("split_fields assigns rows by parity") {
  const auto [odd, even] = split_fields(row_coded(4, 3));
  CHECK(odd.parity == Parity::Odd);
  CHECK(even.parity == Parity::Even);
  REQUIRE(odd.height == 2);
  CHECK(row_value(odd, 0) == 0.1f);
  CHECK(row_value(odd, 1) == 0.3f);
  CHECK(row_value(even, 0) == 0.2f);
  CHECK(row_value(even, 1) == 0.4f);

  const auto [o2, e2] = split_fields(row_coded(2, 3));
  CHECK(o2.height == 1);
  CHECK(row_value(o2, 0) == 0.1f);
  CHECK(row_value(e2, 0) == 0.2f);

  CHECK_THROWS_AS(split_fields(Frame(3, 3)), DimensionError);
}

TEST_CASE("weave places the reference by indicator and inverts split") {
  const Frame f = row_coded(4, 2);
  const auto [odd, even] = split_fields(f);
  CHECK(weave(odd, even, 0) == f);
  CHECK(weave(even, odd, 1) == f);
  const auto [o, e] = split_fields(weave(odd, even, 0));
  CHECK(o == odd);
  CHECK(e == even);
  CHECK_THROWS_AS(weave(odd, Field(Parity::Even, 3, 2), 0), DimensionError);
}

TEST_CASE("weave(split_fields(f)) is the identity on random frames") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 100; ++i) {
    const Frame f = oracle::random_frame(rng, 2 * (1 + rng() % 16), 1 + rng() % 24);
    const auto [odd, even] = split_fields(f);
    REQUIRE(weave(odd, even, 0) == f);
  }
}

TEST_CASE("synth_interlaced alternates parity and keeps the opposite field as ground truth") {
  std::mt19937_64 rng(32);
  std::vector<Frame> clip;
  for (int i = 0; i < 5; ++i) clip.push_back(oracle::random_frame(rng, 6, 4));
  const ClipStream s = synth_interlaced(clip);
  REQUIRE(s.size() == 5);
  const char expect[] = "OEOEO";
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(parity_char(s.fields[i].parity) == expect[i]);
    CHECK(s.source_index[i] == i);
    const auto [o, e] = split_fields(clip[i]);
    CHECK(s.fields[i] == (i % 2 == 0 ? o : e));
    CHECK(s.ground_truth[i] == (i % 2 == 0 ? e : o));
  }
}

TEST_CASE("static clip: weaving with a neighbour field reconstructs the frame") {
  std::mt19937_64 rng(33);
  const Frame f = oracle::random_frame(rng, 8, 5);
  const std::vector<Frame> clip(4, f);
  const ClipStream s = synth_interlaced(clip);
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    for (std::size_t j : {i - 1, i + 1}) {
      CHECK(weave(s.fields[i], s.fields[j], indicator_for(s.fields[i].parity)) == f);
    }
  }
}

TEST_CASE("make_window clamps at the stream edges") {
  std::mt19937_64 rng(34);
  std::vector<Frame> clip;
  for (int i = 0; i < 5; ++i) clip.push_back(oracle::random_frame(rng, 4, 4));
  const ClipStream s = synth_interlaced(clip);

  auto w0 = make_window(s, 0);
  CHECK(w0.stream_indices == std::vector<std::size_t>{0, 0, 0, 1, 2});
  auto w2 = make_window(s, 2);
  CHECK(w2.stream_indices == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(w2.indicator == 0);
  CHECK(w2.reference() == s.fields[2]);
  CHECK(make_window(s, 3).indicator == 1);
  CHECK(make_window(s, 4).stream_indices == std::vector<std::size_t>{2, 3, 4, 4, 4});

  const ClipStream one = synth_interlaced(std::vector<Frame>{clip[0]});
  CHECK(one.size() == 1);
  CHECK(make_window(one, 0).stream_indices == std::vector<std::size_t>{0, 0, 0, 0, 0});
  CHECK_THROWS(make_window(s, 5));
}

TEST_CASE("crop and tensor conversion") {
  const Frame f = row_coded(6, 5);
  const Frame c = crop(f, 2, 1, 2, 3);
  CHECK(c.height == 2);
  CHECK(c.width == 3);
  CHECK(row_value(c, 0) == 0.3f);
  CHECK_THROWS_AS(crop(f, 5, 0, 2, 2), DimensionError);

  const auto t = to_tensor<float>(f);
  CHECK(t.shape() == Shape{3, 6, 5});
  const Field back = to_field(t.data(), 6, 5, Parity::Even);
  CHECK(back.pixels == f.pixels);
  CHECK(back.parity == Parity::Even);
}

TEST_CASE("8-bit quantization") {
  CHECK(to_byte(0.0f) == 0);
  CHECK(to_byte(1.0f) == 255);
  CHECK(to_byte(-0.5f) == 0);
  CHECK(to_byte(2.0f) == 255);
  CHECK(to_byte(0.5f) == 128);
  for (int b = 0; b < 256; ++b) CHECK(to_byte(from_byte(std::uint8_t(b))) == b);
}

TEST_CASE("ppm round trip and malformed files") {
  testutil::TempDir dir;
  std::mt19937_64 rng(35);
  Image img = oracle::random_frame(rng, 5, 7);
  for (auto& v : img.pixels) v = from_byte(to_byte(v));
  write_ppm(dir / "a.ppm", img);
  CHECK(read_ppm(dir / "a.ppm") == img);

  {
    std::ofstream(dir / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
  }
  CHECK_THROWS_AS(read_ppm(dir / "bad.ppm"), FormatError);
  {
    std::ofstream(dir / "short.ppm", std::ios::binary) << "P6\n4 4\n255\nabc";
  }
  CHECK_THROWS_AS(read_ppm(dir / "short.ppm"), FormatError);
  CHECK_THROWS_AS(read_ppm(dir / "missing.ppm"), FormatError);
}

TEST_CASE("clip and field stream directories") {
  testutil::TempDir dir;
  std::mt19937_64 rng(36);
  std::vector<Frame> clip;
  for (int i = 0; i < 10; ++i) {
    Frame f = oracle::random_frame(rng, 4, 6);
    for (auto& v : f.pixels) v = from_byte(to_byte(v));
    clip.push_back(f);
  }
  write_clip(dir / "clip", clip);
  CHECK(frame_file_name(7) == "000007.ppm");
  CHECK(read_clip(dir / "clip") == clip);

  const ClipStream s = synth_interlaced(clip);
  write_field_stream(dir / "fields", s);
  CHECK(list_ppm_files(dir / "fields").size() == 10);
  const ClipStream back = read_field_stream(dir / "fields");
  REQUIRE(back.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(back.fields[i] == s.fields[i]);
    CHECK(back.source_index[i] == i);
  }
  CHECK(back.ground_truth.empty());

  std::filesystem::create_directories(dir / "empty");
  try {
    (void)read_clip(dir / "empty");
    FAIL("expected an error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("no frames") != std::string::npos);
  }
}
