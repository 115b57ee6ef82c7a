#include "dfres/synthetic.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dfres/layers.hpp"
#include "dfres/ppm.hpp"

namespace dfres {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Texture {
  double base[3];
  double amp[3];
  double fx[2], fy[2], phase[2];

  double value(std::size_t c, double u, double v) const {
    const double a = std::sin(kTwoPi * (fx[0] * u + fy[0] * v) + phase[0]);
    const double b = std::sin(kTwoPi * (fx[1] * u + fy[1] * v) + phase[1] + c);
    return base[c] + amp[c] * (0.6 * a + 0.4 * b);
  }
};

struct Rect {
  Texture texture;
  double x0, y0, w, h, vx, vy;
};

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) {
    // Plain 53-bit mapping keeps the stream identical across standard libraries.
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }
  double sign() { return uniform(0, 1) < 0.5 ? -1.0 : 1.0; }

 private:
  std::mt19937_64 rng_;
};

// Vertical frequencies are drawn from [fy_lo, fy_hi], horizontal ones from
// [0.02, max_freq].
Texture random_texture(Sampler& s, double max_freq, double fy_lo, double fy_hi) {
  Texture t{};
  for (int c = 0; c < 3; ++c) {
    t.base[c] = s.uniform(0.2, 0.8);
    t.amp[c] = s.uniform(0.08, 0.2);
  }
  for (int k = 0; k < 2; ++k) {
    t.fx[k] = s.sign() * s.uniform(0.02, max_freq);
    t.fy[k] = s.sign() * s.uniform(fy_lo, fy_hi);
    t.phase[k] = s.uniform(0, kTwoPi);
  }
  return t;
}

// Wraps a coordinate into [0, period).
double wrap(double v, double period) {
  const double r = std::fmod(v, period);
  return r < 0 ? r + period : r;
}

}  // namespace

namespace {

const char* const kSynthKeys[] = {"clips",         "frames",
                                  "height",        "width",
                                  "min_rects",     "max_rects",
                                  "min_speed",     "max_speed",
                                  "max_frequency", "background_min_frequency",
                                  "background_max_frequency"};

std::size_t count_value(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (value.empty() || value[0] == '-' || pos != value.size()) {
    throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
  }
  return static_cast<std::size_t>(v);
}

double real_value(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (value.empty() || pos != value.size() || !std::isfinite(v)) {
    throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
  }
  return v;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (clips == 0 || frames == 0) throw std::invalid_argument("clips and frames must be positive");
  if (height == 0 || height % 2 != 0 || width == 0) {
    throw std::invalid_argument("height must be even and positive, width positive");
  }
  if (min_rects > max_rects) throw std::invalid_argument("min_rects exceeds max_rects");
  if (!(min_speed >= 0 && min_speed <= max_speed)) throw std::invalid_argument("bad speed range");
  if (!(max_frequency > 0.02)) throw std::invalid_argument("max_frequency must exceed 0.02");
  if (!(background_min_frequency > 0 && background_min_frequency <= background_max_frequency &&
        background_max_frequency <= 0.5)) {
    throw std::invalid_argument("background frequencies must satisfy 0 < min <= max <= 0.5");
  }
}

bool SyntheticConfig::has_key(const std::string& key) {
  for (const char* k : kSynthKeys) {
    if (key == k) return true;
  }
  return false;
}

void SyntheticConfig::set(const std::string& key, const std::string& value) {
  if (key == "clips") clips = count_value(key, value);
  else if (key == "frames") frames = count_value(key, value);
  else if (key == "height") height = count_value(key, value);
  else if (key == "width") width = count_value(key, value);
  else if (key == "min_rects") min_rects = count_value(key, value);
  else if (key == "max_rects") max_rects = count_value(key, value);
  else if (key == "min_speed") min_speed = real_value(key, value);
  else if (key == "max_speed") max_speed = real_value(key, value);
  else if (key == "max_frequency") max_frequency = real_value(key, value);
  else if (key == "background_min_frequency") background_min_frequency = real_value(key, value);
  else if (key == "background_max_frequency") background_max_frequency = real_value(key, value);
  else throw std::invalid_argument("unknown synthetic config key '" + key + "'");
}

std::string SyntheticConfig::serialize() const {
  auto real = [](double v) {
    char buf[40];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  };
  std::ostringstream out;
  out << "clips=" << clips << "\nframes=" << frames << "\nheight=" << height << "\nwidth=" << width
      << "\nmin_rects=" << min_rects << "\nmax_rects=" << max_rects
      << "\nmin_speed=" << real(min_speed) << "\nmax_speed=" << real(max_speed)
      << "\nmax_frequency=" << real(max_frequency)
      << "\nbackground_min_frequency=" << real(background_min_frequency)
      << "\nbackground_max_frequency=" << real(background_max_frequency) << '\n';
  return out.str();
}

std::string clip_dir_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip_%02zu", index);
  return buf;
}

std::vector<Frame> synthetic_clip(const SyntheticConfig& cfg, std::size_t clip_index) {
  Sampler s(name_seed(cfg.seed, clip_dir_name(clip_index)));
  const Texture background = random_texture(s, cfg.max_frequency, cfg.background_min_frequency,
                                            cfg.background_max_frequency);
  const double speed = s.uniform(cfg.min_speed, cfg.max_speed);
  const std::size_t span = cfg.max_rects - cfg.min_rects + 1;
  const std::size_t count =
      cfg.min_rects + std::min(span - 1, static_cast<std::size_t>(s.uniform(0, double(span))));
  const double W = static_cast<double>(cfg.width), H = static_cast<double>(cfg.height);

  std::vector<Rect> rects;
  for (std::size_t i = 0; i < count; ++i) {
    Rect r;
    r.texture = random_texture(s, cfg.max_frequency, 0.02, cfg.max_frequency);
    r.w = s.uniform(0.2, 0.45) * W;
    r.h = s.uniform(0.2, 0.45) * H;
    r.x0 = s.uniform(0, W);
    r.y0 = s.uniform(0, H);
    const double angle = s.uniform(0, kTwoPi);
    r.vx = speed * std::cos(angle);
    r.vy = speed * std::sin(angle);
    rects.push_back(r);
  }

  std::vector<Frame> frames;
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    Frame f(cfg.height, cfg.width);
    for (std::size_t y = 0; y < cfg.height; ++y) {
      for (std::size_t x = 0; x < cfg.width; ++x) {
        const double px = static_cast<double>(x), py = static_cast<double>(y);
        const Texture* tex = &background;
        double u = px, v = py;
        // Later rectangles are drawn on top; positions wrap around the frame.
        for (const Rect& r : rects) {
          const double lx = wrap(px - r.x0 - r.vx * double(t), W);
          const double ly = wrap(py - r.y0 - r.vy * double(t), H);
          if (lx < r.w && ly < r.h) {
            tex = &r.texture;
            u = lx;
            v = ly;
          }
        }
        for (std::size_t c = 0; c < Image::kChannels; ++c) {
          f.at(c, y, x) = from_byte(to_byte(static_cast<float>(tex->value(c, u, v))));
        }
      }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_synthetic_set(const std::filesystem::path& dir, const SyntheticConfig& cfg) {
  cfg.validate();
  for (std::size_t i = 0; i < cfg.clips; ++i) {
    write_clip(dir / clip_dir_name(i), synthetic_clip(cfg, i));
  }
}

}  // namespace dfres
