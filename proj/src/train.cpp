#include "dfres/train.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dfres/errors.hpp"
#include "dfres/ops.hpp"

namespace fs = std::filesystem;

namespace dfres {

namespace {

const char* const kTrainKeys[] = {"iterations", "batch_size", "crop_size",  "learning_rate",
                                  "beta1",      "beta2",      "adam_eps",   "charbonnier_eps",
                                  "l1_weight",  "cb_weight",  "checkpoint_interval"};

std::size_t to_count(const std::string& key, const std::string& value) {
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

double to_real(const std::string& key, const std::string& value) {
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

// Shortest text that parses back to the same double.
std::string real_str(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

Field crop_field(const Field& f, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  Field out(f.parity, h, w);
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = f.at(c, top + y, left + x);
    }
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations == 0 || batch_size == 0) throw std::invalid_argument("iterations and batch_size must be positive");
  if (crop_size == 0 || crop_size % 2 != 0) throw std::invalid_argument("crop_size must be even and positive");
  for (double v : {learning_rate, adam_eps, charbonnier_eps}) {
    if (!(v > 0)) throw std::invalid_argument("learning_rate, adam_eps and charbonnier_eps must be positive");
  }
  if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1)) {
    throw std::invalid_argument("adam betas must lie in (0,1)");
  }
  if (l1_weight < 0 || cb_weight < 0 || l1_weight + cb_weight == 0) {
    throw std::invalid_argument("loss weights must be non-negative and not both zero");
  }
}

bool TrainConfig::has_key(const std::string& key) {
  for (const char* k : kTrainKeys) {
    if (key == k) return true;
  }
  return false;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "iterations") iterations = to_count(key, value);
  else if (key == "batch_size") batch_size = to_count(key, value);
  else if (key == "crop_size") crop_size = to_count(key, value);
  else if (key == "learning_rate") learning_rate = to_real(key, value);
  else if (key == "beta1") beta1 = to_real(key, value);
  else if (key == "beta2") beta2 = to_real(key, value);
  else if (key == "adam_eps") adam_eps = to_real(key, value);
  else if (key == "charbonnier_eps") charbonnier_eps = to_real(key, value);
  else if (key == "l1_weight") l1_weight = to_real(key, value);
  else if (key == "cb_weight") cb_weight = to_real(key, value);
  else if (key == "checkpoint_interval") checkpoint_interval = to_count(key, value);
  else throw std::invalid_argument("unknown training config key '" + key + "'");
}

std::string TrainConfig::serialize() const {
  std::ostringstream os;
  os << "iterations=" << iterations << '\n'
     << "batch_size=" << batch_size << '\n'
     << "crop_size=" << crop_size << '\n'
     << "learning_rate=" << real_str(learning_rate) << '\n'
     << "beta1=" << real_str(beta1) << '\n'
     << "beta2=" << real_str(beta2) << '\n'
     << "adam_eps=" << real_str(adam_eps) << '\n'
     << "charbonnier_eps=" << real_str(charbonnier_eps) << '\n'
     << "l1_weight=" << real_str(l1_weight) << '\n'
     << "cb_weight=" << real_str(cb_weight) << '\n'
     << "checkpoint_interval=" << checkpoint_interval << '\n';
  return os.str();
}

void Adam::step(std::map<std::string, Tensor<float>>& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  const float b1 = static_cast<float>(b1_), b2 = static_cast<float>(b2_);
  const float step = static_cast<float>(lr_ / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(eps_);
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(p.numel(), 0.0f);
      v.assign(p.numel(), 0.0f);
    }
    const auto g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

TrainSample make_sample(const ClipStream& stream, std::size_t center, std::size_t top,
                        std::size_t left, std::size_t crop, std::size_t num_fields) {
  if (top % 2 != 0) throw std::invalid_argument("make_sample: crop top must be even");
  FieldWindow full = make_window(stream, center, num_fields);
  const std::size_t ftop = top / 2, fh = crop / 2;
  const Field& probe = stream.fields.at(center);
  if (ftop + fh > probe.height || left + crop > probe.width) {
    throw DimensionError("make_sample: crop exceeds frame bounds");
  }
  TrainSample s;
  s.window.indicator = full.indicator;
  s.window.stream_indices = full.stream_indices;
  for (const Field& f : full.fields) s.window.fields.push_back(crop_field(f, ftop, left, fh, crop));
  s.target = crop_field(stream.ground_truth.at(center), ftop, left, fh, crop);
  return s;
}

SampleSource::SampleSource(std::span<const ClipStream> streams, std::size_t crop,
                           std::size_t num_fields, std::uint64_t seed)
    : streams_(streams), crop_(crop), num_fields_(num_fields), rng_(seed) {
  if (streams_.empty()) throw std::invalid_argument("training set is empty");
  for (const auto& s : streams_) {
    if (s.size() < 2) throw DimensionError("training clips need at least two frames");
    if (s.ground_truth.size() != s.size()) throw DimensionError("training clips need ground truth");
    if (2 * s.fields[0].height < crop_ || s.fields[0].width < crop_) {
      throw DimensionError("crop_size " + std::to_string(crop_) + " exceeds the training frames");
    }
  }
}

std::size_t SampleSource::below(std::size_t n) {
  // Multiply-shift mapping of a 64-bit draw onto [0, n); library independent.
  return static_cast<std::size_t>((static_cast<unsigned __int128>(rng_()) * n) >> 64);
}

TrainSample SampleSource::next() {
  const std::size_t want = drawn_++ % 2;  // indicator; stream positions of that parity
  const ClipStream& s = streams_[below(streams_.size())];
  const std::size_t slots = (s.size() - want + 1) / 2;
  const std::size_t center = 2 * below(slots) + want;
  const std::size_t frame_h = 2 * s.fields[0].height, frame_w = s.fields[0].width;
  const std::size_t top = 2 * below((frame_h - crop_) / 2 + 1);
  const std::size_t left = below(frame_w - crop_ + 1);
  return make_sample(s, center, top, left, crop_, num_fields_);
}

TrainResult train(ModelWeights<float>& weights, std::span<const ClipStream> streams,
                  const TrainConfig& cfg, const TrainOutputs& outputs,
                  const TrainProgress& progress) {
  cfg.validate();
  SampleSource source(streams, cfg.crop_size, weights.config().num_fields, cfg.seed);
  Adam adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  const LossWeights lw = cfg.loss_weights();
  const float item_scale = 1.0f / static_cast<float>(cfg.batch_size);

  std::ofstream loss_csv;
  if (!outputs.loss_csv.empty()) {
    loss_csv.open(outputs.loss_csv, std::ios::trunc);
    if (!loss_csv) throw FormatError(outputs.loss_csv.string() + ": cannot open for writing");
    loss_csv << "iteration,loss\n";
  }
  if (!outputs.checkpoint_dir.empty()) fs::create_directories(outputs.checkpoint_dir);

  TrainResult result;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    weights.zero_grad();
    double batch_loss = 0.0;
    try {
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const TrainSample sample = source.next();
        const Tensor<float> pred = forward(sample.window, weights, ForwardMode::Training);
        const Tensor<float> loss = total_loss(pred, to_tensor<float>(sample.target), lw);
        if (!std::isfinite(loss.item())) throw NumericalError("loss is not finite");
        batch_loss += static_cast<double>(loss.item());
        mul_scalar(loss, item_scale).backward();
      }
    } catch (const NumericalError& e) {
      throw NumericalError("training diverged at iteration " + std::to_string(it) +
                           " (learning_rate=" + real_str(cfg.learning_rate) + "): " + e.what());
    }
    adam.step(weights.params());
    batch_loss /= static_cast<double>(cfg.batch_size);
    result.losses.push_back(batch_loss);
    if (loss_csv.is_open()) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%zu,%.9g\n", it, batch_loss);
      loss_csv << buf;
    }
    if (cfg.checkpoint_interval > 0 && !outputs.checkpoint_dir.empty() &&
        it % cfg.checkpoint_interval == 0) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_%06zu.dfrs", it);
      save_weights(weights, outputs.checkpoint_dir / name);
    }
    if (progress) progress(it, batch_loss);
  }
  if (loss_csv.is_open()) {
    loss_csv.flush();
    if (!loss_csv) throw FormatError(outputs.loss_csv.string() + ": write failed");
  }
  return result;
}

}  // namespace dfres
