#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dfres/fields.hpp"
#include "dfres/losses.hpp"
#include "dfres/model.hpp"

namespace dfres {

struct TrainConfig {
  std::size_t iterations = 2000;
  std::size_t batch_size = 4;
  std::size_t crop_size = 64;  // square, even
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double charbonnier_eps = kCharbonnierEps;
  double l1_weight = 1.0;
  double cb_weight = 0.1;
  // 0 disables checkpoints.
  std::size_t checkpoint_interval = 0;
  // Drives crop/sample selection. Not a `key=value` key; set from --seed.
  std::uint64_t seed = 0;

  void validate() const;
  void set(const std::string& key, const std::string& value);
  static bool has_key(const std::string& key);
  std::string serialize() const;
  LossWeights loss_weights() const { return {l1_weight, cb_weight, charbonnier_eps}; }
};

// Adam over a fixed, name-ordered parameter set.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(std::map<std::string, Tensor<float>>& params);
  std::size_t steps() const { return t_; }
  double learning_rate() const { return lr_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<float>> m_, v_;
};

struct TrainSample {
  FieldWindow window;
  Field target;  // ground-truth opposite-parity field
};

// Window centred on `center` cropped to crop x crop frame pixels at (top, left);
// top must be even so field rows map cleanly.
TrainSample make_sample(const ClipStream& stream, std::size_t center, std::size_t top,
                        std::size_t left, std::size_t crop, std::size_t num_fields);

// Random even-aligned crops; the k-th draw has indicator k % 2 so both
// reconstruction branches see the same number of samples.
class SampleSource {
 public:
  SampleSource(std::span<const ClipStream> streams, std::size_t crop, std::size_t num_fields,
               std::uint64_t seed);
  TrainSample next();

 private:
  std::size_t below(std::size_t n);

  std::span<const ClipStream> streams_;
  std::size_t crop_, num_fields_;
  std::mt19937_64 rng_;
  std::size_t drawn_ = 0;
};

struct TrainOutputs {
  std::filesystem::path loss_csv;        // `iteration,loss`; empty to skip
  std::filesystem::path checkpoint_dir;  // empty to skip
};

struct TrainResult {
  std::vector<double> losses;  // mean batch loss per iteration
};

using TrainProgress = std::function<void(std::size_t iteration, double loss)>;

// Trains `weights` in place. A non-finite loss or activation throws
// NumericalError naming the iteration and learning rate.
TrainResult train(ModelWeights<float>& weights, std::span<const ClipStream> streams,
                  const TrainConfig& config, const TrainOutputs& outputs = {},
                  const TrainProgress& progress = {});

}  // namespace dfres
