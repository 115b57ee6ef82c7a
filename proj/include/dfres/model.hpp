#pragma once

// The multi-field deinterlacing network.
//
//   fields --Conv_1--> 5 shared ResBlocks --> per-field features
//   each supporting feature --4 alignment blocks (vs. reference)--> aligned
//   concat(aligned..., reference) --Conv_2 (1x1)--> fused
//   reference Conv_1 feature --entry conv--> SA/ESA --> attention feature
//   fused + attention --indicator--> even or odd branch (ResBlocks + Conv_3)
//   --> estimated opposite-parity field, woven with the reference.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dfres/attention.hpp"
#include "dfres/deform.hpp"
#include "dfres/fields.hpp"
#include "dfres/layers.hpp"

namespace dfres {

enum class AlignMode { DfRes, DeltaDfRes, RegularOffsets };

std::string to_string(AlignMode mode);
AlignMode align_mode_from_string(const std::string& name);

struct NetworkConfig {
  std::size_t num_fields = 5;
  std::size_t base_channels = 64;
  std::size_t qk_channels = 8;
  std::size_t feat_blocks = 5;
  std::size_t align_blocks = 4;
  std::size_t recon_blocks = 7;
  AlignMode align_mode = AlignMode::DfRes;
  AttentionMode attention_mode = AttentionMode::SA;
  bool alignment_enabled = true;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on a violated invariant.
  void validate() const;
  // Throws std::invalid_argument for an unknown key or unparsable value.
  // Setting base_channels also sets qk_channels to base_channels/8.
  void set(const std::string& key, const std::string& value);
  static bool has_key(const std::string& key);
  // One `key=value` line per field, fixed order.
  std::string serialize() const;
  static NetworkConfig parse(const std::string& text);

  bool operator==(const NetworkConfig&) const = default;
};

// Which reconstruction branch produces the estimated field.
enum class Branch { Even = 0, Odd = 1 };
// indicator 0 (odd reference) -> the even field is estimated, and vice versa.
inline Branch branch_for(int indicator) { return indicator == 0 ? Branch::Even : Branch::Odd; }

template <typename T>
struct Network {
  Conv<T> conv1;
  std::vector<ResBlock<T>> features;
  // One chain per supporting field, in window order (reference skipped).
  std::vector<std::vector<DfResBlock<T>>> dfres_chains;
  std::vector<std::vector<DeltaDfResBlock<T>>> delta_chains;
  Conv<T> fusion;
  SAModule<T> attention;
  std::array<std::vector<ResBlock<T>>, 2> recon;
  std::array<Conv<T>, 2> head;
};

// All learnable parameters of a configuration, addressable by unique name
// and bound into the structured Network view. Move-only: copies would
// alias parameters; use clone() for an independent copy.
template <typename T>
class ModelWeights {
 public:
  // Zero-filled parameters for every name the configuration requires.
  explicit ModelWeights(NetworkConfig config);

  ModelWeights(ModelWeights&&) noexcept = default;
  ModelWeights& operator=(ModelWeights&&) noexcept = default;
  ModelWeights(const ModelWeights&) = delete;
  ModelWeights& operator=(const ModelWeights&) = delete;

  ModelWeights clone() const;

  const NetworkConfig& config() const { return config_; }
  const Network<T>& net() const { return net_; }
  const std::map<std::string, Tensor<T>>& params() const { return params_; }
  std::map<std::string, Tensor<T>>& params() { return params_; }
  Tensor<T>& param(const std::string& name);
  const Tensor<T>& param(const std::string& name) const;

  // Parameters whose initial value must stay zero (offset convs).
  const std::vector<std::string>& zero_init_convs() const { return zero_init_; }
  // Convs closing a residual branch (initialised with reduced gain).
  const std::vector<std::string>& residual_convs() const { return residual_; }
  const std::vector<std::string>& all_convs() const { return convs_; }

  void zero_grad();

  // Switches SA <-> ESA without touching parameters. Both modes use the
  // same parameter set.
  void set_attention_mode(AttentionMode mode);

 private:
  Conv<T> conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k);
  ResBlock<T> res_block(const std::string& name, std::size_t channels);
  DeformConv2d<T> deform(const std::string& name, std::size_t channels);
  void build();

  NetworkConfig config_;
  std::map<std::string, Tensor<T>> params_;
  Network<T> net_;
  std::vector<std::string> convs_;
  std::vector<std::string> zero_init_;
  std::vector<std::string> residual_;
};

// He fan-in init for convs (residual-closing convs at gain 0.1), zero
// biases, zero offset convs, Scale = 0. Deterministic in (config, seed);
// each parameter's draw depends only on the seed and its name.
template <typename T>
ModelWeights<T> init_weights(const NetworkConfig& config, std::uint64_t seed);

enum class ForwardMode { Training, Inference };

// Estimated opposite-parity field [3,h,w]. Inference clamps to [0,1].
template <typename T>
Tensor<T> forward(const FieldWindow& window, const ModelWeights<T>& weights,
                  ForwardMode mode = ForwardMode::Inference);

// weave(reference, forward(window), indicator), without recording a graph.
Frame deinterlace_frame(const FieldWindow& window, const ModelWeights<float>& weights);

// Learnable scalar count, total and per subsystem (conv1, features, align,
// fusion, attention, recon, head).
struct ParamCount {
  std::size_t total = 0;
  std::map<std::string, std::size_t> by_subsystem;
};

template <typename T>
ParamCount param_count(const ModelWeights<T>& weights);

// Weight file, little-endian:
//   "DFRS" | u32 version | u32 tensor count |
//   per tensor: u32 name length, UTF-8 name, u32 rank, u32 extents..., f32 data... |
//   u64 config length | config text (NetworkConfig::serialize()).
inline constexpr std::uint32_t kWeightFormatVersion = 1;

void save_weights(const ModelWeights<float>& weights, const std::filesystem::path& path);
// Rebuilds the configuration from the embedded blob.
ModelWeights<float> load_weights(const std::filesystem::path& path);
// Loads into `expected`'s parameter layout; the file's tensor names and
// shapes must match exactly.
ModelWeights<float> load_weights(const std::filesystem::path& path, const NetworkConfig& expected);

}  // namespace dfres
