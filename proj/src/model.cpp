#include "dfres/model.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "dfres/errors.hpp"
#include "dfres/ops.hpp"

namespace dfres {

std::string to_string(AlignMode mode) {
  switch (mode) {
    case AlignMode::DfRes: return "dfres";
    case AlignMode::DeltaDfRes: return "delta_dfres";
    case AlignMode::RegularOffsets: return "regular_offsets";
  }
  return "?";
}

AlignMode align_mode_from_string(const std::string& name) {
  if (name == "dfres") return AlignMode::DfRes;
  if (name == "delta_dfres") return AlignMode::DeltaDfRes;
  if (name == "regular_offsets") return AlignMode::RegularOffsets;
  throw std::invalid_argument("unknown align mode '" + name + "'");
}

namespace {

const char* const kConfigKeys[] = {"num_fields",  "base_channels", "qk_channels",
                                   "feat_blocks", "align_blocks",  "recon_blocks",
                                   "align_mode",  "attention_mode", "alignment_enabled",
                                   "seed"};

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != value.size() || value.empty() || value[0] == '-') {
    throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
  }
  return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
}

}  // namespace

void NetworkConfig::validate() const {
  if (num_fields < 3 || num_fields % 2 == 0) throw std::invalid_argument("num_fields must be odd and >= 3");
  if (base_channels == 0 || base_channels % 8 != 0) {
    throw std::invalid_argument("base_channels must be a positive multiple of 8");
  }
  if (qk_channels != base_channels / 8) throw std::invalid_argument("qk_channels must equal base_channels/8");
  if (alignment_enabled && align_blocks == 0) {
    throw std::invalid_argument("align_blocks must be positive when alignment is enabled");
  }
  if (!alignment_enabled && attention_mode == AttentionMode::None) {
    throw std::invalid_argument("alignment disabled and attention none leaves no fusion path");
  }
}

bool NetworkConfig::has_key(const std::string& key) {
  for (const char* k : kConfigKeys) {
    if (key == k) return true;
  }
  return false;
}

void NetworkConfig::set(const std::string& key, const std::string& value) {
  if (key == "num_fields") num_fields = parse_count(key, value);
  else if (key == "base_channels") {
    base_channels = parse_count(key, value);
    qk_channels = base_channels / 8;
  }
  else if (key == "qk_channels") qk_channels = parse_count(key, value);
  else if (key == "feat_blocks") feat_blocks = parse_count(key, value);
  else if (key == "align_blocks") align_blocks = parse_count(key, value);
  else if (key == "recon_blocks") recon_blocks = parse_count(key, value);
  else if (key == "align_mode") align_mode = align_mode_from_string(value);
  else if (key == "attention_mode") attention_mode = attention_mode_from_string(value);
  else if (key == "alignment_enabled") alignment_enabled = parse_bool(key, value);
  else if (key == "seed") seed = parse_count(key, value);
  else throw std::invalid_argument("unknown network config key '" + key + "'");
}

std::string NetworkConfig::serialize() const {
  std::ostringstream os;
  os << "num_fields=" << num_fields << '\n'
     << "base_channels=" << base_channels << '\n'
     << "qk_channels=" << qk_channels << '\n'
     << "feat_blocks=" << feat_blocks << '\n'
     << "align_blocks=" << align_blocks << '\n'
     << "recon_blocks=" << recon_blocks << '\n'
     << "align_mode=" << to_string(align_mode) << '\n'
     << "attention_mode=" << to_string(attention_mode) << '\n'
     << "alignment_enabled=" << (alignment_enabled ? "true" : "false") << '\n'
     << "seed=" << seed << '\n';
  return os.str();
}

NetworkConfig NetworkConfig::parse(const std::string& text) {
  NetworkConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line without '=': " + line);
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

template <typename T>
ModelWeights<T>::ModelWeights(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  build();
}

template <typename T>
Conv<T> ModelWeights<T>::conv(const std::string& name, std::size_t in, std::size_t out,
                              std::size_t k) {
  Conv<T> c = make_conv<T>(in, out, k);
  if (!params_.emplace(name + ".weight", c.weight).second ||
      !params_.emplace(name + ".bias", c.bias).second) {
    throw std::logic_error("duplicate parameter " + name);
  }
  convs_.push_back(name);
  return c;
}

template <typename T>
ResBlock<T> ModelWeights<T>::res_block(const std::string& name, std::size_t channels) {
  ResBlock<T> b{conv(name + ".first", channels, channels, 3),
                conv(name + ".second", channels, channels, 3)};
  residual_.push_back(name + ".second");
  return b;
}

template <typename T>
DeformConv2d<T> ModelWeights<T>::deform(const std::string& name, std::size_t channels) {
  const Conv<T> c = conv(name, channels, channels, 3);
  return {c.weight, c.bias};
}

template <typename T>
void ModelWeights<T>::build() {
  const std::size_t ch = config_.base_channels;
  net_.conv1 = conv("conv1", Image::kChannels, ch, 3);
  for (std::size_t i = 0; i < config_.feat_blocks; ++i) {
    net_.features.push_back(res_block("feat." + std::to_string(i), ch));
  }

  if (config_.alignment_enabled) {
    for (std::size_t f = 0; f < config_.num_fields; ++f) {
      if (f == config_.num_fields / 2) continue;
      const std::string chain = "align." + std::to_string(f);
      if (config_.align_mode == AlignMode::DeltaDfRes) {
        auto& blocks = net_.delta_chains.emplace_back();
        for (std::size_t b = 0; b < config_.align_blocks; ++b) {
          const std::string p = chain + "." + std::to_string(b);
          DeltaDfResBlock<T> block;
          block.offset_delta = conv(p + ".offset_delta", 2 * ch, kOffsetChannels, 3);
          zero_init_.push_back(p + ".offset_delta");
          block.deform = deform(p + ".deform", ch);
          residual_.push_back(p + ".deform");
          blocks.push_back(std::move(block));
        }
      } else {
        auto& blocks = net_.dfres_chains.emplace_back();
        for (std::size_t b = 0; b < config_.align_blocks; ++b) {
          const std::string p = chain + "." + std::to_string(b);
          DfResBlock<T> block;
          block.mode = config_.align_mode == AlignMode::DfRes ? OffsetMode::DfRes : OffsetMode::Regular;
          block.offset_first = conv(p + ".offset_first", 2 * ch, kOffsetChannels, 3);
          zero_init_.push_back(p + ".offset_first");
          block.deform_first = deform(p + ".deform_first", ch);
          if (block.mode == OffsetMode::DfRes) {
            block.offset_second = conv(p + ".offset_second", 2 * ch, kOffsetChannels, 3);
            zero_init_.push_back(p + ".offset_second");
          }
          block.deform_second = deform(p + ".deform_second", ch);
          residual_.push_back(p + ".deform_second");
          blocks.push_back(std::move(block));
        }
      }
    }
    net_.fusion = conv("fusion", config_.num_fields * ch, ch, 1);
  }

  if (config_.attention_mode != AttentionMode::None) {
    net_.attention.entry = conv("sa.entry", ch, ch, 3);
    net_.attention.query = conv("sa.query", ch, config_.qk_channels, 1);
    net_.attention.key = conv("sa.key", ch, config_.qk_channels, 1);
    net_.attention.value = conv("sa.value", ch, ch, 1);
    net_.attention.scale = Tensor<T>::zeros({1}, true);
    params_.emplace("sa.scale", net_.attention.scale);
  }

  const char* branch_names[2] = {"even", "odd"};
  for (int b = 0; b < 2; ++b) {
    const std::string prefix = std::string("recon.") + branch_names[b];
    for (std::size_t i = 0; i < config_.recon_blocks; ++i) {
      net_.recon[b].push_back(res_block(prefix + "." + std::to_string(i), ch));
    }
    net_.head[b] = conv(std::string("head.") + branch_names[b], ch, Image::kChannels, 3);
  }
}

template <typename T>
ModelWeights<T> ModelWeights<T>::clone() const {
  ModelWeights<T> copy(config_);
  for (auto& [name, tensor] : copy.params_) {
    const auto src = params_.at(name).data();
    std::copy(src.begin(), src.end(), tensor.mutable_data().begin());
  }
  return copy;
}

template <typename T>
Tensor<T>& ModelWeights<T>::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

template <typename T>
const Tensor<T>& ModelWeights<T>::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

template <typename T>
void ModelWeights<T>::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

template <typename T>
void ModelWeights<T>::set_attention_mode(AttentionMode mode) {
  if ((config_.attention_mode == AttentionMode::None) != (mode == AttentionMode::None)) {
    throw std::invalid_argument("attention mode swap must stay within {sa, esa}");
  }
  config_.attention_mode = mode;
}

template <typename T>
ModelWeights<T> init_weights(const NetworkConfig& config, std::uint64_t seed) {
  ModelWeights<T> weights(config);
  const auto& zero = weights.zero_init_convs();
  const auto& residual = weights.residual_convs();
  auto contains = [](const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };
  for (const auto& name : weights.all_convs()) {
    if (contains(zero, name)) continue;
    Conv<T> c{weights.param(name + ".weight"), weights.param(name + ".bias")};
    he_init(c, name_seed(seed, name), contains(residual, name) ? 0.1 : 1.0);
  }
  return weights;
}

template <typename T>
Tensor<T> forward(const FieldWindow& window, const ModelWeights<T>& weights, ForwardMode mode) {
  const NetworkConfig& cfg = weights.config();
  const Network<T>& net = weights.net();
  if (window.fields.size() != cfg.num_fields) {
    throw DimensionError("forward: window has " + std::to_string(window.fields.size()) +
                         " fields, config expects " + std::to_string(cfg.num_fields));
  }
  const Field& ref_field = window.reference();
  for (const auto& f : window.fields) {
    if (f.height != ref_field.height || f.width != ref_field.width) {
      throw DimensionError("forward: window fields differ in size");
    }
  }
  const T slope = static_cast<T>(kAlignSlope);
  const std::size_t ref = window.reference_index();

  // Per-field shallow features; Conv_1 output of the reference also feeds SA.
  std::vector<Tensor<T>> features(cfg.num_fields);
  Tensor<T> ref_conv1;
  for (std::size_t i = 0; i < cfg.num_fields; ++i) {
    if (!cfg.alignment_enabled && i != ref) continue;
    Tensor<T> x = leaky_relu(net.conv1(to_tensor<T>(window.fields[i])), slope);
    if (i == ref) ref_conv1 = x;
    for (const auto& block : net.features) x = res_block_forward(x, block);
    features[i] = x;
  }

  Tensor<T> fused = features[ref];
  if (cfg.alignment_enabled) {
    std::vector<Tensor<T>> stack;
    std::size_t chain = 0;
    for (std::size_t i = 0; i < cfg.num_fields; ++i) {
      if (i == ref) {
        stack.push_back(features[ref]);
        continue;
      }
      Tensor<T> cur = features[i];
      if (cfg.align_mode == AlignMode::DeltaDfRes) {
        Tensor<T> acc;
        for (const auto& block : net.delta_chains[chain]) {
          auto r = delta_dfres_forward(features[ref], cur, acc, block);
          cur = r.feature;
          acc = r.offsets;
        }
      } else {
        for (const auto& block : net.dfres_chains[chain]) {
          cur = dfres_forward(features[ref], cur, block).feature;
        }
      }
      stack.push_back(cur);
      ++chain;
    }
    fused = net.fusion(concat<T>(stack, 0));
  }

  if (cfg.attention_mode != AttentionMode::None) {
    const Tensor<T> entry = net.attention.entry(ref_conv1);
    fused = add(fused, attention_forward(cfg.attention_mode, entry, net.attention));
  }

  const auto branch = static_cast<std::size_t>(branch_for(window.indicator));
  Tensor<T> x = fused;
  for (const auto& block : net.recon[branch]) x = res_block_forward(x, block);
  Tensor<T> out = net.head[branch](x);
  return mode == ForwardMode::Inference ? clamp01(out) : out;
}

Frame deinterlace_frame(const FieldWindow& window, const ModelWeights<float>& weights) {
  NoGradGuard no_grad;
  const Tensor<float> est = forward(window, weights, ForwardMode::Inference);
  const Field& ref = window.reference();
  const Field estimate = to_field(est.data(), ref.height, ref.width, opposite(ref.parity));
  return weave(ref, estimate, window.indicator);
}

template <typename T>
ParamCount param_count(const ModelWeights<T>& weights) {
  ParamCount count;
  for (const auto& [name, t] : weights.params()) {
    std::string subsystem = name.substr(0, name.find('.'));
    if (subsystem == "sa") subsystem = "attention";
    if (subsystem == "feat") subsystem = "features";
    count.by_subsystem[subsystem] += t.numel();
    count.total += t.numel();
  }
  return count;
}

template class ModelWeights<float>;
template class ModelWeights<double>;
template ModelWeights<float> init_weights<float>(const NetworkConfig&, std::uint64_t);
template ModelWeights<double> init_weights<double>(const NetworkConfig&, std::uint64_t);
template Tensor<float> forward(const FieldWindow&, const ModelWeights<float>&, ForwardMode);
template Tensor<double> forward(const FieldWindow&, const ModelWeights<double>&, ForwardMode);
template ParamCount param_count(const ModelWeights<float>&);
template ParamCount param_count(const ModelWeights<double>&);

}  // namespace dfres
