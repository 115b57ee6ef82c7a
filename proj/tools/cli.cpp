#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dfres/attention_bench.hpp"
#include "dfres/baselines.hpp"
#include "dfres/errors.hpp"
#include "dfres/evaluate.hpp"
#include "dfres/kernels.hpp"
#include "dfres/model.hpp"
#include "dfres/ppm.hpp"
#include "dfres/synthetic.hpp"
#include "dfres/train.hpp"

namespace fs = std::filesystem;

namespace dfres::cli {

namespace {

// Thrown for bad flags or override keys; mapped to kUsage.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 0;
  int workers = 1;
  std::vector<std::string> overrides;
};

std::vector<std::pair<std::string, std::string>> split_overrides(const std::vector<std::string>& raw) {
  std::vector<std::pair<std::string, std::string>> kv;
  for (const auto& item : raw) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + item + "'");
    kv.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  return kv;
}

void reject_overrides(const Common& common, const std::string& command) {
  if (!common.overrides.empty()) throw UsageError(command + " takes no --set overrides");
}

// Effective configuration of a run, written next to its primary output.
void write_sidecar(const fs::path& path, const std::string& command,
                   const std::vector<std::pair<std::string, std::string>>& args,
                   const Common& common, const std::string& config_text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out << "command=" << command << '\n';
  for (const auto& [k, v] : args) out << k << '=' << v << '\n';
  out << "seed=" << common.seed << '\n' << "workers=" << common.workers << '\n';
  for (const auto& o : common.overrides) out << "set " << o << '\n';
  out << config_text;
  if (!out) throw FormatError(path.string() + ": write failed");
}

fs::path sidecar_for_file(const fs::path& output) {
  fs::path p = output;
  p += ".config.txt";
  return p;
}

// Clip directories under `dir`: its subdirectories holding PPM frames, or
// `dir` itself when it holds frames directly.
std::vector<fs::path> clip_dirs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError(dir.string() + ": not a directory");
  std::vector<fs::path> dirs;
  bool has_frames = false;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") has_frames = true;
  }
  if (has_frames) return {dir};
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw FormatError(dir.string() + ": no frames and no clip directories");
  return dirs;
}

std::vector<Frame> load_clip(const fs::path& dir) {
  std::vector<Frame> frames;
  for (const auto& path : list_ppm_files(dir)) {
    Frame f(read_ppm(path));
    if (f.height % 2 != 0) {
      throw FormatError(path.string() + ": frame height " + std::to_string(f.height) +
                        " is odd; fields need an even height");
    }
    if (!frames.empty() && (f.height != frames[0].height || f.width != frames[0].width)) {
      throw FormatError(path.string() + ": frame size differs from the first frame");
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

// Inference-time overrides: only the attention path may be swapped, since
// every other key would change the parameter layout.
void apply_inference_overrides(ModelWeights<float>& weights, const Common& common) {
  for (const auto& [k, v] : split_overrides(common.overrides)) {
    if (k != "attention_mode") {
      throw UsageError("only attention_mode may be overridden at inference, got '" + k + "'");
    }
    const AttentionMode mode = attention_mode_from_string(v);
    if ((mode == AttentionMode::None) != (weights.config().attention_mode == AttentionMode::None)) {
      throw UsageError("attention_mode can only switch between sa and esa at inference");
    }
    weights.set_attention_mode(mode);
  }
}

struct MethodHolder {
  Method method;
  std::unique_ptr<ModelWeights<float>> weights;
  std::string config_text;
};

// `baseline=<name>`, `gt`, or a weight file path.
MethodHolder resolve_method(const std::string& spec, const Common& common, bool allow_gt) {
  MethodHolder h;
  const std::string prefix = "baseline=";
  if (spec.rfind(prefix, 0) == 0) {
    reject_overrides(common, "a baseline method");
    h.method = Method::classical(baseline_from_string(spec.substr(prefix.size())));
    h.config_text = "method=" + spec + "\n";
  } else if (spec == "gt") {
    if (!allow_gt) throw UsageError("method 'gt' needs ground truth and is only valid for eval");
    reject_overrides(common, "the gt method");
    h.method = Method::ground_truth();
    h.config_text = "method=gt\n";
  } else {
    h.weights = std::make_unique<ModelWeights<float>>(load_weights(spec));
    apply_inference_overrides(*h.weights, common);
    h.method = Method::model(*h.weights);
    h.config_text = "method=weights\n" + h.weights->config().serialize();
  }
  return h;
}

int cmd_synth(const fs::path& in_dir, const fs::path& out_dir, const Common& common,
              std::ostream& out) {
  reject_overrides(common, "synth");
  const std::vector<Frame> clip = load_clip(in_dir);
  const ClipStream stream = synth_interlaced(clip);
  write_field_stream(out_dir, stream);
  write_sidecar(out_dir / "run_config.txt", "synth", {{"input", in_dir.string()}, {"output", out_dir.string()}},
                common, "");
  out << "wrote " << stream.size() << " fields to " << out_dir.string() << '\n';
  return kOk;
}

int cmd_gen_data(const fs::path& out_dir, const Common& common, std::ostream& out) {
  SyntheticConfig cfg;
  cfg.seed = common.seed;
  for (const auto& [k, v] : split_overrides(common.overrides)) {
    if (!SyntheticConfig::has_key(k)) throw UsageError("unknown key '" + k + "' for gen-data");
    cfg.set(k, v);
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  write_synthetic_set(out_dir, cfg);
  write_sidecar(out_dir / "run_config.txt", "gen-data", {{"output", out_dir.string()}}, common,
                cfg.serialize());
  out << "wrote " << cfg.clips << " clips of " << cfg.frames << " frames to " << out_dir.string()
      << '\n';
  return kOk;
}

int cmd_train(const fs::path& data_dir, const fs::path& out_weights, const fs::path& loss_path,
              const fs::path& checkpoint_dir, const Common& common, std::ostream& out) {
  NetworkConfig net;
  TrainConfig train_cfg;
  for (const auto& [k, v] : split_overrides(common.overrides)) {
    if (NetworkConfig::has_key(k) && k != "seed") net.set(k, v);
    else if (TrainConfig::has_key(k)) train_cfg.set(k, v);
    else throw UsageError("unknown key '" + k + "' for train (use --seed for the seed)");
  }
  net.seed = common.seed;
  train_cfg.seed = common.seed;
  try {
    net.validate();
    train_cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  std::vector<ClipStream> streams;
  for (const auto& dir : clip_dirs(data_dir)) streams.push_back(synth_interlaced(load_clip(dir)));

  fs::path loss_csv = loss_path;
  if (loss_csv.empty()) {
    loss_csv = out_weights;
    loss_csv += ".loss.csv";
  }
  if (out_weights.has_parent_path()) fs::create_directories(out_weights.parent_path());
  ModelWeights<float> weights = init_weights<float>(net, net.seed);
  const std::size_t report_every = std::max<std::size_t>(1, train_cfg.iterations / 20);
  train(weights, streams, train_cfg, {loss_csv, checkpoint_dir}, [&](std::size_t it, double loss) {
    if (it % report_every == 0 || it == train_cfg.iterations) {
      char line[96];
      std::snprintf(line, sizeof line, "iteration %zu loss %.6f\n", it, loss);
      out << line << std::flush;
    }
  });
  save_weights(weights, out_weights);
  write_sidecar(sidecar_for_file(out_weights), "train",
                {{"data", data_dir.string()}, {"weights", out_weights.string()}, {"loss_csv", loss_csv.string()}},
                common, net.serialize() + train_cfg.serialize());
  out << "saved " << out_weights.string() << " (" << param_count(weights).total << " parameters)\n";
  return kOk;
}

int cmd_deinterlace(const std::string& method_spec, const fs::path& fields_dir,
                    const fs::path& out_dir, const Common& common, std::ostream& out) {
  const MethodHolder h = resolve_method(method_spec, common, false);
  const ClipStream stream = read_field_stream(fields_dir);
  for (std::size_t i = 1; i < stream.size(); ++i) {
    if (stream.fields[i].parity == stream.fields[i - 1].parity) {
      throw FormatError(fields_dir.string() + ": field " + std::to_string(i) +
                        " repeats the parity of its predecessor");
    }
  }
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    frames.push_back(deinterlace_at(h.method, stream, {}, i));
  }
  write_clip(out_dir, frames);
  write_sidecar(out_dir / "run_config.txt", "deinterlace",
                {{"method", method_spec}, {"fields", fields_dir.string()}, {"output", out_dir.string()}},
                common, h.config_text);
  out << "wrote " << frames.size() << " frames to " << out_dir.string() << '\n';
  return kOk;
}

int cmd_eval(const fs::path& gt_dir, const std::string& method_spec, const fs::path& report,
             const Common& common, std::ostream& out) {
  const MethodHolder h = resolve_method(method_spec, common, true);
  if (!fs::is_directory(gt_dir)) throw FormatError(gt_dir.string() + ": ground-truth directory missing");
  const std::vector<Frame> clip = load_clip(gt_dir);
  if (report.has_parent_path()) fs::create_directories(report.parent_path());
  const MetricReport r = eval_clip(h.method, clip, report);
  write_sidecar(sidecar_for_file(report), "eval",
                {{"ground_truth", gt_dir.string()}, {"method", method_spec}, {"report", report.string()}},
                common, h.config_text);
  out << "frames=" << r.frames.size() << " excluded_edge_frames=" << r.excluded_edge_frames
      << " mean_psnr_db=" << format_metric(r.mean_psnr()) << " mean_ssim=" << format_metric(r.mean_ssim())
      << '\n';
  return kOk;
}

int cmd_bench_attn(const std::vector<std::size_t>& sizes, std::size_t channels, std::size_t repeats,
                   const fs::path& csv, const Common& common, std::ostream& out) {
  reject_overrides(common, "bench-attn");
  if (sizes.empty()) throw UsageError("bench-attn needs at least one size");
  const AttentionBenchResult r = bench_attention(sizes, channels, repeats, common.seed);
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  write_bench_csv(csv, r);
  std::ostringstream sz;
  for (std::size_t i = 0; i < sizes.size(); ++i) sz << (i ? "," : "") << sizes[i];
  write_sidecar(sidecar_for_file(csv), "bench-attn",
                {{"sizes", sz.str()}, {"channels", std::to_string(channels)},
                 {"repeats", std::to_string(repeats)}, {"csv", csv.string()}},
                common, "");
  for (const auto& row : r.rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-3s n=%-6zu %.6f s  peak %zu B  max|SA-ESA| %.3g\n",
                  to_string(row.mode).c_str(), row.n, row.seconds, row.peak_bytes, row.max_abs_dev);
    out << line;
  }
  if (sizes.size() >= 2) {
    char line[96];
    std::snprintf(line, sizeof line, "sa_exponent=%.3f esa_exponent=%.3f\n", r.sa_exponent, r.esa_exponent);
    out << line;
  }
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-field video deinterlacing with deformable alignment and self-attention"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Random seed")->capture_default_str();
    sub->add_option("--workers", common.workers, "Worker threads; results do not depend on the count")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--set", common.overrides, "key=value configuration override (repeatable)")
        ->take_all();
  };

  std::string in_dir, out_dir, data_dir, weights_path, loss_path, ckpt_dir, method, fields_dir,
      gt_dir, report, csv = "bench_attn.csv";
  std::vector<std::size_t> sizes = {1024, 2048, 4096};
  std::size_t channels = 64, repeats = 3;

  auto* synth = app.add_subcommand("synth", "Split progressive PPM frames into an interlaced field stream");
  synth->add_option("progressive_dir", in_dir)->required();
  synth->add_option("out_dir", out_dir)->required();
  add_common(synth);

  auto* gen = app.add_subcommand("gen-data", "Write synthetic moving-rectangle clips");
  gen->add_option("out_dir", out_dir)->required();
  add_common(gen);

  auto* train_cmd = app.add_subcommand("train", "Train a model on a directory of clips");
  train_cmd->add_option("data_dir", data_dir)->required();
  train_cmd->add_option("out_weights", weights_path)->required();
  train_cmd->add_option("--loss-csv", loss_path, "Loss curve path (default <out_weights>.loss.csv)");
  train_cmd->add_option("--checkpoint-dir", ckpt_dir, "Directory for periodic checkpoints");
  add_common(train_cmd);

  auto* deint = app.add_subcommand("deinterlace", "Produce one progressive frame per field");
  deint->add_option("method", method, "Weight file or baseline=<bob|linear|weave|temporal_mean>")->required();
  deint->add_option("fields_dir", fields_dir)->required();
  deint->add_option("out_dir", out_dir)->required();
  add_common(deint);

  auto* eval = app.add_subcommand("eval", "Score a method against a progressive clip");
  eval->add_option("gt_dir", gt_dir)->required();
  eval->add_option("method", method, "Weight file, baseline=<name> or gt")->required();
  eval->add_option("report_csv", report)->required();
  add_common(eval);

  auto* bench = app.add_subcommand("bench-attn", "Time SA against ESA over pixel counts");
  bench->add_option("--sizes", sizes, "Pixel counts")->delimiter(',')->capture_default_str();
  bench->add_option("--channels", channels)->capture_default_str();
  bench->add_option("--repeats", repeats)->capture_default_str();
  bench->add_option("--csv", csv)->capture_default_str();
  add_common(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    kernels::set_num_threads(common.workers);
    if (*synth) return cmd_synth(in_dir, out_dir, common, out);
    if (*gen) return cmd_gen_data(out_dir, common, out);
    if (*train_cmd) return cmd_train(data_dir, weights_path, loss_path, ckpt_dir, common, out);
    if (*deint) return cmd_deinterlace(method, fields_dir, out_dir, common, out);
    if (*eval) return cmd_eval(gt_dir, method, report, common, out);
    if (*bench) return cmd_bench_attn(sizes, channels, repeats, csv, common, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const DimensionError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace dfres::cli
