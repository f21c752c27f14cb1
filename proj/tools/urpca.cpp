#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "urpca/baseline.hpp"
#include "urpca/dataset.hpp"
#include "urpca/errors.hpp"
#include "urpca/metrics.hpp"
#include "urpca/model.hpp"
#include "urpca/svg_plot.hpp"
#include "urpca/trainer.hpp"

namespace {

using namespace urpca;
namespace fs = std::filesystem;

struct MethodSpec {
  EvalMethod method = EvalMethod::kZeroing;
  std::optional<UnfoldedModel<float>> model;
  std::string label;
};

// Accepted method strings: zeroing | oracle | identity | ckpt:FILE |
// conv:K | roc-ae:K | ruc-ae:K (the latter three freshly initialized).
MethodSpec resolve_method(const std::string& s, int n_fft, std::uint64_t seed) {
  MethodSpec spec;
  spec.label = s;
  if (s == "zeroing") {
    spec.method = EvalMethod::kZeroing;
    return spec;
  }
  if (s == "oracle") {
    spec.method = EvalMethod::kOracle;
    return spec;
  }
  if (s == "identity") {
    spec.method = EvalMethod::kIdentity;
    return spec;
  }
  if (s.rfind("ckpt:", 0) == 0) {
    spec.method = EvalMethod::kModel;
    spec.model = load_checkpoint(s.substr(5));
    return spec;
  }
  const auto colon = s.rfind(':');
  if (colon != std::string::npos) {
    const std::string name = s.substr(0, colon);
    if (name == "conv" || name == "roc-ae" || name == "ruc-ae") {
      ModelConfig cfg;
      cfg.variant = parse_variant(name);
      try {
        cfg.layers = std::stoi(s.substr(colon + 1));
      } catch (const std::exception&) {
        throw CLI::ValidationError("--method", "bad layer count in '" + s + "'");
      }
      cfg.n_fft = n_fft;
      cfg.seed = seed;
      Rng rng(seed);
      spec.method = EvalMethod::kModel;
      spec.model = init_params<float>(cfg, rng);
      return spec;
    }
  }
  throw CLI::ValidationError("--method", "unknown method '" + s + "'");
}

json report_to_json(const MetricsReport& r) {
  return json{{"method", r.method},
              {"split", r.split},
              {"auc", r.auc},
              {"amp_mae_db", r.amp_mae_db},
              {"phase_mae_deg", r.phase_mae_deg},
              {"mean_delta_snr_db", r.mean_delta_snr_db},
              {"n_samples", r.n_samples},
              {"ms_per_signal", r.ms_per_signal}};
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << content;
  if (!f) throw IoError("write failed: " + path);
}

std::vector<int> parse_layer_list(const std::string& s) {
  auto to_int = [](const std::string& tok) {
    try {
      return std::stoi(tok);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--layers", "cannot parse '" + tok + "'");
    }
  };
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    const auto dots = tok.find("..");
    int lo, hi;
    if (dots == std::string::npos) {
      lo = hi = to_int(tok);
    } else {
      lo = to_int(tok.substr(0, dots));
      hi = to_int(tok.substr(dots + 2));
    }
    for (int k = lo; k <= hi; ++k) out.push_back(k);
  }
  if (out.empty()) throw CLI::ValidationError("--layers", "empty layer list");
  for (int k : out)
    if (k < 1 || k > 13) throw CLI::ValidationError("--layers", "layer counts must be in 1..13");
  return out;
}

ComplexSignal read_signal_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open signal file: " + path);
  ComplexSignal s;
  std::string line;
  while (std::getline(f, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double re, im;
    if (!(ls >> re >> im))
      throw FormatError("bad signal line '" + line + "' in " + path);
    s.emplace_back(re, im);
  }
  if (s.empty() || !is_power_of_two(s.size()))
    throw FormatError("signal length must be a nonzero power of two: " + path);
  return s;
}

// ---- subcommands ----

struct GenArgs {
  std::string out;
  std::size_t n_train = 4000, n_val = 1000, n_test = 1000;
  std::uint64_t seed = 1;
  std::string ranges_file;
};

int cmd_gen(const GenArgs& a, int threads) {
  DatasetManifest m;
  m.seed = a.seed;
  m.n_train = a.n_train;
  m.n_val = a.n_val;
  m.n_test = a.n_test;
  if (!a.ranges_file.empty()) {
    std::ifstream f(a.ranges_file);
    if (!f) throw IoError("cannot open ranges file: " + a.ranges_file);
    json j;
    try {
      f >> j;
    } catch (const json::exception& e) {
      throw FormatError("bad ranges file " + a.ranges_file + ": " + e.what());
    }
    if (j.contains("ranges") || j.contains("radar")) {
      if (j.contains("ranges")) m.ranges = ranges_from_json(j.at("ranges"));
      if (j.contains("radar")) m.radar = radar_from_json(j.at("radar"));
    } else {
      m.ranges = ranges_from_json(j);
    }
  }
  generate(a.out, m, threads);
  std::cout << "wrote " << m.n_train << "/" << m.n_val << "/" << m.n_test
            << " train/val/test records to " << a.out << " (seed " << m.seed << ")\n";
  return 0;
}

struct TrainArgs {
  std::string data, out, log_file, variant = "roc-ae";
  int layers = 8, epochs = 100, batch = 20;
  double lr = 5e-4, wd = 1e-6;
  std::uint64_t seed = 1;
};

int cmd_train(const TrainArgs& a) {
  const DatasetManifest manifest = read_manifest(a.data);
  const auto train_pairs = load_split(a.data, "train");
  const auto val_pairs = load_split(a.data, "val");
  std::cout << "preparing " << train_pairs.size() << " train / " << val_pairs.size()
            << " val spectra\n";
  const auto train_set = prepare_split(train_pairs, manifest.radar);
  const auto val_set = prepare_split(val_pairs, manifest.radar);

  ModelConfig mc;
  mc.variant = parse_variant(a.variant);
  mc.layers = a.layers;
  mc.n_fft = manifest.radar.n_samples;
  mc.seed = a.seed;
  Rng rng(a.seed);
  UnfoldedModel<float> model = init_params<float>(mc, rng);

  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch = a.batch;
  tc.lr = a.lr;
  tc.weight_decay = a.wd;
  tc.seed = a.seed;
  tc.log = &std::cout;
  const TrainResult result = train(model, train_set, val_set, tc);

  save_checkpoint(a.out, result.best);
  std::cout << "best epoch " << result.best_epoch << " val loss " << result.best_val_loss
            << "; checkpoint written to " << a.out << "\n";
  if (!a.log_file.empty()) {
    std::ostringstream os;
    for (const EpochStats& e : result.history)
      os << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << " lr "
         << e.lr << "\n";
    write_text_file(a.log_file, os.str());
  }
  return 0;
}

struct EvalArgs {
  std::string data, method, split = "test", report;
  std::uint64_t seed = 1;
};

int cmd_eval(const EvalArgs& a) {
  if (a.split != "val" && a.split != "test")
    throw CLI::ValidationError("--split", "must be val or test");
  const DatasetManifest manifest = read_manifest(a.data);
  const auto pairs = load_split(a.data, a.split);
  MethodSpec spec = resolve_method(a.method, manifest.radar.n_samples, a.seed);
  if (spec.model && spec.model->config.n_fft != manifest.radar.n_samples)
    throw std::invalid_argument("model n_fft does not match the dataset");
  const MetricsReport report =
      evaluate(pairs, manifest.radar, spec.method, spec.model ? &*spec.model : nullptr,
               spec.label, a.split);
  std::cout << metrics_table_header() << "\n" << report.table_row() << "\n\n"
            << report.to_text();
  if (!a.report.empty()) write_text_file(a.report, report_to_json(report).dump(2) + "\n");
  return 0;
}

struct MitigateArgs {
  std::string method, in, out, plot;
  std::uint64_t seed = 1;
};

int cmd_mitigate(const MitigateArgs& a) {
  const ComplexSignal signal = read_signal_text(a.in);
  const int n = int(signal.size());
  RadarConfig radar;
  radar.n_samples = n;
  MethodSpec spec = resolve_method(a.method, n, a.seed);
  if (spec.method == EvalMethod::kOracle)
    throw std::invalid_argument("mitigate needs a mitigation method, not oracle");
  if (spec.model && spec.model->config.n_fft != n)
    throw std::invalid_argument("model n_fft does not match the input length");

  RangeMatrix pred;
  switch (spec.method) {
    case EvalMethod::kZeroing:
      pred = zeroing_mitigate(signal, radar.window);
      break;
    case EvalMethod::kIdentity:
      pred = to_matrix(dft(signal));
      break;
    case EvalMethod::kModel: {
      RangeMatrix d = to_matrix(dft(signal));
      normalize(d);
      Tape<float> tape;
      pred = run_model(*spec.model, tape, d).second;
      denormalize(pred);
      break;
    }
    default:
      throw std::logic_error("unreachable");
  }

  std::ostringstream os;
  os << "# bin re im amp_db phase_deg\n";
  for (int b = 0; b < n; ++b) {
    const double amp = amplitude_db_floored(pred, b);
    const double ph = pred.magnitude(b) > 0.0 ? phase_deg(pred, b) : 0.0;
    os << b << " " << pred.re(b) << " " << pred.im(b) << " " << amp << " " << ph << "\n";
  }
  write_text_file(a.out, os.str());
  std::cout << "wrote spectrum of " << n << " bins to " << a.out << "\n";

  if (!a.plot.empty()) {
    const RangeMatrix input_mat = to_matrix(dft(signal));
    PlotSeries before{"input", "#888888", {}};
    PlotSeries after{"mitigated (" + spec.label + ")", "#cc3333", {}};
    for (int b = 0; b < n; ++b) {
      before.y.push_back(amplitude_db_floored(input_mat, b));
      after.y.push_back(amplitude_db_floored(pred, b));
    }
    write_line_plot(a.plot, "beat signal spectrum", "amplitude (dB)", {before, after});
    std::cout << "wrote plot to " << a.plot << "\n";
  }
  return 0;
}

struct BenchArgs {
  std::vector<std::string> methods;
  int n = 100;
  std::uint64_t seed = 1;
  std::string report;
};

int cmd_bench(const BenchArgs& a) {
  if (a.n < 1) throw CLI::ValidationError("--n", "need at least one signal");
  RadarConfig radar;
  GenerationRanges ranges;
  std::vector<ComplexSignal> signals;
  signals.reserve(std::size_t(a.n));
  for (int i = 0; i < a.n; ++i) {
    // substream 3 keeps bench draws off the dataset split substreams 0..2
    const SamplePair pair =
        generate_record(record_seed(a.seed, 3, std::uint32_t(i)), ranges, radar);
    signals.push_back(to_double_signal(pair.interfered));
  }

  json rows = json::array();
  std::printf("%-16s %10s %10s\n", "method", "mean ms", "p95 ms");
  for (const std::string& name : a.methods) {
    MethodSpec spec = resolve_method(name, radar.n_samples, a.seed);
    if (spec.model && spec.model->config.n_fft != radar.n_samples)
      throw std::invalid_argument("model n_fft does not match the bench signals");
    std::vector<double> ms =
        time_method(signals, radar, spec.method, spec.model ? &*spec.model : nullptr);
    double mean = 0.0;
    for (double v : ms) mean += v;
    mean /= double(ms.size());
    std::sort(ms.begin(), ms.end());
    const double p95 = ms[std::size_t(std::ceil(0.95 * double(ms.size()))) - 1];
    std::printf("%-16s %10.3f %10.3f\n", spec.label.c_str(), mean, p95);
    rows.push_back({{"method", spec.label}, {"mean_ms", mean}, {"p95_ms", p95}});
  }
  if (!a.report.empty()) write_text_file(a.report, rows.dump(2) + "\n");
  return 0;
}

struct SweepArgs {
  std::string data, layers = "1..8", report, variant = "roc-ae";
  int epochs = 20, batch = 20;
  double lr = 5e-4, wd = 1e-6;
  std::uint64_t seed = 1;
};

int cmd_sweep_depth(const SweepArgs& a) {
  const std::vector<int> layer_counts = parse_layer_list(a.layers);
  const DatasetManifest manifest = read_manifest(a.data);
  const auto train_pairs = load_split(a.data, "train");
  const auto val_pairs = load_split(a.data, "val");
  const auto train_set = prepare_split(train_pairs, manifest.radar);
  const auto val_set = prepare_split(val_pairs, manifest.radar);

  json rows = json::array();
  std::ostringstream table;
  table << "layers phase_mae_deg\n";
  for (int k : layer_counts) {
    ModelConfig mc;
    mc.variant = parse_variant(a.variant);
    mc.layers = k;
    mc.n_fft = manifest.radar.n_samples;
    mc.seed = a.seed;
    Rng rng(a.seed);
    UnfoldedModel<float> model = init_params<float>(mc, rng);
    TrainConfig tc;
    tc.epochs = a.epochs;
    tc.batch = a.batch;
    tc.lr = a.lr;
    tc.weight_decay = a.wd;
    tc.seed = a.seed;
    const TrainResult result = train(model, train_set, val_set, tc);
    const MetricsReport report = evaluate(val_pairs, manifest.radar, EvalMethod::kModel,
                                          &result.best, a.variant + ":" + std::to_string(k),
                                          "val");
    std::cout << "layers " << k << " phase_mae_deg " << report.phase_mae_deg << " (val loss "
              << result.best_val_loss << ")\n";
    table << k << " " << report.phase_mae_deg << "\n";
    rows.push_back({{"layers", k},
                    {"phase_mae_deg", report.phase_mae_deg},
                    {"val_loss", result.best_val_loss},
                    {"report", report_to_json(report)}});
  }
  std::cout << "\n" << table.str();
  if (!a.report.empty()) write_text_file(a.report, rows.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FMCW radar interference mitigation with an unfolded robust-PCA network"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker threads (1 = deterministic mode, the default)")
      ->check(CLI::PositiveNumber);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "synthesize a dataset");
  gen_cmd->add_option("--out", gen.out, "output directory")
      ->envname("URPCA_DATA_DIR")
      ->required();
  gen_cmd->add_option("--train", gen.n_train, "training record count");
  gen_cmd->add_option("--val", gen.n_val, "validation record count");
  gen_cmd->add_option("--test", gen.n_test, "test record count");
  gen_cmd->add_option("--seed", gen.seed, "generation seed");
  gen_cmd->add_option("--ranges", gen.ranges_file,
                      "JSON file overriding generation ranges and/or radar config");
  gen_cmd->callback([&] { cmd_gen(gen, threads); });

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train an unfolded model");
  train_cmd->add_option("--data", tr.data, "dataset directory")
      ->envname("URPCA_DATA_DIR")
      ->required();
  train_cmd->add_option("--variant", tr.variant, "block variant: conv, roc-ae or ruc-ae")
      ->check(CLI::IsMember({"conv", "roc-ae", "ruc-ae"}));
  train_cmd->add_option("--layers", tr.layers, "unfolded iteration count K");
  train_cmd->add_option("--out", tr.out, "checkpoint path")->required();
  train_cmd->add_option("--epochs", tr.epochs, "training epochs");
  train_cmd->add_option("--batch", tr.batch, "mini-batch size");
  train_cmd->add_option("--lr", tr.lr, "initial learning rate");
  train_cmd->add_option("--wd", tr.wd, "decoupled weight decay on conv weights");
  train_cmd->add_option("--seed", tr.seed, "init and shuffle seed");
  train_cmd->add_option("--log", tr.log_file, "also write the epoch log to this file");
  train_cmd->callback([&] { cmd_train(tr); });

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a method on a split");
  eval_cmd->add_option("--data", ev.data, "dataset directory")
      ->envname("URPCA_DATA_DIR")
      ->required();
  eval_cmd->add_option("--method", ev.method,
                       "zeroing | oracle | identity | ckpt:FILE | conv:K | roc-ae:K | ruc-ae:K")
      ->required();
  eval_cmd->add_option("--split", ev.split, "val or test");
  eval_cmd->add_option("--report", ev.report, "write the JSON report here");
  eval_cmd->add_option("--seed", ev.seed, "seed for freshly initialized methods");
  eval_cmd->callback([&] { cmd_eval(ev); });

  MitigateArgs mit;
  auto* mit_cmd = app.add_subcommand("mitigate", "mitigate a single signal");
  mit_cmd->add_option("--method", mit.method, "zeroing | identity | ckpt:FILE | conv:K | ...")
      ->required();
  mit_cmd->add_option("--in", mit.in, "input signal, text lines of 're im'")->required();
  mit_cmd->add_option("--out", mit.out, "output spectrum text file")->required();
  mit_cmd->add_option("--plot", mit.plot, "write an SVG of input vs mitigated spectra");
  mit_cmd->add_option("--seed", mit.seed, "seed for freshly initialized methods");
  mit_cmd->callback([&] { cmd_mitigate(mit); });

  BenchArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "time methods on synthetic signals");
  bench_cmd->add_option("--method", be.methods, "method to time (repeatable)")->required();
  bench_cmd->add_option("--n", be.n, "number of signals");
  bench_cmd->add_option("--seed", be.seed, "signal generation seed");
  bench_cmd->add_option("--report", be.report, "write a JSON report here");
  bench_cmd->callback([&] { cmd_bench(be); });

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep-depth", "train one model per layer count");
  sweep_cmd->add_option("--data", sw.data, "dataset directory")
      ->envname("URPCA_DATA_DIR")
      ->required();
  sweep_cmd->add_option("--layers", sw.layers, "layer counts, e.g. 1,2,4 or 1..13");
  sweep_cmd->add_option("--variant", sw.variant, "block variant")
      ->check(CLI::IsMember({"conv", "roc-ae", "ruc-ae"}));
  sweep_cmd->add_option("--epochs", sw.epochs, "epochs per layer count");
  sweep_cmd->add_option("--batch", sw.batch, "mini-batch size");
  sweep_cmd->add_option("--lr", sw.lr, "initial learning rate");
  sweep_cmd->add_option("--wd", sw.wd, "decoupled weight decay");
  sweep_cmd->add_option("--seed", sw.seed, "init and shuffle seed");
  sweep_cmd->add_option("--report", sw.report, "write the (K, phase MAE) table as JSON");
  sweep_cmd->callback([&] { cmd_sweep_depth(sw); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const VersionError& e) {
    std::cerr << "version error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
