#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "urpca/errors.hpp"
#include "urpca/rng.hpp"
#include "urpca/signal.hpp"

namespace urpca {

using json = nlohmann::json;

struct GenerationRanges {
  int min_targets = 1, max_targets = 5;
  double snr_db_min = 10.0, snr_db_max = 40.0;
  // SIR is a time-domain amplitude ratio and echoes are weak (they only show
  // up after FFT processing gain), so a one-way interferer sits far above
  // them: negative SIR is the realistic default regime.
  double sir_db_min = -30.0, sir_db_max = -5.0;
  // Slopes near 1 keep the beat chirp inside the receive band for a long
  // stretch of the frame; the mitigation problem disappears for slope ratios
  // far from 1 because the burst becomes a handful of samples.
  double slope_min = 0.8, slope_max = 1.25;
  double slope_gap = 0.05;  // |relative_slope - 1| stays at least this far from 1
  int min_bin = 4;          // targets avoid this many of the lowest bins
  double win_frac_min = 0.3, win_frac_max = 1.0;
  double rel_amp_min = 0.25;  // weakest/strongest target amplitude ratio

  void validate(const RadarConfig& radar) const {
    if (min_targets < 1 || max_targets < min_targets)
      throw std::invalid_argument("bad target count range");
    if (snr_db_max < snr_db_min || sir_db_max < sir_db_min)
      throw std::invalid_argument("bad SNR/SIR range");
    if (slope_max < slope_min || slope_gap <= 0.0)
      throw std::invalid_argument("bad slope range");
    if (slope_min > 1.0 - slope_gap && slope_max < 1.0 + slope_gap)
      throw std::invalid_argument("slope range excludes every valid value");
    if (!(win_frac_min > 0.0) || win_frac_max > 1.0 || win_frac_max < win_frac_min)
      throw std::invalid_argument("bad window fraction range");
    if (!(rel_amp_min > 0.0) || rel_amp_min > 1.0)
      throw std::invalid_argument("bad relative amplitude range");
    const int cutoff_bin = int(std::lround(radar.band_cutoff() * radar.n_samples));
    if (min_bin < 0 || cutoff_bin - min_bin < max_targets)
      throw std::invalid_argument("retained band too narrow for the target count");
  }
};

struct SamplePair {
  std::vector<std::complex<float>> interfered;
  std::vector<std::complex<float>> clean;
  Scenario scenario;
};

struct DatasetManifest {
  std::uint64_t seed = 1;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  RadarConfig radar;
  GenerationRanges ranges;
  static constexpr const char* kFormatVersion = "ARIM1";
};

/// Draws every scenario parameter independently and uniformly from its range.
/// Target beat frequencies land on distinct integer bins, so each target
/// concentrates in exactly one bin of the rectangular-window range profile.
inline Scenario sample_scenario(Rng& rng, const GenerationRanges& r, const RadarConfig& radar) {
  r.validate(radar);
  const int n = radar.n_samples;
  const int cutoff_bin = int(std::lround(radar.band_cutoff() * n));
  Scenario sc;

  const int nt = int(rng.uniform_int(r.min_targets, r.max_targets));
  std::vector<int> bins;
  while (int(bins.size()) < nt) {
    const int b = int(rng.uniform_int(r.min_bin, cutoff_bin - 1));
    bool dup = false;
    for (int prev : bins) dup = dup || prev == b;
    if (!dup) bins.push_back(b);
  }
  std::vector<double> phases(nt), rel(nt);
  for (int p = 0; p < nt; ++p) phases[p] = rng.uniform(0.0, 2.0 * kPi);
  for (int p = 0; p < nt; ++p) rel[p] = rng.uniform(r.rel_amp_min, 1.0);

  sc.snr_db = rng.uniform(r.snr_db_min, r.snr_db_max);
  const double a_max = amplitude_for_snr(sc.snr_db, n);
  double rel_peak = 0.0;
  for (double v : rel) rel_peak = std::max(rel_peak, v);
  sc.targets.resize(nt);
  for (int p = 0; p < nt; ++p) {
    sc.targets[p].amplitude = a_max * rel[p] / rel_peak;
    sc.targets[p].phase = phases[p];
    sc.targets[p].freq = double(bins[p]) / double(n);
  }

  sc.sir_db = rng.uniform(r.sir_db_min, r.sir_db_max);
  double slope;
  do {
    slope = rng.uniform(r.slope_min, r.slope_max);
  } while (std::fabs(slope - 1.0) < r.slope_gap);
  sc.interference.relative_slope = slope;
  sc.interference.amplitude = 1.0;
  sc.interference.start_freq = rng.uniform(-radar.band_cutoff(), radar.band_cutoff());
  const double frac = rng.uniform(r.win_frac_min, r.win_frac_max);
  const int len = std::max(1, std::min(n, int(std::lround(frac * n))));
  sc.interference.window_start = int(rng.uniform_int(0, n - len));
  sc.interference.window_end = sc.interference.window_start + len;

  sc.noise_sigma = 1.0;
  return sc;
}

inline std::uint64_t record_seed(std::uint64_t dataset_seed, int split_index, std::uint32_t idx) {
  return derive_seed(dataset_seed, (std::uint64_t(split_index) << 32) | idx);
}

inline SamplePair generate_record(std::uint64_t seed, const GenerationRanges& ranges,
                                  const RadarConfig& radar) {
  Rng rng(seed);
  Scenario sc = sample_scenario(rng, ranges, radar);
  sc.seed = seed;
  const ComplexSignal clean = synth_clean(sc, radar, rng);
  const ComplexSignal interference = synth_interference(sc, radar);
  const ComplexSignal interfered = mix(clean, interference, sc.sir_db, sc.max_target_amplitude());
  SamplePair pair;
  pair.scenario = sc;
  pair.interfered.reserve(interfered.size());
  pair.clean.reserve(clean.size());
  for (const Complex& v : interfered) pair.interfered.emplace_back(float(v.real()), float(v.imag()));
  for (const Complex& v : clean) pair.clean.emplace_back(float(v.real()), float(v.imag()));
  return pair;
}

// ---- JSON forms ----

inline json scenario_to_json(const Scenario& sc) {
  json targets = json::array();
  for (const Target& t : sc.targets)
    targets.push_back({{"amplitude", t.amplitude}, {"phase", t.phase}, {"freq", t.freq}});
  return json{{"seed", sc.seed},
              {"snr_db", sc.snr_db},
              {"sir_db", sc.sir_db},
              {"noise_sigma", sc.noise_sigma},
              {"targets", targets},
              {"interference",
               {{"amplitude", sc.interference.amplitude},
                {"relative_slope", sc.interference.relative_slope},
                {"start_freq", sc.interference.start_freq},
                {"window_start", sc.interference.window_start},
                {"window_end", sc.interference.window_end}}}};
}

inline Scenario scenario_from_json(const json& j) {
  Scenario sc;
  sc.seed = j.at("seed").get<std::uint64_t>();
  sc.snr_db = j.at("snr_db").get<double>();
  sc.sir_db = j.at("sir_db").get<double>();
  sc.noise_sigma = j.at("noise_sigma").get<double>();
  for (const json& t : j.at("targets")) {
    Target tgt;
    tgt.amplitude = t.at("amplitude").get<double>();
    tgt.phase = t.at("phase").get<double>();
    tgt.freq = t.at("freq").get<double>();
    sc.targets.push_back(tgt);
  }
  const json& i = j.at("interference");
  sc.interference.amplitude = i.at("amplitude").get<double>();
  sc.interference.relative_slope = i.at("relative_slope").get<double>();
  sc.interference.start_freq = i.at("start_freq").get<double>();
  sc.interference.window_start = i.at("window_start").get<int>();
  sc.interference.window_end = i.at("window_end").get<int>();
  return sc;
}

inline json ranges_to_json(const GenerationRanges& r) {
  return json{{"min_targets", r.min_targets},   {"max_targets", r.max_targets},
              {"snr_db_min", r.snr_db_min},     {"snr_db_max", r.snr_db_max},
              {"sir_db_min", r.sir_db_min},     {"sir_db_max", r.sir_db_max},
              {"slope_min", r.slope_min},       {"slope_max", r.slope_max},
              {"slope_gap", r.slope_gap},       {"min_bin", r.min_bin},
              {"win_frac_min", r.win_frac_min}, {"win_frac_max", r.win_frac_max},
              {"rel_amp_min", r.rel_amp_min}};
}

inline GenerationRanges ranges_from_json(const json& j) {
  GenerationRanges r;
  r.min_targets = j.value("min_targets", r.min_targets);
  r.max_targets = j.value("max_targets", r.max_targets);
  r.snr_db_min = j.value("snr_db_min", r.snr_db_min);
  r.snr_db_max = j.value("snr_db_max", r.snr_db_max);
  r.sir_db_min = j.value("sir_db_min", r.sir_db_min);
  r.sir_db_max = j.value("sir_db_max", r.sir_db_max);
  r.slope_min = j.value("slope_min", r.slope_min);
  r.slope_max = j.value("slope_max", r.slope_max);
  r.slope_gap = j.value("slope_gap", r.slope_gap);
  r.min_bin = j.value("min_bin", r.min_bin);
  r.win_frac_min = j.value("win_frac_min", r.win_frac_min);
  r.win_frac_max = j.value("win_frac_max", r.win_frac_max);
  r.rel_amp_min = j.value("rel_amp_min", r.rel_amp_min);
  return r;
}

inline json radar_to_json(const RadarConfig& c) {
  return json{{"n_samples", c.n_samples},
              {"sample_rate", c.sample_rate},
              {"chirp_slope", c.chirp_slope},
              {"lowpass_fraction", c.lowpass_fraction},
              {"window", c.window == Window::kHann ? "hann" : "rect"}};
}

inline RadarConfig radar_from_json(const json& j) {
  RadarConfig c;
  c.n_samples = j.value("n_samples", c.n_samples);
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.chirp_slope = j.value("chirp_slope", c.chirp_slope);
  c.lowpass_fraction = j.value("lowpass_fraction", c.lowpass_fraction);
  const std::string w = j.value("window", "rect");
  if (w == "rect") c.window = Window::kRect;
  else if (w == "hann") c.window = Window::kHann;
  else throw FormatError("unknown window kind: " + w);
  return c;
}

// ---- file formats ----
// Split file: "ARIM1\n", u32 record count, u32 n_samples, then per record the
// interfered and the clean signal as interleaved (re, im) float32, all
// little-endian. Scenarios go to a JSON-lines sidecar in record order.

inline constexpr char kDatasetMagic[] = "ARIM1\n";

namespace detail {

static_assert(sizeof(std::complex<float>) == 8, "unexpected complex<float> layout");

inline void write_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}

inline std::uint32_t read_u32(std::ifstream& f, const std::string& path) {
  std::uint32_t v = 0;
  if (!f.read(reinterpret_cast<char*>(&v), 4)) throw FormatError("truncated header: " + path);
  return v;
}

}  // namespace detail

inline const char* split_name(int split_index) {
  switch (split_index) {
    case 0: return "train";
    case 1: return "val";
    case 2: return "test";
  }
  throw std::invalid_argument("bad split index");
}

inline std::size_t split_count(const DatasetManifest& m, int split_index) {
  switch (split_index) {
    case 0: return m.n_train;
    case 1: return m.n_val;
    case 2: return m.n_test;
  }
  throw std::invalid_argument("bad split index");
}

// Records are independent (one derived seed each), so synthesis can fan out
// across worker threads; writes stay in record order, which keeps the output
// bytes identical for every thread count.
inline void write_split(const std::filesystem::path& dir, const DatasetManifest& m,
                        int split_index, int threads = 1) {
  const std::string name = split_name(split_index);
  const std::filesystem::path bin_path = dir / (name + ".bin");
  const std::filesystem::path side_path = dir / (name + ".jsonl");
  std::ofstream bin(bin_path, std::ios::binary);
  std::ofstream side(side_path, std::ios::binary);
  if (!bin || !side) throw IoError("cannot create split files in " + dir.string());
  const std::size_t count = split_count(m, split_index);
  bin << kDatasetMagic;
  detail::write_u32(bin, std::uint32_t(count));
  detail::write_u32(bin, std::uint32_t(m.radar.n_samples));
  auto record_at = [&](std::size_t i) {
    return generate_record(record_seed(m.seed, split_index, std::uint32_t(i)), m.ranges, m.radar);
  };
  auto emit = [&](const SamplePair& pair) {
    bin.write(reinterpret_cast<const char*>(pair.interfered.data()),
              std::streamsize(pair.interfered.size() * sizeof(std::complex<float>)));
    bin.write(reinterpret_cast<const char*>(pair.clean.data()),
              std::streamsize(pair.clean.size() * sizeof(std::complex<float>)));
    side << scenario_to_json(pair.scenario).dump() << "\n";
  };
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) emit(record_at(i));
  } else {
    const std::size_t chunk = std::size_t(threads) * 8;  // bounds the in-flight buffer
    std::vector<SamplePair> buf;
    for (std::size_t base = 0; base < count; base += chunk) {
      const std::size_t n = std::min(chunk, count - base);
      buf.resize(n);
      std::mutex err_mu;
      std::exception_ptr err;
      std::vector<std::thread> team;
      team.reserve(std::size_t(threads));
      for (int t = 0; t < threads; ++t)
        team.emplace_back([&, t] {
          try {
            for (std::size_t j = std::size_t(t); j < n; j += std::size_t(threads))
              buf[j] = record_at(base + j);
          } catch (...) {
            const std::lock_guard<std::mutex> lock(err_mu);
            if (!err) err = std::current_exception();
          }
        });
      for (std::thread& th : team) th.join();
      if (err) std::rethrow_exception(err);
      for (const SamplePair& pair : buf) emit(pair);
    }
  }
  if (!bin || !side) throw IoError("write failed in " + dir.string());
}

inline void generate(const std::filesystem::path& dir, const DatasetManifest& m,
                     int threads = 1) {
  m.ranges.validate(m.radar);
  m.radar.validate();
  std::filesystem::create_directories(dir);
  for (int split = 0; split < 3; ++split) write_split(dir, m, split, threads);
  json manifest{{"format_version", DatasetManifest::kFormatVersion},
                {"seed", m.seed},
                {"counts", {{"train", m.n_train}, {"val", m.n_val}, {"test", m.n_test}}},
                {"radar", radar_to_json(m.radar)},
                {"ranges", ranges_to_json(m.ranges)}};
  std::ofstream f(dir / "manifest.json", std::ios::binary);
  if (!f) throw IoError("cannot create manifest in " + dir.string());
  f << manifest.dump(2) << "\n";
  if (!f) throw IoError("manifest write failed in " + dir.string());
}

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const std::filesystem::path path = dir / "manifest.json";
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw FormatError("bad manifest " + path.string() + ": " + e.what());
  }
  try {
    const std::string version = j.at("format_version").get<std::string>();
    if (version != DatasetManifest::kFormatVersion) {
      if (version.rfind("ARIM", 0) == 0)
        throw VersionError("unsupported dataset version " + version + " in " + path.string());
      throw FormatError("not a dataset manifest: " + path.string());
    }
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.n_train = j.at("counts").at("train").get<std::size_t>();
    m.n_val = j.at("counts").at("val").get<std::size_t>();
    m.n_test = j.at("counts").at("test").get<std::size_t>();
    m.radar = radar_from_json(j.at("radar"));
    m.ranges = ranges_from_json(j.at("ranges"));
    return m;
  } catch (const json::exception& e) {
    throw FormatError("bad manifest " + path.string() + ": " + e.what());
  }
}

inline std::vector<SamplePair> load_split(const std::filesystem::path& dir,
                                          const std::string& name) {
  const std::filesystem::path bin_path = dir / (name + ".bin");
  const std::filesystem::path side_path = dir / (name + ".jsonl");
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot open " + bin_path.string());
  char magic[6];
  if (!bin.read(magic, 6)) throw FormatError("truncated header: " + bin_path.string());
  if (std::memcmp(magic, kDatasetMagic, 6) != 0) {
    if (std::memcmp(magic, "ARIM", 4) == 0)
      throw VersionError("unsupported dataset version in " + bin_path.string());
    throw FormatError("not a dataset file: " + bin_path.string());
  }
  const std::uint32_t count = detail::read_u32(bin, bin_path.string());
  const std::uint32_t n = detail::read_u32(bin, bin_path.string());
  if (n == 0 || n > (1u << 22))
    throw FormatError("implausible sample length in " + bin_path.string());

  std::ifstream side(side_path, std::ios::binary);
  if (!side) throw IoError("cannot open " + side_path.string());

  std::vector<SamplePair> out;
  out.reserve(count);
  std::string line;
  for (std::uint32_t i = 0; i < count; ++i) {
    SamplePair pair;
    pair.interfered.resize(n);
    pair.clean.resize(n);
    bin.read(reinterpret_cast<char*>(pair.interfered.data()),
             std::streamsize(std::size_t(n) * sizeof(std::complex<float>)));
    bin.read(reinterpret_cast<char*>(pair.clean.data()),
             std::streamsize(std::size_t(n) * sizeof(std::complex<float>)));
    if (!bin) throw FormatError("truncated record in " + bin_path.string());
    if (!std::getline(side, line))
      throw FormatError("missing scenario line in " + side_path.string());
    try {
      pair.scenario = scenario_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError("bad scenario line in " + side_path.string() + ": " + e.what());
    }
    out.push_back(std::move(pair));
  }
  bin.peek();
  if (!bin.eof()) throw FormatError("trailing bytes in " + bin_path.string());
  if (std::getline(side, line) && !line.empty())
    throw FormatError("trailing scenario lines in " + side_path.string());
  return out;
}

inline ComplexSignal to_double_signal(const std::vector<std::complex<float>>& v) {
  ComplexSignal out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = Complex(v[i].real(), v[i].imag());
  return out;
}

}  // namespace urpca
