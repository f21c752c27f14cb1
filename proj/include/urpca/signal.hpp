#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "urpca/rng.hpp"
#include "urpca/spectrum.hpp"

namespace urpca {

struct RadarConfig {
  int n_samples = 2048;
  double sample_rate = 20e6;      // Hz
  double chirp_slope = 1e12;      // Hz/s, slope of the transmitted chirp
  double lowpass_fraction = 0.5;  // fraction of Nyquist kept by the receive low-pass, (0, 0.5]
  Window window = Window::kRect;

  double sample_period() const { return 1.0 / sample_rate; }

  // One-sided cutoff of the receive low-pass, cycles/sample.
  double band_cutoff() const { return 0.5 * lowpass_fraction; }

  void validate() const {
    if (n_samples <= 0 || !is_power_of_two(static_cast<std::size_t>(n_samples)))
      throw std::invalid_argument("n_samples must be a power of two");
    if (!(sample_rate > 0.0)) throw std::invalid_argument("sample_rate must be positive");
    if (!(chirp_slope > 0.0)) throw std::invalid_argument("chirp_slope must be positive");
    if (!(lowpass_fraction > 0.0) || lowpass_fraction > 0.5)
      throw std::invalid_argument("lowpass_fraction must be in (0, 0.5]");
  }
};

struct Target {
  double amplitude = 1.0;  // linear, > 0
  double phase = 0.0;      // radians in [0, 2*pi)
  double freq = 0.0;       // beat frequency, cycles/sample
};

// Beat frequency of a target at propagation delay, cycles/sample.
inline double beat_frequency(const RadarConfig& c, double delay_s) {
  return c.chirp_slope * delay_s * c.sample_period();
}

struct Interference {
  double amplitude = 1.0;
  double relative_slope = 2.0;  // interferer slope / own slope, != 1
  double start_freq = 0.0;      // beat-domain frequency at n = 0, cycles/sample
  int window_start = 0;         // active samples [window_start, window_end)
  int window_end = 0;
};

struct Scenario {
  std::vector<Target> targets;
  Interference interference;
  double snr_db = 20.0;
  double sir_db = 10.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;  // regenerating from this seed reproduces both signals

  double max_target_amplitude() const {
    double peak = 0.0;
    for (const auto& t : targets) peak = std::max(peak, t.amplitude);
    return peak;
  }
};

/// Amplitude that puts the strongest target at `snr_db` of post-FFT SNR over a
/// unit-sigma noise floor. The floor of a length-n noise spectrum has median
/// magnitude sqrt(n*ln 2), and an on-bin target of amplitude A peaks at A*n.
inline double amplitude_for_snr(double snr_db, int n_fft) {
  return std::pow(10.0, snr_db / 20.0) * std::sqrt(std::log(2.0) / static_cast<double>(n_fft));
}

/// Targets plus white Gaussian noise; the interference-free beat signal.
inline ComplexSignal synth_clean(const Scenario& sc, const RadarConfig& cfg, Rng& rng) {
  cfg.validate();
  for (const auto& t : sc.targets) {
    if (!(t.amplitude > 0.0)) throw std::invalid_argument("target amplitude must be positive");
    if (t.freq < 0.0 || t.freq >= cfg.band_cutoff())
      throw std::invalid_argument("target beat frequency outside the filtered band");
  }
  const int n = cfg.n_samples;
  ComplexSignal s(static_cast<std::size_t>(n), Complex(0.0, 0.0));
  for (const auto& t : sc.targets) {
    const double w = 2.0 * kPi * t.freq;
    for (int i = 0; i < n; ++i) s[i] += std::polar(t.amplitude, w * i + t.phase);
  }
  if (sc.noise_sigma > 0.0) {
    const double comp_sigma = sc.noise_sigma / std::sqrt(2.0);
    for (int i = 0; i < n; ++i) {
      const auto [a, b] = rng.normal_pair();
      s[i] += Complex(comp_sigma * a, comp_sigma * b);
    }
  }
  return s;
}

/// Beat-domain image of an uncorrelated interferer: a chirp with quadratic
/// phase rate beta = (r-1)*alpha*T_S^2, gated by the receive low-pass. Samples
/// whose wrapped instantaneous frequency falls outside the retained band are
/// zeroed.
inline ComplexSignal synth_interference(const Scenario& sc, const RadarConfig& cfg) {
  cfg.validate();
  const Interference& itf = sc.interference;
  if (itf.relative_slope == 1.0)
    throw std::invalid_argument("interference relative slope must differ from 1");
  if (itf.window_start < 0 || itf.window_end > cfg.n_samples || itf.window_start >= itf.window_end)
    throw std::invalid_argument("interference window out of range");
  const double ts = cfg.sample_period();
  const double beta = (itf.relative_slope - 1.0) * cfg.chirp_slope * ts * ts;
  const double cutoff = cfg.band_cutoff();
  ComplexSignal s(static_cast<std::size_t>(cfg.n_samples), Complex(0.0, 0.0));
  for (int n = itf.window_start; n < itf.window_end; ++n) {
    const double f = itf.start_freq + beta * n;
    const double wrapped = f - std::floor(f + 0.5);  // [-0.5, 0.5)
    if (std::abs(wrapped) > cutoff) continue;
    const double ph = 2.0 * kPi * (itf.start_freq * n + 0.5 * beta * n * n);
    s[n] = std::polar(itf.amplitude, ph);
  }
  return s;
}

/// Adds the interference rescaled so 20*log10(max_p A_p / A_I') = sir_db.
inline ComplexSignal mix(const ComplexSignal& clean, const ComplexSignal& interference,
                         double sir_db, double max_target_amplitude) {
  if (clean.size() != interference.size()) throw std::invalid_argument("mix: length mismatch");
  double peak = 0.0;
  for (const auto& x : interference) peak = std::max(peak, std::abs(x));
  ComplexSignal out = clean;
  if (peak == 0.0) return out;
  const double wanted = max_target_amplitude * std::pow(10.0, -sir_db / 20.0);
  const double gain = wanted / peak;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += gain * interference[i];
  return out;
}

}  // namespace urpca
