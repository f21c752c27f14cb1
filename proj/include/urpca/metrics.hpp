#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "urpca/spectrum.hpp"

namespace urpca {

// Bins with exactly zero magnitude have no finite dB value; every metric
// that consumes per-bin dB treats them as -120 dB.
inline constexpr double kDbFloor = -120.0;

inline double amplitude_db_floored(const RangeMatrix& m, int bin) {
  if (bin < 0) throw std::out_of_range("bin out of range");
  check_bin(m, std::size_t(bin));
  const double a = m.magnitude(std::size_t(bin));
  return a > 0.0 ? std::max(20.0 * std::log10(a), kDbFloor) : kDbFloor;
}

/// Pooled Mann-Whitney AUC; ties contribute 1/2.
inline double roc_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: size mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mean_rank = 0.5 * double(i + 1 + j);  // 1-based average rank of the tie group
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        rank_sum_pos += mean_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("roc_auc: need both classes");
  const double u = rank_sum_pos - 0.5 * double(n_pos) * double(n_pos + 1);
  return u / (double(n_pos) * double(n_neg));
}

inline double wrapped_angle_deg(double a_deg, double b_deg) {
  double d = std::fabs(a_deg - b_deg);
  d = std::fmod(d, 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

struct MetricsReport {
  std::string method;
  std::string split;
  double auc = 0.0;
  double amp_mae_db = 0.0;
  double phase_mae_deg = 0.0;
  double mean_delta_snr_db = 0.0;
  std::size_t n_samples = 0;
  double ms_per_signal = 0.0;

  std::string to_text() const {
    std::ostringstream os;
    os << "method " << method << "\n"
       << "split " << split << "\n"
       << "auc " << auc << "\n"
       << "amp_mae_db " << amp_mae_db << "\n"
       << "phase_mae_deg " << phase_mae_deg << "\n"
       << "mean_delta_snr_db " << mean_delta_snr_db << "\n"
       << "n_samples " << n_samples << "\n"
       << "ms_per_signal " << ms_per_signal << "\n";
    return os.str();
  }

  std::string table_row() const {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-24s %6.1f ms  %6.4f  %6.2f dB  %7.2f deg  %7.2f dB",
                  method.c_str(), ms_per_signal, auc, amp_mae_db, phase_mae_deg,
                  mean_delta_snr_db);
    return buf;
  }
};

inline const char* metrics_table_header() {
  return "method                     time      AUC   amp MAE     phase MAE     dSNR";
}

/// Accumulates the four metrics over a split. Per signal, call add() with the
/// predicted spectrum, the unmitigated spectrum, the clean-truth spectrum and
/// the target bins. All matrices must be at the same (original) scale.
class MetricsAccumulator {
public:
  void add(const RangeMatrix& pred, const RangeMatrix& interfered, const RangeMatrix& truth,
           const std::vector<int>& target_bins, int strongest_bin) {
    if (target_bins.empty()) throw std::invalid_argument("metrics: no targets");
    const std::size_t n = pred.rows();
    if (interfered.rows() != n || truth.rows() != n)
      throw std::invalid_argument("metrics: size mismatch");

    // pooled AUC scores: per-bin dB minus the signal's max dB
    std::vector<std::uint8_t> is_target(n, 0);
    for (int b : target_bins) {
      if (b < 0) throw std::out_of_range("target bin out of range");
      check_bin(pred, std::size_t(b));
      is_target[std::size_t(b)] = 1;
    }
    double peak_db = kDbFloor;
    std::vector<double> db(n);
    for (std::size_t i = 0; i < n; ++i) {
      db[i] = amplitude_db_floored(pred, int(i));
      peak_db = std::max(peak_db, db[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      scores_.push_back(db[i] - peak_db);
      labels_.push_back(is_target[i]);
    }

    for (int b : target_bins) {
      amp_err_sum_ += std::fabs(amplitude_db_floored(pred, b) - amplitude_db_floored(truth, b));
      ++n_targets_;
      phase_err_sum_ += phase_error_deg(pred, truth, b);
    }

    delta_snr_sum_ += snr_db(pred, target_bins, strongest_bin) -
                      snr_db(interfered, target_bins, strongest_bin);
    ++n_signals_;
  }

  /// SNR of a profile: strongest-target bin level over the median level of
  /// the bins more than 5 away from every target bin.
  static double snr_db(const RangeMatrix& m, const std::vector<int>& target_bins,
                       int strongest_bin) {
    std::vector<double> floor_db;
    floor_db.reserve(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
      bool excluded = false;
      for (int b : target_bins)
        if (std::abs(int(i) - b) <= 5) {
          excluded = true;
          break;
        }
      if (!excluded) floor_db.push_back(amplitude_db_floored(m, int(i)));
    }
    if (floor_db.empty()) throw std::invalid_argument("snr_db: no noise bins left");
    return amplitude_db_floored(m, strongest_bin) - detail::median_inplace(floor_db);
  }

  static double phase_error_deg(const RangeMatrix& pred, const RangeMatrix& truth, int bin) {
    if (pred.magnitude(bin) == 0.0 || truth.magnitude(bin) == 0.0) return 90.0;
    return wrapped_angle_deg(phase_deg(pred, bin), phase_deg(truth, bin));
  }

  MetricsReport finalize(std::string method, std::string split, double ms_per_signal) const {
    if (n_signals_ == 0) throw std::invalid_argument("metrics: no signals accumulated");
    MetricsReport r;
    r.method = std::move(method);
    r.split = std::move(split);
    r.auc = roc_auc(scores_, labels_);
    r.amp_mae_db = amp_err_sum_ / double(n_targets_);
    r.phase_mae_deg = phase_err_sum_ / double(n_targets_);
    r.mean_delta_snr_db = delta_snr_sum_ / double(n_signals_);
    r.n_samples = n_signals_;
    r.ms_per_signal = ms_per_signal;
    return r;
  }

private:
  std::vector<double> scores_;
  std::vector<std::uint8_t> labels_;
  double amp_err_sum_ = 0.0;
  double phase_err_sum_ = 0.0;
  double delta_snr_sum_ = 0.0;
  std::size_t n_targets_ = 0;
  std::size_t n_signals_ = 0;
};

}  // namespace urpca
