#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "urpca/baseline.hpp"
#include "urpca/dataset.hpp"
#include "urpca/errors.hpp"
#include "urpca/metrics.hpp"
#include "urpca/model.hpp"

namespace urpca {

struct TrainConfig {
  int epochs = 100;
  int batch = 20;
  double lr = 5e-4;
  double weight_decay = 1e-6;  // decoupled, conv weights only
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int lr_step_epochs = 30;
  double lr_gamma = 0.5;
  double lambda_floor = 1e-6;
  double loss_weight_s = 1.0, loss_weight_l = 1.0;
  std::uint64_t seed = 1;
  std::ostream* log = nullptr;  // per-epoch "epoch N train x val y lr z" lines

  void validate() const {
    if (epochs < 1 || batch < 1) throw std::invalid_argument("bad epoch/batch config");
    if (!(lr > 0.0) || lr_step_epochs < 1 || !(lr_gamma > 0.0))
      throw std::invalid_argument("bad learning rate config");
  }
};

inline double lr_for_epoch(const TrainConfig& c, int epoch) {
  return c.lr * std::pow(c.lr_gamma, (epoch - 1) / c.lr_step_epochs);
}

/// One training sample: the normalized input spectrum and the two regression
/// labels, all packed as (2, n_fft) planar float tensors. s_star is the clean
/// spectrum under the input's normalization factor; l_star = d - s_star.
struct TrainSample {
  std::vector<float> d, l_star, s_star;
};

namespace detail {

inline std::vector<float> planar(const RangeMatrix& m) {
  const std::size_t n = m.rows();
  std::vector<float> out(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = float(m.re(i));
    out[n + i] = float(m.im(i));
  }
  return out;
}

inline RangeMatrix windowed_spectrum(const ComplexSignal& s, Window w) {
  ComplexSignal x = s;
  apply_window(x, w);
  return to_matrix(dft(x));
}

}  // namespace detail

inline TrainSample prepare_sample(const SamplePair& pair, const RadarConfig& radar) {
  RangeMatrix d = detail::windowed_spectrum(to_double_signal(pair.interfered), radar.window);
  normalize(d);
  RangeMatrix s_star = detail::windowed_spectrum(to_double_signal(pair.clean), radar.window);
  for (double& v : s_star.data) v *= d.scale;
  s_star.scale = d.scale;
  TrainSample t;
  t.d = detail::planar(d);
  t.s_star = detail::planar(s_star);
  t.l_star.resize(t.d.size());
  for (std::size_t i = 0; i < t.d.size(); ++i) t.l_star[i] = t.d[i] - t.s_star[i];
  return t;
}

inline std::vector<TrainSample> prepare_split(const std::vector<SamplePair>& pairs,
                                              const RadarConfig& radar) {
  std::vector<TrainSample> out;
  out.reserve(pairs.size());
  for (const SamplePair& p : pairs) out.push_back(prepare_sample(p, radar));
  return out;
}

/// Adam with decoupled weight decay on conv weights. Moments are kept in
/// double so the update is insensitive to accumulation order at float scale.
class AdamState {
public:
  AdamState(const ModelConfig& cfg, const TrainConfig& train)
      : train_(train), m_(param_count(cfg), 0.0), v_(param_count(cfg), 0.0) {
    kinds_.assign(param_count(cfg), ParamPiece::kWeight);
    for (const ParamPiece& p : param_layout(cfg))
      for (int i = 0; i < p.count; ++i) kinds_[p.offset + i] = p.kind;
  }

  void step(std::vector<float>& params, const std::vector<double>& grad, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(train_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(train_.beta2, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grad[i];
      m_[i] = train_.beta1 * m_[i] + (1.0 - train_.beta1) * g;
      v_[i] = train_.beta2 * v_[i] + (1.0 - train_.beta2) * g * g;
      double update = lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + train_.adam_eps);
      if (kinds_[i] == ParamPiece::kWeight)
        update += lr * train_.weight_decay * double(params[i]);
      double p = double(params[i]) - update;
      if (kinds_[i] == ParamPiece::kLambda) p = std::max(p, train_.lambda_floor);
      params[i] = float(p);
    }
  }

private:
  TrainConfig train_;
  std::vector<double> m_, v_;
  std::vector<std::uint8_t> kinds_;
  long t_ = 0;
};

struct EpochStats {
  int epoch;
  double train_loss, val_loss, lr;
};

struct TrainResult {
  UnfoldedModel<float> best;
  double best_val_loss = 0.0;
  int best_epoch = 0;
  std::vector<EpochStats> history;
};

namespace detail {

template <typename T>
Var bind_loss(Tape<T>& tape, const BoundModel<T>& bound, const TrainSample& sample, int n,
              const TrainConfig& cfg) {
  Var s_star = tape.leaf(TensorShape::of(2, n), sample.s_star.data(), false);
  Var l_star = tape.leaf(TensorShape::of(2, n), sample.l_star.data(), false);
  return tape.add(tape.scale(tape.mse(bound.s, s_star), T(cfg.loss_weight_s)),
                  tape.scale(tape.mse(bound.l, l_star), T(cfg.loss_weight_l)));
}

inline double forward_loss(Tape<float>& tape, const UnfoldedModel<float>& model,
                           const TrainSample& sample, const TrainConfig& cfg) {
  const int n = model.config.n_fft;
  tape.reset();
  Var d = tape.leaf(TensorShape::of(2, n), sample.d.data(), false);
  BoundModel<float> bound = bind_forward(tape, model, d, false);
  Var loss = bind_loss(tape, bound, sample, n, cfg);
  return double(tape.value(loss)[0]);
}

}  // namespace detail

/// Mini-batch training with the mean-gradient Adam step, step-decay schedule
/// and best-validation-loss checkpoint selection. The model is left at its
/// final-epoch parameters; the returned result carries the best snapshot.
inline TrainResult train(UnfoldedModel<float>& model, const std::vector<TrainSample>& train_set,
                         const std::vector<TrainSample>& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  const int n = model.config.n_fft;
  if (train_set.front().d.size() != std::size_t(2) * n)
    throw std::invalid_argument("train: sample length does not match the model");

  const auto layout = param_layout(model.config);
  const std::size_t n_params = param_count(model.config);
  AdamState adam(model.config, cfg);
  Tape<float> tape;
  std::vector<double> grad(n_params);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.best = model;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_for_epoch(cfg, epoch);
    Rng shuffle_rng(derive_seed(cfg.seed, 0x10000u + std::uint64_t(epoch)));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.bounded(i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(cfg.batch));
      const double bs = double(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t bi = start; bi < end; ++bi) {
        const TrainSample& sample = train_set[order[bi]];
        tape.reset();
        Var d = tape.leaf(TensorShape::of(2, n), sample.d.data(), false);
        BoundModel<float> bound = bind_forward(tape, model, d, true);
        Var loss = detail::bind_loss(tape, bound, sample, n, cfg);
        tape.backward(loss);
        batch_loss += double(tape.value(loss)[0]);
        for (std::size_t pi = 0; pi < layout.size(); ++pi) {
          auto g = tape.grad(bound.pieces[pi]);
          double* dst = grad.data() + layout[pi].offset;
          for (int j = 0; j < layout[pi].count; ++j) dst[j] += double(g[j]);
        }
      }
      batch_loss /= bs;
      if (!std::isfinite(batch_loss))
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(start / std::size_t(cfg.batch) + 1));
      for (double& g : grad) g /= bs;
      adam.step(model.params, grad, lr);
      epoch_loss += batch_loss * bs;
    }
    epoch_loss /= double(order.size());

    double val_loss = epoch_loss;
    if (!val_set.empty()) {
      val_loss = 0.0;
      for (const TrainSample& sample : val_set)
        val_loss += detail::forward_loss(tape, model, sample, cfg);
      val_loss /= double(val_set.size());
    }
    if (!std::isfinite(val_loss))
      throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));

    result.history.push_back({epoch, epoch_loss, val_loss, lr});
    if (cfg.log)
      (*cfg.log) << "epoch " << epoch << " train " << epoch_loss << " val " << val_loss
                 << " lr " << lr << "\n"
                 << std::flush;
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.best.params = model.params;
    }
  }
  tape.reset();
  return result;
}

enum class EvalMethod { kOracle, kZeroing, kIdentity, kModel };

/// Runs one mitigation method over a split and computes the metric report.
/// The timed region covers exactly the signal-in, spectrum-out path.
inline MetricsReport evaluate(const std::vector<SamplePair>& pairs, const RadarConfig& radar,
                              EvalMethod method, const UnfoldedModel<float>* model,
                              const std::string& method_label, const std::string& split) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: empty split");
  if (method == EvalMethod::kModel && model == nullptr)
    throw std::invalid_argument("evaluate: missing model");
  MetricsAccumulator acc;
  Tape<float> tape;
  double total_ms = 0.0;
  for (const SamplePair& pair : pairs) {
    const ComplexSignal interfered = to_double_signal(pair.interfered);
    const ComplexSignal clean = to_double_signal(pair.clean);
    const RangeMatrix truth = detail::windowed_spectrum(clean, radar.window);
    const RangeMatrix interfered_mat = detail::windowed_spectrum(interfered, radar.window);

    const auto t0 = std::chrono::steady_clock::now();
    RangeMatrix pred;
    switch (method) {
      case EvalMethod::kOracle:
        pred = oracle(clean, radar.window);
        break;
      case EvalMethod::kZeroing:
        pred = zeroing_mitigate(interfered, radar.window);
        break;
      case EvalMethod::kIdentity:
        pred = detail::windowed_spectrum(interfered, radar.window);
        break;
      case EvalMethod::kModel: {
        RangeMatrix d = detail::windowed_spectrum(interfered, radar.window);
        normalize(d);
        pred = run_model(*model, tape, d).second;
        denormalize(pred);
        break;
      }
    }
    total_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();

    std::vector<int> bins;
    int strongest = -1;
    double strongest_amp = -1.0;
    for (const Target& t : pair.scenario.targets) {
      const int b = int(std::lround(t.freq * radar.n_samples));
      bins.push_back(b);
      if (t.amplitude > strongest_amp) {
        strongest_amp = t.amplitude;
        strongest = b;
      }
    }
    acc.add(pred, interfered_mat, truth, bins, strongest);
  }
  return acc.finalize(method_label, split, total_ms / double(pairs.size()));
}

/// Per-signal wall-clock times (ms) of the signal-in, spectrum-out path.
inline std::vector<double> time_method(const std::vector<ComplexSignal>& signals,
                                       const RadarConfig& radar, EvalMethod method,
                                       const UnfoldedModel<float>* model) {
  if (method == EvalMethod::kModel && model == nullptr)
    throw std::invalid_argument("time_method: missing model");
  Tape<float> tape;
  std::vector<double> ms;
  ms.reserve(signals.size());
  for (const ComplexSignal& s : signals) {
    const auto t0 = std::chrono::steady_clock::now();
    RangeMatrix pred;
    switch (method) {
      case EvalMethod::kOracle:
      case EvalMethod::kIdentity:
        pred = detail::windowed_spectrum(s, radar.window);
        break;
      case EvalMethod::kZeroing:
        pred = zeroing_mitigate(s, radar.window);
        break;
      case EvalMethod::kModel: {
        RangeMatrix d = detail::windowed_spectrum(s, radar.window);
        normalize(d);
        pred = run_model(*model, tape, d).second;
        denormalize(pred);
        break;
      }
    }
    ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return ms;
}

}  // namespace urpca
