#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "urpca/autodiff.hpp"
#include "urpca/errors.hpp"
#include "urpca/rng.hpp"
#include "urpca/spectrum.hpp"

namespace urpca {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

enum class BlockVariant { kPlainConv, kRocAe, kRucAe };

inline const char* variant_name(BlockVariant v) {
  switch (v) {
    case BlockVariant::kPlainConv: return "conv";
    case BlockVariant::kRocAe: return "roc-ae";
    case BlockVariant::kRucAe: return "ruc-ae";
  }
  throw std::logic_error("variant_name");
}

inline BlockVariant parse_variant(const std::string& s) {
  if (s == "conv") return BlockVariant::kPlainConv;
  if (s == "roc-ae") return BlockVariant::kRocAe;
  if (s == "ruc-ae") return BlockVariant::kRucAe;
  throw std::invalid_argument("unknown block variant: " + s);
}

struct ConvSpec {
  int c_in, c_out, k, stride, pad;
  bool transposed;
  bool bias;

  int weight_count() const { return c_in * c_out * k; }
  TensorShape weight_shape() const {
    return transposed ? TensorShape::of(c_in, c_out, k) : TensorShape::of(c_out, c_in, k);
  }
};

/// The convolution stack of one g block. Hidden layers carry no bias;
/// only the output layer does.
inline std::vector<ConvSpec> block_convs(BlockVariant v) {
  switch (v) {
    case BlockVariant::kPlainConv:
      return {{2, 2, 3, 1, 1, false, true}};
    case BlockVariant::kRocAe:
      return {{2, 32, 3, 1, 1, false, false},
              {32, 32, 3, 1, 1, false, false},
              {32, 2, 3, 1, 1, false, true}};
    case BlockVariant::kRucAe:
      return {{2, 4, 4, 4, 0, false, false},
              {4, 4, 3, 1, 1, false, false},
              {4, 2, 4, 4, 0, true, true}};
  }
  throw std::logic_error("block_convs");
}

inline bool block_has_skip(BlockVariant v) { return v != BlockVariant::kPlainConv; }

inline int block_param_count(BlockVariant v) {
  int n = 0;
  for (const ConvSpec& c : block_convs(v)) n += c.weight_count() + (c.bias ? c.c_out : 0);
  return n;
}

struct ModelConfig {
  BlockVariant variant = BlockVariant::kRocAe;
  int layers = 8;
  int n_fft = 2048;
  std::uint64_t seed = 0;

  void validate() const {
    if (layers < 1 || layers > 13) throw std::invalid_argument("layers must be in [1, 13]");
    if (!is_power_of_two(n_fft) || n_fft % 4 != 0)
      throw std::invalid_argument("n_fft must be a power of two divisible by 4");
  }
};

struct ParamPiece {
  enum Kind { kWeight, kBias, kLambda };
  std::size_t offset;
  int count;
  TensorShape shape;
  Kind kind;
  int layer;  // 0-based iteration index
  int block;  // 0..5 for g1..g6; for lambdas 0 = lambda1, 1 = lambda2
  int conv;   // index within the block's conv stack, -1 for lambdas
};

inline std::vector<ParamPiece> param_layout(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParamPiece> pieces;
  const auto convs = block_convs(cfg.variant);
  std::size_t off = 0;
  for (int layer = 0; layer < cfg.layers; ++layer) {
    for (int g = 0; g < 6; ++g) {
      for (int ci = 0; ci < int(convs.size()); ++ci) {
        const ConvSpec& c = convs[ci];
        pieces.push_back({off, c.weight_count(), c.weight_shape(),
                          ParamPiece::kWeight, layer, g, ci});
        off += c.weight_count();
        if (c.bias) {
          pieces.push_back({off, c.c_out, TensorShape::of(c.c_out),
                            ParamPiece::kBias, layer, g, ci});
          off += c.c_out;
        }
      }
    }
    for (int l = 0; l < 2; ++l) {
      pieces.push_back({off, 1, TensorShape::of(1), ParamPiece::kLambda, layer, l, -1});
      ++off;
    }
  }
  return pieces;
}

inline std::size_t param_count(const ModelConfig& cfg) {
  return std::size_t(cfg.layers) * (6 * block_param_count(cfg.variant) + 2);
}

template <typename T>
struct UnfoldedModel {
  ModelConfig config;
  std::vector<T> params;
};

template <typename T>
UnfoldedModel<T> init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  UnfoldedModel<T> m;
  m.config = cfg;
  m.params.assign(param_count(cfg), T(0));
  const auto convs = block_convs(cfg.variant);
  for (const ParamPiece& p : param_layout(cfg)) {
    switch (p.kind) {
      case ParamPiece::kWeight: {
        const ConvSpec& c = convs[p.conv];
        const double a = std::sqrt(1.0 / (c.c_in * c.k));
        for (int i = 0; i < p.count; ++i) m.params[p.offset + i] = T(rng.uniform(-a, a));
        break;
      }
      case ParamPiece::kBias:
        break;  // already zero
      case ParamPiece::kLambda:
        m.params[p.offset] = T(0.1);
        break;
    }
  }
  return m;
}

template <typename U, typename T>
UnfoldedModel<U> convert_model(const UnfoldedModel<T>& m) {
  UnfoldedModel<U> out;
  out.config = m.config;
  out.params.assign(m.params.begin(), m.params.end());
  return out;
}

/// The model bound onto a tape: one leaf per parameter piece (layout order)
/// plus the output pair of the K-th iteration.
template <typename T>
struct BoundModel {
  std::vector<Var> pieces;
  Var l, s;
};

namespace detail {

template <typename T>
Var block_apply(Tape<T>& tape, BlockVariant variant, const std::vector<ConvSpec>& convs,
                const Var* piece, std::map<int, Var>& zero_bias, Var x) {
  Var h = x;
  int pi = 0;
  for (const ConvSpec& c : convs) {
    Var w = piece[pi++];
    Var b;
    if (c.bias) {
      b = piece[pi++];
    } else {
      auto it = zero_bias.find(c.c_out);
      if (it == zero_bias.end())
        it = zero_bias.emplace(c.c_out, tape.zeros(TensorShape::of(c.c_out))).first;
      b = it->second;
    }
    h = c.transposed ? tape.conv1d_transposed(h, w, b, c.stride)
                     : tape.conv1d(h, w, b, c.stride, c.pad);
    if (&c != &convs.back()) h = tape.relu(h);
  }
  return block_has_skip(variant) ? tape.add(x, h) : h;
}

}  // namespace detail

/// Unrolls the K iterations
///   L_{k+1} = SVT_{l1}(g5(L_k) + g3(S_k) + g1(D))
///   S_{k+1} = soft_thresh_{l2}(g6(L_k) + g4(S_k) + g2(D))
/// from L_0 = S_0 = 0 onto the tape. `d` must be a (2, n_fft) leaf.
template <typename T>
BoundModel<T> bind_forward(Tape<T>& tape, const UnfoldedModel<T>& m, Var d, bool train) {
  if (!(tape.shape(d) == TensorShape::of(2, m.config.n_fft)))
    throw std::invalid_argument("bind_forward: input shape mismatch");
  const auto layout = param_layout(m.config);
  const auto convs = block_convs(m.config.variant);
  const int per_block = int(convs.size()) + int(std::count_if(
                            convs.begin(), convs.end(), [](const ConvSpec& c) { return c.bias; }));

  BoundModel<T> bound;
  bound.pieces.reserve(layout.size());
  for (const ParamPiece& p : layout)
    bound.pieces.push_back(tape.leaf(p.shape, m.params.data() + p.offset, train));

  std::map<int, Var> zero_bias;
  Var l = tape.zeros(TensorShape::of(2, m.config.n_fft));
  Var s = tape.zeros(TensorShape::of(2, m.config.n_fft));
  const int per_layer = 6 * per_block + 2;
  for (int layer = 0; layer < m.config.layers; ++layer) {
    const Var* base = bound.pieces.data() + std::size_t(layer) * per_layer;
    auto g = [&](int idx, Var x) {
      return detail::block_apply(tape, m.config.variant, convs, base + idx * per_block,
                                 zero_bias, x);
    };
    Var lambda1 = base[6 * per_block];
    Var lambda2 = base[6 * per_block + 1];
    Var l_pre = tape.add(tape.add(g(4, l), g(2, s)), g(0, d));
    Var s_pre = tape.add(tape.add(g(5, l), g(3, s)), g(1, d));
    l = tape.svt(l_pre, lambda1);
    s = tape.row_soft_threshold(s_pre, lambda2);
  }
  bound.l = l;
  bound.s = s;
  return bound;
}

/// Plain inference: spectrum matrix in, (L_K, S_K) matrices out.
/// Input scale is propagated to both outputs.
template <typename T>
std::pair<RangeMatrix, RangeMatrix> run_model(const UnfoldedModel<T>& m, Tape<T>& tape,
                                              const RangeMatrix& d) {
  const int n = m.config.n_fft;
  if (int(d.rows()) != n) throw std::invalid_argument("run_model: size mismatch");
  std::vector<T> planar(std::size_t(2) * n);
  for (int i = 0; i < n; ++i) {
    planar[i] = T(d.re(i));
    planar[std::size_t(n) + i] = T(d.im(i));
  }
  tape.reset();
  Var dv = tape.leaf(TensorShape::of(2, n), planar.data(), false);
  BoundModel<T> bound = bind_forward(tape, m, dv, false);
  auto unpack = [&](Var v) {
    RangeMatrix out;
    out.data.resize(std::size_t(2) * n);
    out.scale = d.scale;
    auto vals = tape.value(v);
    for (int i = 0; i < n; ++i) {
      out.data[2 * std::size_t(i)] = double(vals[i]);
      out.data[2 * std::size_t(i) + 1] = double(vals[std::size_t(n) + i]);
    }
    return out;
  };
  auto result = std::make_pair(unpack(bound.l), unpack(bound.s));
  tape.reset();
  return result;
}

// ---- checkpoint format ----
// "URPC1\n", then "key value" text lines ending with one blank line, then all
// parameters as little-endian float32 in layout order.

inline constexpr char kCheckpointMagic[] = "URPC1\n";

inline void save_checkpoint(const std::string& path, const UnfoldedModel<float>& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f << kCheckpointMagic;
  f << "variant " << variant_name(m.config.variant) << "\n";
  f << "layers " << m.config.layers << "\n";
  f << "n_fft " << m.config.n_fft << "\n";
  f << "kernel 3\nstride 1\npad 1\n";
  f << "seed " << m.config.seed << "\n\n";
  f.write(reinterpret_cast<const char*>(m.params.data()),
          std::streamsize(m.params.size() * sizeof(float)));
  if (!f) throw IoError("checkpoint write failed: " + path);
}

inline UnfoldedModel<float> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[6];
  if (!f.read(magic, 6)) throw FormatError("checkpoint too short: " + path);
  if (std::memcmp(magic, kCheckpointMagic, 6) != 0) {
    if (std::memcmp(magic, "URPC", 4) == 0)
      throw VersionError("unsupported checkpoint version in " + path);
    throw FormatError("not a checkpoint file: " + path);
  }
  ModelConfig cfg;
  bool have_variant = false, have_layers = false, have_nfft = false;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "variant") {
      std::string v;
      ls >> v;
      try {
        cfg.variant = parse_variant(v);
      } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("bad checkpoint header: ") + e.what());
      }
      have_variant = true;
    } else if (key == "layers") {
      ls >> cfg.layers;
      have_layers = true;
    } else if (key == "n_fft") {
      ls >> cfg.n_fft;
      have_nfft = true;
    } else if (key == "seed") {
      ls >> cfg.seed;
    } else if (key == "kernel" || key == "stride" || key == "pad") {
      int v = -1;
      ls >> v;
      const int want = key == "kernel" ? 3 : key == "stride" ? 1 : 1;
      if (v != want) throw FormatError("unsupported " + key + " in checkpoint: " + path);
    } else {
      throw FormatError("unknown checkpoint header key '" + key + "' in " + path);
    }
    if (!ls) throw FormatError("bad checkpoint header line '" + line + "' in " + path);
  }
  if (!have_variant || !have_layers || !have_nfft)
    throw FormatError("incomplete checkpoint header: " + path);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid checkpoint config: ") + e.what());
  }
  UnfoldedModel<float> m;
  m.config = cfg;
  m.params.resize(param_count(cfg));
  f.read(reinterpret_cast<char*>(m.params.data()),
         std::streamsize(m.params.size() * sizeof(float)));
  if (std::size_t(f.gcount()) != m.params.size() * sizeof(float))
    throw FormatError("truncated checkpoint: " + path);
  f.peek();
  if (!f.eof()) throw FormatError("trailing bytes in checkpoint: " + path);
  return m;
}

}  // namespace urpca
