#pragma once

// Software FP8 (E4M3, "fn" variant: no infinities, NaN = S.1111.111) and a
// per-tensor-scaled quantized linear layer.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "wam/error.hpp"
#include "wam/matrix.hpp"

namespace wam::quant {

inline constexpr double kE4M3Max = 448.0;
inline constexpr std::uint8_t kE4M3NaN = 0x7F;

inline bool is_nan_e4m3(std::uint8_t b) { return (b & 0x7F) == 0x7F; }

inline double decode_e4m3(std::uint8_t b) {
  const int exp = (b >> 3) & 0xF;
  const int man = b & 0x7;
  const double sign = (b & 0x80) ? -1.0 : 1.0;
  if (exp == 0xF && man == 0x7) return std::numeric_limits<double>::quiet_NaN();
  if (exp == 0) return sign * std::ldexp(static_cast<double>(man), -9);
  return sign * std::ldexp(8.0 + man, exp - 10);
}

/// Round-to-nearest-even; magnitudes above 448 saturate to +-448.
inline std::uint8_t encode_e4m3(double x) {
  if (std::isnan(x)) return kE4M3NaN;
  const std::uint8_t sign = std::signbit(x) ? 0x80 : 0x00;
  const double a = std::abs(x);
  if (a >= kE4M3Max) return sign | 0x7E;
  if (a < 0x1.0p-6) {
    // Subnormal grid has spacing 2^-9; q == 8 lands on the smallest normal.
    const auto q = static_cast<int>(std::nearbyint(std::ldexp(a, 9)));
    return sign | static_cast<std::uint8_t>(q);
  }
  int e2 = 0;
  std::frexp(a, &e2);  // a = f * 2^e2, f in [0.5, 1)
  int unbiased = e2 - 1;
  auto q = static_cast<int>(std::nearbyint(std::ldexp(a, 3 - unbiased)));  // in [8, 16]
  if (q == 16) {
    q = 8;
    ++unbiased;
  }
  const int field = unbiased + 7;
  if (field > 15 || (field == 15 && q - 8 == 7)) return sign | 0x7E;
  return sign | static_cast<std::uint8_t>((field << 3) | (q - 8));
}

inline bool eligible(int in_dim, int out_dim) {
  require(in_dim >= 1 && out_dim >= 1, "eligible: dimensions must be >= 1");
  return in_dim % 16 == 0 && out_dim % 16 == 0;
}

/// Weights (out_dim x in_dim, row-major) stored as E4M3 with one scale.
struct QuantLinear {
  std::vector<std::uint8_t> q_weights;
  double scale = 1.0;
  int in_dim = 0;
  int out_dim = 0;

  double weight(int o, int i) const { return decode_e4m3(q_weights[static_cast<std::size_t>(o) * in_dim + i]) * scale; }

  Matrix dequantize() const {
    Matrix w(static_cast<std::size_t>(out_dim), static_cast<std::size_t>(in_dim));
    for (int o = 0; o < out_dim; ++o)
      for (int i = 0; i < in_dim; ++i) w(o, i) = weight(o, i);
    return w;
  }

  bool operator==(const QuantLinear&) const = default;
};

struct QuantizedTensor {
  std::vector<std::uint8_t> bytes;
  double scale = 1.0;
};

/// scale = max|x| / 448 (1 when all zero); bytes = encode(x / scale).
inline QuantizedTensor quantize_values(const std::vector<double>& values) {
  double amax = 0.0;
  for (double v : values) {
    require(std::isfinite(v), "quantize: non-finite entry");
    amax = std::max(amax, std::abs(v));
  }
  QuantizedTensor t;
  t.scale = amax > 0.0 ? amax / kE4M3Max : 1.0;
  t.bytes.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) t.bytes[i] = encode_e4m3(values[i] / t.scale);
  return t;
}

inline QuantLinear quantize_tensor(const Matrix& w) {
  require(w.rows >= 1 && w.cols >= 1, "quantize_tensor: empty matrix");
  auto t = quantize_values(w.data);
  return QuantLinear{std::move(t.bytes), t.scale, static_cast<int>(w.cols), static_cast<int>(w.rows)};
}

/// y = x W^T with activations quantized dynamically per tensor. Products of
/// E4M3 values are exact in double; accumulation is long double in index order.
inline Matrix quant_matmul(const Matrix& x, const QuantLinear& layer) {
  require(static_cast<int>(x.cols) == layer.in_dim, "quant_matmul: input width does not match layer in_dim");
  const auto qx = quantize_values(x.data);
  std::vector<double> xv(qx.bytes.size());
  for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = decode_e4m3(qx.bytes[i]);
  std::vector<double> wv(layer.q_weights.size());
  for (std::size_t i = 0; i < wv.size(); ++i) wv[i] = decode_e4m3(layer.q_weights[i]);
  const double out_scale = layer.scale * qx.scale;
  Matrix y(x.rows, static_cast<std::size_t>(layer.out_dim));
  const auto in = static_cast<std::size_t>(layer.in_dim);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t o = 0; o < y.cols; ++o) {
      long double acc = 0.0L;
      for (std::size_t k = 0; k < in; ++k) acc += static_cast<long double>(xv[r * in + k] * wv[o * in + k]);
      y(r, o) = static_cast<double>(acc) * out_scale;
    }
  return y;
}

/// A linear layer that takes the FP8 path only when both dims are multiples of 16.
class Linear {
 public:
  explicit Linear(Matrix weights) {
    require(weights.rows >= 1 && weights.cols >= 1, "Linear: empty weight matrix");
    if (eligible(static_cast<int>(weights.cols), static_cast<int>(weights.rows)))
      impl_ = quantize_tensor(weights);
    else
      impl_ = std::move(weights);
  }

  bool quantized() const { return std::holds_alternative<QuantLinear>(impl_); }

  Matrix forward(const Matrix& x) const {
    if (const auto* q = std::get_if<QuantLinear>(&impl_)) return quant_matmul(x, *q);
    return matmul_transposed(x, std::get<Matrix>(impl_));
  }

 private:
  std::variant<QuantLinear, Matrix> impl_;
};

// ---- blob -----------------------------------------------------------------------------------
// "E4M3" magic, u32 LE in_dim, u32 LE out_dim, f64 LE scale, then out*in bytes row-major.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint64_t get_le(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    require(c != std::char_traits<char>::eof(), "quant blob: truncated header");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace detail

inline void write_blob(std::ostream& os, const QuantLinear& layer) {
  os.write("E4M3", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(layer.in_dim));
  detail::put_u32(os, static_cast<std::uint32_t>(layer.out_dim));
  detail::put_u64(os, std::bit_cast<std::uint64_t>(layer.scale));
  os.write(reinterpret_cast<const char*>(layer.q_weights.data()), static_cast<std::streamsize>(layer.q_weights.size()));
}

inline QuantLinear read_blob(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  require(is.gcount() == 4 && std::memcmp(magic, "E4M3", 4) == 0, "quant blob: bad magic");
  QuantLinear q;
  q.in_dim = static_cast<int>(detail::get_le(is, 4));
  q.out_dim = static_cast<int>(detail::get_le(is, 4));
  q.scale = std::bit_cast<double>(detail::get_le(is, 8));
  require(q.in_dim >= 1 && q.out_dim >= 1, "quant blob: bad dimensions");
  require(std::isfinite(q.scale) && q.scale > 0.0, "quant blob: scale must be positive");
  q.q_weights.resize(static_cast<std::size_t>(q.in_dim) * static_cast<std::size_t>(q.out_dim));
  is.read(reinterpret_cast<char*>(q.q_weights.data()), static_cast<std::streamsize>(q.q_weights.size()));
  require(is.gcount() == static_cast<std::streamsize>(q.q_weights.size()), "quant blob: truncated weights");
  return q;
}

}  // namespace wam::quant
