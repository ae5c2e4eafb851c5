#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <type_traits>
#include <limits>
#include <string>
#include <vector>

#include <cblas.h>

#include "ntd/numcore/tensor.hpp"

namespace ntd {

namespace detail {

// C[M x N] += op(A) * op(B), row-major. A is stored [M x K] (or [K x M] when
// trans_a), B is stored [K x N] (or [N x K] when trans_b).
template <typename T>
void gemm(std::size_t M, std::size_t N, std::size_t K, const T* A, bool trans_a, const T* B, bool trans_b, T* C) {
  if (M == 0 || N == 0 || K == 0) return;
  const auto ta = trans_a ? CblasTrans : CblasNoTrans;
  const auto tb = trans_b ? CblasTrans : CblasNoTrans;
  const auto lda = static_cast<blasint>(trans_a ? M : K);
  const auto ldb = static_cast<blasint>(trans_b ? K : N);
  const auto m = static_cast<blasint>(M), n = static_cast<blasint>(N), k = static_cast<blasint>(K);
  if constexpr (std::is_same_v<T, float>) {
    cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, 1.0f, A, lda, B, ldb, 1.0f, C, n);
  } else {
    static_assert(std::is_same_v<T, double>, "gemm: float or double only");
    cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, 1.0, A, lda, B, ldb, 1.0, C, n);
  }
}

template <typename T>
std::vector<T> transposed(const T* src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

template <typename T>
void check_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
void check_rank2(const Tensor<T>& a, const char* op) {
  if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(a.shape()));
}

template <typename T, typename F, typename G>
Tensor<T> unary(const Tensor<T>& x, F f, G dfdx_from_xy) {
  std::vector<T> y(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return make_result<T>(x.shape(), std::move(y), {x}, [dfdx_from_xy](auto& self) {
    T* gx = parent_grad<T>(self, 0);
    if (!gx) return;
    const auto& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      gx[i] += self.grad[i] * dfdx_from_xy(xv[i], self.value[i]);
  });
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same(a, b, "add");
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  return detail::make_result<T>(a.shape(), std::move(y), {a, b}, [](auto& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (T* g = detail::parent_grad<T>(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same(a, b, "sub");
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
  return detail::make_result<T>(a.shape(), std::move(y), {a, b}, [](auto& self) {
    if (T* g = detail::parent_grad<T>(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (T* g = detail::parent_grad<T>(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same(a, b, "mul");
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  return detail::make_result<T>(a.shape(), std::move(y), {a, b}, [](auto& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (T* g = detail::parent_grad<T>(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (T* g = detail::parent_grad<T>(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return detail::unary(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return v > T(0) ? v : T(0); },
                       [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v / (T(1) + std::exp(-v)); },
      [](T v, T) {
        const T s = T(1) / (T(1) + std::exp(-v));
        return s * (T(1) + v * (T(1) - s));
      });
}

namespace detail {

// exp without libm calls so elementwise loops vectorize; float accuracy ~2 ulp.
inline float exp_poly(float x) {
  x = std::clamp(x, -87.0f, 88.0f);
  const float n = std::nearbyint(x * 1.44269504f);
  const float r = (x - n * 0.693145752f) - n * 1.42860677e-6f;
  float p = 1.98756912e-4f;
  p = p * r + 1.39819994e-3f;
  p = p * r + 8.33345205e-3f;
  p = p * r + 4.16657962e-2f;
  p = p * r + 1.66666672e-1f;
  p = p * r + 0.5f;
  p = p * r * r + r + 1.0f;
  const std::int32_t bits = (static_cast<std::int32_t>(n) + 127) << 23;
  float scale;
  std::memcpy(&scale, &bits, sizeof scale);
  return p * scale;
}

template <typename T>
T tanh_fast(T u) {
  if constexpr (std::is_same_v<T, float>) {
    return 1.0f - 2.0f / (exp_poly(2.0f * u) + 1.0f);
  } else {
    return std::tanh(u);
  }
}

}  // namespace detail

// tanh approximation of GELU
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T c = T(0.7978845608028654);
  constexpr T k = T(0.044715);
  return detail::unary(
      x,
      [](T v) { return T(0.5) * v * (T(1) + detail::tanh_fast(c * (v + k * v * v * v))); },
      [](T v, T) {
        const T th = detail::tanh_fast(c * (v + k * v * v * v));
        return T(0.5) * (T(1) + th) + T(0.5) * v * (T(1) - th * th) * c * (T(1) + T(3) * k * v * v);
      });
}

// ---- reductions ------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = T(0);
  for (T v : x.values()) s += v;
  return detail::make_result<T>({1}, {s}, {x}, [](auto& self) {
    if (T* g = detail::parent_grad<T>(self, 0)) {
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same(a, b, "mse");
  const std::size_t n = a.size();
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return detail::make_result<T>({1}, {s / static_cast<T>(n)}, {a, b}, [n](auto& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    const T k = T(2) * self.grad[0] / static_cast<T>(n);
    if (T* g = detail::parent_grad<T>(self, 0))
      for (std::size_t i = 0; i < n; ++i) g[i] += k * (av[i] - bv[i]);
    if (T* g = detail::parent_grad<T>(self, 1))
      for (std::size_t i = 0; i < n; ++i) g[i] -= k * (av[i] - bv[i]);
  });
}

template <typename T>
Tensor<T> l1(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same(a, b, "l1");
  const std::size_t n = a.size();
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i] - b[i]);
  return detail::make_result<T>({1}, {s / static_cast<T>(n)}, {a, b}, [n](auto& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    const T k = self.grad[0] / static_cast<T>(n);
    auto sgn = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
    if (T* g = detail::parent_grad<T>(self, 0))
      for (std::size_t i = 0; i < n; ++i) g[i] += k * sgn(av[i] - bv[i]);
    if (T* g = detail::parent_grad<T>(self, 1))
      for (std::size_t i = 0; i < n; ++i) g[i] -= k * sgn(av[i] - bv[i]);
  });
}

// ---- shape -----------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  return detail::make_result<T>(std::move(shape), x.values(), {x}, [](auto& self) {
    if (T* g = detail::parent_grad<T>(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  detail::check_rank2(x, "transpose");
  const std::size_t R = x.dim(0), C = x.dim(1);
  return detail::make_result<T>({C, R}, detail::transposed(x.values().data(), R, C), {x},
                                [R, C](auto& self) {
                                  if (T* g = detail::parent_grad<T>(self, 0))
                                    for (std::size_t r = 0; r < R; ++r)
                                      for (std::size_t c = 0; c < C; ++c) g[r * C + c] += self.grad[c * R + r];
                                });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t start, std::size_t count) {
  detail::check_rank2(x, "slice_rows");
  const std::size_t C = x.dim(1);
  if (start + count > x.dim(0)) throw ShapeError("slice_rows: range out of bounds");
  std::vector<T> y(x.values().begin() + start * C, x.values().begin() + (start + count) * C);
  return detail::make_result<T>({count, C}, std::move(y), {x}, [start, C](auto& self) {
    if (T* g = detail::parent_grad<T>(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * C + i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count) {
  detail::check_rank2(x, "slice_cols");
  const std::size_t R = x.dim(0), C = x.dim(1);
  if (start + count > C) throw ShapeError("slice_cols: range out of bounds");
  std::vector<T> y(R * count);
  for (std::size_t r = 0; r < R; ++r)
    std::copy_n(x.values().begin() + r * C + start, count, y.begin() + r * count);
  return detail::make_result<T>({R, count}, std::move(y), {x}, [R, C, start, count](auto& self) {
    if (T* g = detail::parent_grad<T>(self, 0))
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < count; ++c) g[r * C + start + c] += self.grad[r * count + c];
  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t C = parts[0].cols();
  std::size_t R = 0;
  for (const auto& p : parts) {
    if (p.cols() != C) throw ShapeError("concat_rows: column count mismatch");
    R += p.rows();
  }
  std::vector<T> y;
  y.reserve(R * C);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(y.size());
    y.insert(y.end(), p.values().begin(), p.values().end());
  }
  return detail::make_result<T>({R, C}, std::move(y), parts, [offsets](auto& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p)
      if (T* g = detail::parent_grad<T>(self, p)) {
        const std::size_t n = self.parents[p]->value.size();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offsets[p] + i];
      }
  });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t R = parts[0].rows();
  std::size_t C = 0;
  std::vector<std::size_t> offsets, widths;
  for (const auto& p : parts) {
    if (p.rows() != R) throw ShapeError("concat_cols: row count mismatch");
    offsets.push_back(C);
    widths.push_back(p.cols());
    C += p.cols();
  }
  std::vector<T> y(R * C);
  for (std::size_t p = 0; p < parts.size(); ++p)
    for (std::size_t r = 0; r < R; ++r)
      std::copy_n(parts[p].values().begin() + r * widths[p], widths[p], y.begin() + r * C + offsets[p]);
  return detail::make_result<T>({R, C}, std::move(y), parts, [R, C, offsets, widths](auto& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p)
      if (T* g = detail::parent_grad<T>(self, p))
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < widths[p]; ++c) g[r * widths[p] + c] += self.grad[r * C + offsets[p] + c];
  });
}

// Rows of `table` selected by `ids` (embedding lookup).
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::size_t>& ids) {
  detail::check_rank2(table, "gather_rows");
  const std::size_t V = table.dim(0), D = table.dim(1);
  std::vector<T> y(ids.size() * D);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= V) throw DataError("gather_rows: id " + std::to_string(ids[i]) + " out of range");
    std::copy_n(table.values().begin() + ids[i] * D, D, y.begin() + i * D);
  }
  return detail::make_result<T>({ids.size(), D}, std::move(y), {table}, [ids, D](auto& self) {
    if (T* g = detail::parent_grad<T>(self, 0))
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t d = 0; d < D; ++d) g[ids[i] * D + d] += self.grad[i * D + d];
  });
}

// ---- linear algebra --------------------------------------------------------

// op(a) * op(b) where op transposes when the flag is set.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false, bool trans_b = false) {
  detail::check_rank2(a, "matmul");
  detail::check_rank2(b, "matmul");
  const std::size_t M = trans_a ? a.dim(1) : a.dim(0);
  const std::size_t K = trans_a ? a.dim(0) : a.dim(1);
  const std::size_t Kb = trans_b ? b.dim(1) : b.dim(0);
  const std::size_t N = trans_b ? b.dim(0) : b.dim(1);
  if (K != Kb)
    throw ShapeError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  std::vector<T> y(M * N, T(0));
  detail::gemm(M, N, K, a.values().data(), trans_a, b.values().data(), trans_b, y.data());
  return detail::make_result<T>({M, N}, std::move(y), {a, b}, [M, N, K, trans_a, trans_b](auto& self) {
    const T* A = self.parents[0]->value.data();
    const T* B = self.parents[1]->value.data();
    const T* G = self.grad.data();
    if (T* ga = detail::parent_grad<T>(self, 0)) {
      // d op(a) = G * op(b)^T; stored layout of a decides which product to form.
      if (!trans_a) {
        detail::gemm(M, K, N, G, false, B, !trans_b, ga);  // [M x K]
      } else {
        detail::gemm(K, M, N, B, trans_b, G, true, ga);  // (G op(b)^T)^T = op(b) G^T, [K x M]
      }
    }
    if (T* gb = detail::parent_grad<T>(self, 1)) {
      // d op(b) = op(a)^T * G
      if (!trans_b) {
        detail::gemm(K, N, M, A, !trans_a, G, false, gb);  // [K x N]
      } else {
        detail::gemm(N, K, M, G, true, A, trans_a, gb);  // (op(a)^T G)^T = G^T op(a), [N x K]
      }
    }
  });
}

enum class Axis { Rows, Cols };

// Axis::Rows: x is [R x C] and b has C entries added to every row.
// Axis::Cols: x is [C x T] and b has C entries added along each row (per channel).
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b, Axis axis) {
  detail::check_rank2(x, "add_bias");
  const std::size_t R = x.dim(0), C = x.dim(1);
  const std::size_t want = axis == Axis::Rows ? C : R;
  if (b.size() != want) throw ShapeError("add_bias: bias has " + std::to_string(b.size()) + " entries, expected " + std::to_string(want));
  std::vector<T> y(x.values());
  const auto& bv = b.values();
  for (std::size_t r = 0; r < R; ++r) {
    T* row = y.data() + r * C;
    if (axis == Axis::Rows) {
      for (std::size_t c = 0; c < C; ++c) row[c] += bv[c];
    } else {
      const T br = bv[r];
      for (std::size_t c = 0; c < C; ++c) row[c] += br;
    }
  }
  return detail::make_result<T>({R, C}, std::move(y), {x, b}, [R, C, axis](auto& self) {
    const T* G = self.grad.data();
    if (T* g = detail::parent_grad<T>(self, 0))
      for (std::size_t i = 0; i < R * C; ++i) g[i] += G[i];
    if (T* g = detail::parent_grad<T>(self, 1)) {
      for (std::size_t r = 0; r < R; ++r) {
        const T* row = G + r * C;
        if (axis == Axis::Rows) {
          for (std::size_t c = 0; c < C; ++c) g[c] += row[c];
        } else {
          T acc = 0;
          for (std::size_t c = 0; c < C; ++c) acc += row[c];
          g[r] += acc;
        }
      }
    }
  });
}

// Multiplies every row of x [R x C] elementwise by w (C entries).
template <typename T>
Tensor<T> mul_rows(const Tensor<T>& x, const Tensor<T>& w) {
  detail::check_rank2(x, "mul_rows");
  const std::size_t R = x.dim(0), C = x.dim(1);
  if (w.size() != C) throw ShapeError("mul_rows: weight size mismatch");
  std::vector<T> y(R * C);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) y[r * C + c] = x[r * C + c] * w[c];
  return detail::make_result<T>({R, C}, std::move(y), {x, w}, [R, C](auto& self) {
    const auto& xv = self.parents[0]->value;
    const auto& wv = self.parents[1]->value;
    if (T* g = detail::parent_grad<T>(self, 0))
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) g[r * C + c] += self.grad[r * C + c] * wv[c];
    if (T* g = detail::parent_grad<T>(self, 1))
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) g[c] += self.grad[r * C + c] * xv[r * C + c];
  });
}

// Layer normalization. Axis::Rows normalizes each row over its columns
// (token-major sequences); Axis::Cols normalizes each column over its rows
// (channel-major signals). gamma/beta may be undefined for no affine.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Axis axis,
                     T eps = T(1e-5)) {
  detail::check_rank2(x, "layer_norm");
  const std::size_t R = x.dim(0), C = x.dim(1);
  const std::size_t groups = axis == Axis::Rows ? R : C;  // independent vectors
  const std::size_t width = axis == Axis::Rows ? C : R;   // normalized length
  const std::size_t gstride = axis == Axis::Rows ? C : 1;
  const bool affine = gamma.defined();
  if (affine && (gamma.size() != width || beta.size() != width))
    throw ShapeError("layer_norm: affine parameter size mismatch");

  std::vector<T> xhat(R * C), y(R * C), inv_std(groups);
  const auto& xv = x.values();
  if (axis == Axis::Rows) {
    for (std::size_t g = 0; g < groups; ++g) {
      const T* row = xv.data() + g * gstride;
      T mu = 0;
      for (std::size_t e = 0; e < width; ++e) mu += row[e];
      mu /= static_cast<T>(width);
      T var = 0;
      for (std::size_t e = 0; e < width; ++e) var += (row[e] - mu) * (row[e] - mu);
      var /= static_cast<T>(width);
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[g] = is;
      for (std::size_t e = 0; e < width; ++e) xhat[g * gstride + e] = (row[e] - mu) * is;
    }
  } else {
    // Column statistics accumulated row by row to keep access contiguous.
    std::vector<T> mu(C, T(0)), var(C, T(0));
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) mu[c] += xv[r * C + c];
    for (std::size_t c = 0; c < C; ++c) mu[c] /= static_cast<T>(R);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        const T d = xv[r * C + c] - mu[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < C; ++c) inv_std[c] = T(1) / std::sqrt(var[c] / static_cast<T>(R) + eps);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) xhat[r * C + c] = (xv[r * C + c] - mu[c]) * inv_std[c];
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t i = r * C + c;
      const std::size_t e = axis == Axis::Rows ? c : r;
      y[i] = affine ? xhat[i] * gamma[e] + beta[e] : xhat[i];
    }

  auto bw = [R, C, axis, affine, xhat = std::move(xhat), inv_std = std::move(inv_std)](auto& self) {
    const std::size_t width = axis == Axis::Rows ? C : R;
    const T* G = self.grad.data();
    const T* gam = affine ? self.parents[1]->value.data() : nullptr;
    if (affine) {
      T* gg = detail::parent_grad<T>(self, 1);
      T* gb = detail::parent_grad<T>(self, 2);
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = r * C + c;
          const std::size_t e = axis == Axis::Rows ? c : r;
          if (gg) gg[e] += G[i] * xhat[i];
          if (gb) gb[e] += G[i];
        }
    }
    T* gx = detail::parent_grad<T>(self, 0);
    if (!gx) return;
    // dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
    std::vector<T> dxhat(R * C);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = r * C + c;
        dxhat[i] = affine ? G[i] * gam[axis == Axis::Rows ? c : r] : G[i];
      }
    const T inv_w = T(1) / static_cast<T>(width);
    if (axis == Axis::Rows) {
      for (std::size_t r = 0; r < R; ++r) {
        T m1 = 0, m2 = 0;
        for (std::size_t c = 0; c < C; ++c) {
          m1 += dxhat[r * C + c];
          m2 += dxhat[r * C + c] * xhat[r * C + c];
        }
        m1 *= inv_w;
        m2 *= inv_w;
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = r * C + c;
          gx[i] += inv_std[r] * (dxhat[i] - m1 - xhat[i] * m2);
        }
      }
    } else {
      std::vector<T> m1(C, T(0)), m2(C, T(0));
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
          m1[c] += dxhat[r * C + c];
          m2[c] += dxhat[r * C + c] * xhat[r * C + c];
        }
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = r * C + c;
          gx[i] += inv_std[c] * (dxhat[i] - m1[c] * inv_w - xhat[i] * m2[c] * inv_w);
        }
    }
  };
  if (affine) return detail::make_result<T>({R, C}, std::move(y), {x, gamma, beta}, std::move(bw));
  return detail::make_result<T>({R, C}, std::move(y), {x}, std::move(bw));
}

// Row-wise softmax; with `causal`, entry (i, j) for j > i + offset is masked out.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, bool causal = false, std::size_t offset = 0) {
  detail::check_rank2(x, "softmax_rows");
  const std::size_t R = x.dim(0), C = x.dim(1);
  std::vector<T> y(R * C, T(0));
  for (std::size_t r = 0; r < R; ++r) {
    const std::size_t lim = causal ? std::min(C, r + offset + 1) : C;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < lim; ++c) mx = std::max(mx, x[r * C + c]);
    T s = 0;
    for (std::size_t c = 0; c < lim; ++c) {
      y[r * C + c] = std::exp(x[r * C + c] - mx);
      s += y[r * C + c];
    }
    for (std::size_t c = 0; c < lim; ++c) y[r * C + c] /= s;
  }
  return detail::make_result<T>({R, C}, std::move(y), {x}, [R, C](auto& self) {
    T* g = detail::parent_grad<T>(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < R; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < C; ++c) dot += self.grad[r * C + c] * self.value[r * C + c];
      for (std::size_t c = 0; c < C; ++c)
        g[r * C + c] += self.value[r * C + c] * (self.grad[r * C + c] - dot);
    }
  });
}

// Mean negative log-likelihood of `targets` under row-wise softmax(logits).
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& targets) {
  detail::check_rank2(logits, "cross_entropy");
  const std::size_t R = logits.dim(0), V = logits.dim(1);
  if (targets.size() != R) throw ShapeError("cross_entropy: one target per row required");
  std::vector<T> prob(R * V);
  T loss = 0;
  for (std::size_t r = 0; r < R; ++r) {
    if (targets[r] >= V) throw DataError("cross_entropy: target id " + std::to_string(targets[r]) + " outside vocabulary");
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t v = 0; v < V; ++v) mx = std::max(mx, logits[r * V + v]);
    T s = 0;
    for (std::size_t v = 0; v < V; ++v) s += std::exp(logits[r * V + v] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t v = 0; v < V; ++v) prob[r * V + v] = std::exp(logits[r * V + v] - lse);
    loss += lse - logits[r * V + targets[r]];
  }
  loss /= static_cast<T>(R);
  return detail::make_result<T>({1}, {loss}, {logits}, [R, V, targets, prob = std::move(prob)](auto& self) {
    T* g = detail::parent_grad<T>(self, 0);
    if (!g) return;
    const T k = self.grad[0] / static_cast<T>(R);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t v = 0; v < V; ++v)
        g[r * V + v] += k * (prob[r * V + v] - (v == targets[r] ? T(1) : T(0)));
  });
}

// Mean binary cross-entropy of sigmoid(logits) against targets in [0, 1].
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const std::vector<T>& targets) {
  const std::size_t n = logits.size();
  if (targets.size() != n) throw ShapeError("bce_with_logits: one target per logit required");
  T loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T x = logits[i];
    loss += std::max(x, T(0)) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  return detail::make_result<T>({1}, {loss / static_cast<T>(n)}, {logits}, [n, targets](auto& self) {
    T* g = detail::parent_grad<T>(self, 0);
    if (!g) return;
    const auto& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < n; ++i) {
      const T s = T(1) / (T(1) + std::exp(-xv[i]));
      g[i] += self.grad[0] * (s - targets[i]) / static_cast<T>(n);
    }
  });
}

// ---- signal ops ------------------------------------------------------------

// Depthwise causal 1-D convolution over channel-major x [C x T] with kernel
// [C x W]: y[c, t] = sum_k kernel[c, k] * x[c, t - (W - 1 - k) * dilation],
// zero left padding.
template <typename T>
Tensor<T> conv1d_depthwise_causal(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t dilation = 1) {
  detail::check_rank2(x, "conv1d_depthwise_causal");
  detail::check_rank2(kernel, "conv1d_depthwise_causal");
  if (dilation < 1) throw ConfigError("conv1d_depthwise_causal: dilation must be positive");
  const std::size_t C = x.dim(0), Tn = x.dim(1), W = kernel.dim(1);
  if (kernel.dim(0) != C)
    throw ShapeError("conv1d_depthwise_causal: input has " + std::to_string(C) + " channels, kernel has " +
                     std::to_string(kernel.dim(0)));
  if (W < 1 || Tn < 1) throw ShapeError("conv1d_depthwise_causal: empty kernel or input");
  std::vector<T> y(C * Tn, T(0));
  const auto& xv = x.values();
  for (std::size_t c = 0; c < C; ++c) {
    const T* xr = xv.data() + c * Tn;
    T* yr = y.data() + c * Tn;
    for (std::size_t k = 0; k < W; ++k) {
      const T w = kernel[c * W + k];
      const std::size_t shift = (W - 1 - k) * dilation;
      for (std::size_t t = shift; t < Tn; ++t) yr[t] += w * xr[t - shift];
    }
  }
  return detail::make_result<T>({C, Tn}, std::move(y), {x, kernel}, [C, Tn, W, dilation](auto& self) {
    const auto& xv = self.parents[0]->value;
    const auto& kv = self.parents[1]->value;
    T* gx = detail::parent_grad<T>(self, 0);
    T* gk = detail::parent_grad<T>(self, 1);
    for (std::size_t c = 0; c < C; ++c) {
      const T* G = self.grad.data() + c * Tn;
      for (std::size_t k = 0; k < W; ++k) {
        const std::size_t shift = (W - 1 - k) * dilation;
        if (shift >= Tn) continue;
        if (gx) {
          const T w = kv[c * W + k];
          T* gxr = gx + c * Tn;
          for (std::size_t t = shift; t < Tn; ++t) gxr[t - shift] += w * G[t];
        }
        if (gk) {
          const T* xr = xv.data() + c * Tn;
          T acc = 0;
          for (std::size_t t = shift; t < Tn; ++t) acc += G[t] * xr[t - shift];
          gk[c * W + k] += acc;
        }
      }
    }
  });
}

// [C x T] -> [C*f x T/f]: row c*f + k, column j holds x[c, j*f + k].
template <typename T>
Tensor<T> fold_time(const Tensor<T>& x, std::size_t f) {
  detail::check_rank2(x, "fold_time");
  const std::size_t C = x.dim(0), Tn = x.dim(1);
  if (f < 1) throw ConfigError("fold_time: factor must be positive");
  if (Tn % f != 0) throw ShapeError("fold_time: time " + std::to_string(Tn) + " not divisible by " + std::to_string(f));
  const std::size_t J = Tn / f;
  std::vector<T> y(C * Tn);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = 0; k < f; ++k) y[(c * f + k) * J + j] = x[c * Tn + j * f + k];
  return detail::make_result<T>({C * f, J}, std::move(y), {x}, [C, Tn, J, f](auto& self) {
    if (T* g = detail::parent_grad<T>(self, 0))
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t k = 0; k < f; ++k) g[c * Tn + j * f + k] += self.grad[(c * f + k) * J + j];
  });
}

// Inverse of fold_time: [C*f x J] -> [C x J*f].
template <typename T>
Tensor<T> unfold_time(const Tensor<T>& y, std::size_t f) {
  detail::check_rank2(y, "unfold_time");
  if (f < 1) throw ConfigError("unfold_time: factor must be positive");
  if (y.dim(0) % f != 0) throw ShapeError("unfold_time: rows not divisible by factor");
  const std::size_t C = y.dim(0) / f, J = y.dim(1), Tn = J * f;
  std::vector<T> x(C * Tn);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = 0; k < f; ++k) x[c * Tn + j * f + k] = y[(c * f + k) * J + j];
  return detail::make_result<T>({C, Tn}, std::move(x), {y}, [C, Tn, J, f](auto& self) {
    if (T* g = detail::parent_grad<T>(self, 0))
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t k = 0; k < f; ++k) g[(c * f + k) * J + j] += self.grad[c * Tn + j * f + k];
  });
}

// Overlapping frames of a signal (any shape, read flat): [F x win], F = 1 + (N - win) / hop.
template <typename T>
Tensor<T> frame_signal(const Tensor<T>& x, std::size_t win, std::size_t hop) {
  const std::size_t N = x.size();
  if (win < 1 || hop < 1 || N < win) throw ShapeError("frame_signal: signal shorter than window");
  const std::size_t F = 1 + (N - win) / hop;
  std::vector<T> y(F * win);
  for (std::size_t f = 0; f < F; ++f) std::copy_n(x.values().begin() + f * hop, win, y.begin() + f * win);
  return detail::make_result<T>({F, win}, std::move(y), {x}, [F, win, hop](auto& self) {
    if (T* g = detail::parent_grad<T>(self, 0))
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t i = 0; i < win; ++i) g[f * hop + i] += self.grad[f * win + i];
  });
}

// Padding with zeros on the right of the time axis of [C x T].
template <typename T>
Tensor<T> pad_time_right(const Tensor<T>& x, std::size_t extra) {
  detail::check_rank2(x, "pad_time_right");
  if (extra == 0) return x;
  const std::size_t C = x.dim(0), Tn = x.dim(1);
  std::vector<T> y(C * (Tn + extra), T(0));
  for (std::size_t c = 0; c < C; ++c) std::copy_n(x.values().begin() + c * Tn, Tn, y.begin() + c * (Tn + extra));
  return detail::make_result<T>({C, Tn + extra}, std::move(y), {x}, [C, Tn, extra](auto& self) {
    if (T* g = detail::parent_grad<T>(self, 0))
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < Tn; ++t) g[c * Tn + t] += self.grad[c * (Tn + extra) + t];
  });
}

}  // namespace ntd
