#include "trg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "trg/errors.hpp"

namespace trg::ops {

namespace {

using detail::Node;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_finite(const char* op, std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

std::size_t row_len(const Tensor& t) { return t.shape().back(); }

// Gradient sink for input k, or nullptr when that input is constant.
double* sink(Node& self, std::size_t k) {
  auto& in = *self.inputs[k];
  if (!in.requires_grad) return nullptr;
  return in.grad_buffer().data();
}

const std::vector<double>& val(Node& self, std::size_t k) { return self.inputs[k]->value; }

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// c[m x k] += g[m x n] * b[k x n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * g[m x n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * grow[j];
    }
  }
}

template <class F, class DF>
Tensor unary(const char* name, const Tensor& a, F f, DF df) {
  auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return Tensor::from_op(name, a.shape(), std::move(out), {a}, [df](Node& self) {
    double* ga = sink(self, 0);
    if (!ga) return;
    const auto& x = val(self, 0);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor::from_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    if (double* ga = sink(self, 0)) gemm_nt(self.grad.data(), val(self, 1).data(), ga, m, n, k);
    if (double* gb = sink(self, 1)) gemm_tn(val(self, 0).data(), self.grad.data(), gb, m, k, n);
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t t = 0; t < batch; ++t) {
    gemm_nn(a.data().data() + t * m * k, b.data().data() + t * k * n, out.data() + t * m * n, m,
            k, n);
  }
  return Tensor::from_op("bmm", {batch, m, n}, std::move(out), {a, b},
                         [batch, m, k, n](Node& self) {
                           double* ga = sink(self, 0);
                           double* gb = sink(self, 1);
                           for (std::size_t t = 0; t < batch; ++t) {
                             const double* g = self.grad.data() + t * m * n;
                             if (ga) gemm_nt(g, val(self, 1).data() + t * k * n, ga + t * m * k, m, n, k);
                             if (gb) gemm_tn(val(self, 0).data() + t * m * k, g, gb + t * k * n, m, k, n);
                           }
                         });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected a matrix, got " + shape_str(a.shape()));
  return reshape(transpose_last2(reshape(a, {1, a.dim(0), a.dim(1)})), {a.dim(1), a.dim(0)});
}

Tensor transpose_last2(const Tensor& a) {
  if (a.rank() != 3) {
    throw DimensionError("transpose_last2: expected rank 3, got " + shape_str(a.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), n = a.dim(2);
  std::vector<std::int64_t> index(batch * m * n);
  for (std::size_t t = 0; t < batch; ++t)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < m; ++i)
        index[(t * n + j) * m + i] = static_cast<std::int64_t>((t * m + i) * n + j);
  return gather(a, index, {batch, n, m});
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::from_op("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (double* g = sink(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return Tensor::from_op("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = sink(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = sink(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor::from_op("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = sink(self, 0)) {
      const auto& y = val(self, 1);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (double* g = sink(self, 1)) {
      const auto& x = val(self, 0);
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      "add_scalar", a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw DimensionError("add_bias: incompatible shapes " + shape_str(x.shape()) + " and " +
                         shape_str(bias.shape()));
  }
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return Tensor::from_op("add_bias", x.shape(), std::move(out), {x, bias}, [m, n](Node& self) {
    if (double* g = sink(self, 0))
      for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
    if (double* g = sink(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
  });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  return Tensor::from_op("sum", {1}, {acc}, {a}, [](Node& self) {
    if (double* g = sink(self, 0)) {
      const double up = self.grad[0];
      for (std::size_t i = 0; i < self.inputs[0]->value.size(); ++i) g[i] += up;
    }
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::from_op("reshape", std::move(shape), std::move(out), {a}, [](Node& self) {
    if (double* g = sink(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor gather(const Tensor& a, std::span<const std::int64_t> index, Shape out_shape) {
  if (numel(out_shape) != index.size()) {
    throw DimensionError("gather: index count " + std::to_string(index.size()) +
                         " does not fill shape " + shape_str(out_shape));
  }
  const auto src = a.data();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto ix = index[i];
    if (ix >= static_cast<std::int64_t>(src.size())) {
      throw DimensionError("gather: index " + std::to_string(ix) + " out of range for " +
                           shape_str(a.shape()));
    }
    out[i] = ix < 0 ? 0.0 : src[static_cast<std::size_t>(ix)];
  }
  std::vector<std::int64_t> saved(index.begin(), index.end());
  return Tensor::from_op("gather", std::move(out_shape), std::move(out), {a},
                         [saved = std::move(saved)](Node& self) {
                           double* g = sink(self, 0);
                           if (!g) return;
                           for (std::size_t i = 0; i < saved.size(); ++i) {
                             if (saved[i] >= 0) g[saved[i]] += self.grad[i];
                           }
                         });
}

Tensor softmax_rows(const Tensor& x) {
  require_finite("softmax_rows", x.data());
  const std::size_t n = row_len(x), rows = x.size() / n;
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * n;
    double* yr = out.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
  }
  return Tensor::from_op("softmax_rows", x.shape(), std::move(out), {x}, [rows, n](Node& self) {
    double* g = sink(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* gy = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_finite("log_softmax_rows", x.data());
  const std::size_t n = row_len(x), rows = x.size() / n;
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(xr[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xr[j] - lse;
  }
  return Tensor::from_op("log_softmax_rows", x.shape(), std::move(out), {x},
                         [rows, n](Node& self) {
                           double* g = sink(self, 0);
                           if (!g) return;
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* ly = self.value.data() + r * n;
                             const double* gy = self.grad.data() + r * n;
                             double total = 0.0;
                             for (std::size_t j = 0; j < n; ++j) total += gy[j];
                             for (std::size_t j = 0; j < n; ++j)
                               g[r * n + j] += gy[j] - std::exp(ly[j]) * total;
                           }
                         });
}

Tensor kl_rows(const Tensor& p, const Tensor& q, double clamp_eps) {
  require_same_shape("kl_rows", p, q);
  const std::size_t n = row_len(p), rows = p.size() / n;
  const auto pv = p.data(), qv = q.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double sp = 0.0, sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double a = pv[r * n + j], b = qv[r * n + j];
      if (!(a >= 0.0) || !(b >= 0.0)) throw NumericError("kl_rows: negative or NaN probability");
      sp += a;
      sq += b;
    }
    if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
      throw NumericError("kl_rows: row " + std::to_string(r) + " is not stochastic");
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i] == 0.0) continue;
    if (qv[i] == 0.0 && clamp_eps <= 0.0) {
      throw NumericError("kl_rows: q is zero where p is positive (index " + std::to_string(i) + ")");
    }
    total += pv[i] * (std::log(pv[i]) - std::log(std::max(qv[i], clamp_eps)));
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  return Tensor::from_op(
      "kl_rows", {1}, {total * inv_rows}, {p, q}, [inv_rows, clamp_eps](Node& self) {
        const double up = self.grad[0] * inv_rows;
        const auto& pv = val(self, 0);
        const auto& qv = val(self, 1);
        if (double* gp = sink(self, 0)) {
          for (std::size_t i = 0; i < pv.size(); ++i) {
            if (pv[i] == 0.0) continue;
            gp[i] += up * (std::log(pv[i]) - std::log(std::max(qv[i], clamp_eps)) + 1.0);
          }
        }
        if (double* gq = sink(self, 1)) {
          for (std::size_t i = 0; i < pv.size(); ++i) {
            if (pv[i] == 0.0 || qv[i] < clamp_eps) continue;
            gq[i] -= up * pv[i] / qv[i];
          }
        }
      });
}

Tensor kl_rows_from_logits(const Tensor& p_logits, const Tensor& q_logits) {
  require_same_shape("kl_rows_from_logits", p_logits, q_logits);
  const std::size_t n = row_len(p_logits), rows = p_logits.size() / n;
  auto log_p = log_softmax_rows(p_logits);
  auto log_q = log_softmax_rows(q_logits);
  auto p = exp(log_p);
  return scale(sum(mul(p, sub(log_p, log_q))), 1.0 / static_cast<double>(rows));
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape("mse", a, b);
  return mean(square(sub(a, b)));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  std::vector<std::int64_t> index(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw UsageError("cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0," + std::to_string(k) + ")");
    }
    index[i] = static_cast<std::int64_t>(i * k + static_cast<std::size_t>(labels[i]));
  }
  auto picked = gather(log_softmax_rows(logits), index, {rows});
  return scale(sum(picked), -1.0 / static_cast<double>(rows));
}

Tensor row_normalize(const Tensor& x, double eps) {
  const std::size_t n = row_len(x), rows = x.size() / n;
  const auto in = x.data();
  std::vector<double> norms(rows), out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += in[r * n + j] * in[r * n + j];
    norms[r] = std::sqrt(ss);
    const double d = std::max(norms[r], eps);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = in[r * n + j] / d;
  }
  return Tensor::from_op("row_normalize", x.shape(), std::move(out), {x},
                         [rows, n, eps, norms = std::move(norms)](Node& self) {
                           double* g = sink(self, 0);
                           if (!g) return;
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* y = self.value.data() + r * n;
                             const double* gy = self.grad.data() + r * n;
                             if (norms[r] < eps) {
                               // Clamped denominator: plain scaling by 1/eps.
                               for (std::size_t j = 0; j < n; ++j) g[r * n + j] += gy[j] / eps;
                               continue;
                             }
                             double dot = 0.0;
                             for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
                             for (std::size_t j = 0; j < n; ++j)
                               g[r * n + j] += (gy[j] - y[j] * dot) / norms[r];
                           }
                         });
}

Tensor pairwise_sq_distances(const Tensor& x) {
  if (x.rank() != 2) {
    throw DimensionError("pairwise_sq_distances: expected [S x D], got " + shape_str(x.shape()));
  }
  const std::size_t s = x.dim(0), d = x.dim(1);
  const auto in = x.data();
  std::vector<double> out(s * s, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = i + 1; j < s; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = in[i * d + c] - in[j * d + c];
        acc += diff * diff;
      }
      out[i * s + j] = acc;
      out[j * s + i] = acc;
    }
  }
  return Tensor::from_op("pairwise_sq_distances", {s, s}, std::move(out), {x}, [s, d](Node& self) {
    double* g = sink(self, 0);
    if (!g) return;
    const auto& xv = val(self, 0);
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) {
        if (i == j) continue;
        const double w = 2.0 * (self.grad[i * s + j] + self.grad[j * s + i]);
        if (w == 0.0) continue;
        for (std::size_t c = 0; c < d; ++c) g[i * d + c] += w * (xv[i * d + c] - xv[j * d + c]);
      }
    }
  });
}

Tensor diagonal(const Tensor& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw DimensionError("diagonal: expected a square matrix, got " + shape_str(a.shape()));
  }
  const std::size_t n = a.dim(0);
  std::vector<std::int64_t> index(n);
  for (std::size_t i = 0; i < n; ++i) index[i] = static_cast<std::int64_t>(i * n + i);
  return gather(a, index, {n});
}

}  // namespace trg::ops
