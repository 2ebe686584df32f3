#include "mattnet/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "mattnet/errors.hpp"

namespace mattnet::ad {

namespace {

std::string s(const Tensor& t) { return shape_to_string(t.shape()); }

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + s(t));
  }
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[m x k] += G[m x n] * B[k x n]^T
void gemm_nt_acc(const double* g, const double* b, double* da, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* darow = da + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      darow[p] += acc;
    }
  }
}

// dB[k x n] += A[m x k]^T * G[m x n]
void gemm_tn_acc(const double* a, const double* g, double* db, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* dbrow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
    }
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Strided view of the lanes a reduction along `axis` walks over.
struct Lanes {
  std::size_t count;   // number of independent lanes
  std::size_t length;  // entries per lane
  std::size_t stride;  // distance between consecutive entries in a lane
  std::size_t offset(std::size_t lane) const { return stride == 1 ? lane * length : lane; }
};

Lanes lanes_for(const Tensor& x, std::size_t axis, const char* op) {
  if (x.rank() == 1) return {1, x.size(), 1};
  if (x.rank() == 2) {
    if (axis == 1) return {x.rows(), x.cols(), 1};
    if (axis == 0) return {x.cols(), x.rows(), x.cols()};
  }
  throw DimensionError(std::string(op) + ": unsupported axis " + std::to_string(axis) + " for " + s(x));
}

template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D dfdx_from_y) {
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [dfdx_from_y](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      in.grad[i] += self.grad[i] * dfdx_from_y(in.value[i], self.value[i]);
    }
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: incompatible shapes " + s(a) + " and " + s(b));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& A = *self.inputs[0];
    Node& B = *self.inputs[1];
    if (A.requires_grad) gemm_nt_acc(self.grad.data(), B.value.data(), A.grad.data(), m, k, n);
    if (B.requires_grad) gemm_tn_acc(A.value.data(), self.grad.data(), B.grad.data(), m, k, n);
  });
}

Tensor matvec(const Tensor& m, const Tensor& v) {
  if (m.rank() != 2 || v.rank() != 1 || m.cols() != v.size()) {
    throw DimensionError("matvec: incompatible shapes " + s(m) + " and " + s(v));
  }
  const std::size_t rows = m.rows(), cols = m.cols();
  std::vector<double> out(rows, 0.0);
  gemm_nt_acc(v.values().data(), m.values().data(), out.data(), 1, rows, cols);
  return make_result({rows}, std::move(out), {m, v}, [rows, cols](Node& self) {
    Node& M = *self.inputs[0];
    Node& V = *self.inputs[1];
    if (M.requires_grad) gemm_tn_acc(self.grad.data(), V.value.data(), M.grad.data(), 1, rows, cols);
    if (V.requires_grad) gemm_acc(self.grad.data(), M.value.data(), V.grad.data(), 1, rows, cols);
  });
}

Tensor vecmat(const Tensor& v, const Tensor& m) {
  if (m.rank() != 2 || v.rank() != 1 || m.rows() != v.size()) {
    throw DimensionError("vecmat: incompatible shapes " + s(v) + " and " + s(m));
  }
  const std::size_t rows = m.rows(), cols = m.cols();
  std::vector<double> out(cols, 0.0);
  gemm_acc(v.values().data(), m.values().data(), out.data(), 1, rows, cols);
  return make_result({cols}, std::move(out), {v, m}, [rows, cols](Node& self) {
    Node& V = *self.inputs[0];
    Node& M = *self.inputs[1];
    if (V.requires_grad) gemm_nt_acc(self.grad.data(), M.value.data(), V.grad.data(), 1, rows, cols);
    if (M.requires_grad) gemm_tn_acc(V.value.data(), self.grad.data(), M.grad.data(), 1, rows, cols);
  });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(w, 2, "affine");
  require_rank(b, 1, "affine");
  const std::size_t in = w.rows(), out_dim = w.cols();
  std::size_t n;
  Shape out_shape;
  if (x.rank() == 1 && x.size() == in) {
    n = 1;
    out_shape = {out_dim};
  } else if (x.rank() == 2 && x.cols() == in) {
    n = x.rows();
    out_shape = {n, out_dim};
  } else {
    throw DimensionError("affine: input " + s(x) + " does not match weight " + s(w));
  }
  if (b.size() != out_dim) throw DimensionError("affine: bias " + s(b) + " does not match weight " + s(w));
  std::vector<double> out(n * out_dim);
  const auto bv = b.values();
  for (std::size_t r = 0; r < n; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * out_dim);
  gemm_acc(x.values().data(), w.values().data(), out.data(), n, in, out_dim);
  return make_result(std::move(out_shape), std::move(out), {x, w, b}, [n, in, out_dim](Node& self) {
    Node& X = *self.inputs[0];
    Node& W = *self.inputs[1];
    Node& B = *self.inputs[2];
    if (X.requires_grad) gemm_nt_acc(self.grad.data(), W.value.data(), X.grad.data(), n, in, out_dim);
    if (W.requires_grad) gemm_tn_acc(X.value.data(), self.grad.data(), W.grad.data(), n, in, out_dim);
    if (B.requires_grad) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < out_dim; ++j) B.grad[j] += self.grad[r * out_dim + j];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
      for (int k = 0; k < 2; ++k) {
        Node& in = *self.inputs[k];
        if (!in.requires_grad) continue;
        for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
      }
    });
  }
  if (a.rank() == 2 && b.rank() == 1 && a.cols() == b.size()) {
    const std::size_t rows = a.rows(), cols = a.cols();
    std::vector<double> out(a.size());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = a[r * cols + c] + b[c];
    return make_result(a.shape(), std::move(out), {a, b}, [rows, cols](Node& self) {
      Node& A = *self.inputs[0];
      Node& B = *self.inputs[1];
      if (A.requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
      if (B.requires_grad)
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) B.grad[c] += self.grad[r * cols + c];
    });
  }
  throw DimensionError("add: incompatible shapes " + s(a) + " and " + s(b));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("sub: incompatible shapes " + s(a) + " and " + s(b));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& A = *self.inputs[0];
    Node& B = *self.inputs[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (A.requires_grad) A.grad[i] += self.grad[i];
      if (B.requires_grad) B.grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("mul: incompatible shapes " + s(a) + " and " + s(b));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& A = *self.inputs[0];
    Node& B = *self.inputs[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (A.requires_grad) A.grad[i] += self.grad[i] * B.value[i];
      if (B.requires_grad) B.grad[i] += self.grad[i] * A.value[i];
    }
  });
}

Tensor scale_shift(const Tensor& x, double alpha, double beta) {
  return unary(
      x, [alpha, beta](double v) { return alpha * v + beta; }, [alpha](double, double) { return alpha; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v < 0.0 ? 0.0 : (v == 0.0 ? 0.0 : v); }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const std::size_t rank = parts.front().rank();
  for (const Tensor& p : parts) {
    if (p.rank() != rank) throw DimensionError("concat: mixed ranks " + s(parts.front()) + " and " + s(p));
  }
  if (rank == 1) {
    std::vector<double> out;
    std::vector<std::size_t> offsets;
    for (const Tensor& p : parts) {
      offsets.push_back(out.size());
      out.insert(out.end(), p.values().begin(), p.values().end());
    }
    const std::size_t n = out.size();
    return make_result({n}, std::move(out), parts, [offsets](Node& self) {
      for (std::size_t k = 0; k < self.inputs.size(); ++k) {
        Node& in = *self.inputs[k];
        if (!in.requires_grad) continue;
        for (std::size_t i = 0; i < in.value.size(); ++i) in.grad[i] += self.grad[offsets[k] + i];
      }
    });
  }
  if (rank != 2 || axis > 1) throw DimensionError("concat: unsupported rank/axis for " + s(parts.front()));
  if (axis == 0) {
    const std::size_t cols = parts.front().cols();
    std::vector<double> out;
    std::vector<std::size_t> offsets;
    std::size_t rows = 0;
    for (const Tensor& p : parts) {
      if (p.cols() != cols) throw DimensionError("concat axis 0: " + s(parts.front()) + " vs " + s(p));
      offsets.push_back(out.size());
      out.insert(out.end(), p.values().begin(), p.values().end());
      rows += p.rows();
    }
    return make_result({rows, cols}, std::move(out), parts, [offsets](Node& self) {
      for (std::size_t k = 0; k < self.inputs.size(); ++k) {
        Node& in = *self.inputs[k];
        if (!in.requires_grad) continue;
        for (std::size_t i = 0; i < in.value.size(); ++i) in.grad[i] += self.grad[offsets[k] + i];
      }
    });
  }
  const std::size_t rows = parts.front().rows();
  std::vector<std::size_t> col_offsets;
  std::size_t cols = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat axis 1: " + s(parts.front()) + " vs " + s(p));
    col_offsets.push_back(cols);
    cols += p.cols();
  }
  std::vector<double> out(rows * cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t pc = parts[k].cols();
    const auto pv = parts[k].values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.begin() + r * pc, pc, out.begin() + r * cols + col_offsets[k]);
  }
  return make_result({rows, cols}, std::move(out), parts, [rows, cols, col_offsets](Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      Node& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      const std::size_t pc = in.shape[1];
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < pc; ++c) in.grad[r * pc + c] += self.grad[r * cols + col_offsets[k] + c];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) throw DimensionError("reshape: " + s(x) + " to " + shape_to_string(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
  });
}

Tensor index(const Tensor& x, std::size_t i) {
  if (i >= x.size()) throw DimensionError("index " + std::to_string(i) + " out of range for " + s(x));
  return make_result({1}, {x[i]}, {x}, [i](Node& self) { self.inputs[0]->grad[i] += self.grad[0]; });
}

Tensor row_select(const Tensor& table, std::span<const int> ids) {
  require_rank(table, 2, "row_select");
  if (ids.empty()) throw DimensionError("row_select: empty id list");
  const std::size_t n = table.rows(), d = table.cols();
  std::vector<int> kept(ids.begin(), ids.end());
  std::vector<double> out(kept.size() * d);
  for (std::size_t r = 0; r < kept.size(); ++r) {
    if (kept[r] < 0 || static_cast<std::size_t>(kept[r]) >= n) {
      throw DimensionError("row_select: id " + std::to_string(kept[r]) + " out of range for " + s(table));
    }
    std::copy_n(table.values().begin() + kept[r] * d, d, out.begin() + r * d);
  }
  return make_result({kept.size(), d}, std::move(out), {table}, [kept, d](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t r = 0; r < kept.size(); ++r)
      for (std::size_t c = 0; c < d; ++c) in.grad[kept[r] * d + c] += self.grad[r * d + c];
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Lanes lanes = lanes_for(x, axis, "softmax");
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t l = 0; l < lanes.count; ++l) {
    const std::size_t off = lanes.offset(l);
    double mx = xv[off];
    for (std::size_t t = 1; t < lanes.length; ++t) mx = std::max(mx, xv[off + t * lanes.stride]);
    double z = 0.0;
    for (std::size_t t = 0; t < lanes.length; ++t) {
      const double e = std::exp(xv[off + t * lanes.stride] - mx);
      out[off + t * lanes.stride] = e;
      z += e;
    }
    for (std::size_t t = 0; t < lanes.length; ++t) out[off + t * lanes.stride] /= z;
  }
  return make_result(x.shape(), std::move(out), {x}, [lanes](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t l = 0; l < lanes.count; ++l) {
      const std::size_t off = lanes.offset(l);
      double gy = 0.0;
      for (std::size_t t = 0; t < lanes.length; ++t) {
        const std::size_t i = off + t * lanes.stride;
        gy += self.grad[i] * self.value[i];
      }
      for (std::size_t t = 0; t < lanes.length; ++t) {
        const std::size_t i = off + t * lanes.stride;
        in.grad[i] += self.value[i] * (self.grad[i] - gy);
      }
    }
  });
}

Tensor l2_normalize(const Tensor& x, std::size_t axis) {
  const Lanes lanes = lanes_for(x, axis, "l2_normalize");
  std::vector<double> out(x.size());
  std::vector<double> denom(lanes.count);
  const auto xv = x.values();
  for (std::size_t l = 0; l < lanes.count; ++l) {
    const std::size_t off = lanes.offset(l);
    double ss = 0.0;
    for (std::size_t t = 0; t < lanes.length; ++t) ss += xv[off + t * lanes.stride] * xv[off + t * lanes.stride];
    denom[l] = std::max(std::sqrt(ss), kNormEpsilon);
    for (std::size_t t = 0; t < lanes.length; ++t) out[off + t * lanes.stride] = xv[off + t * lanes.stride] / denom[l];
  }
  return make_result(x.shape(), std::move(out), {x}, [lanes, denom](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t l = 0; l < lanes.count; ++l) {
      const std::size_t off = lanes.offset(l);
      // Below the epsilon the denominator is constant.
      const bool clamped = denom[l] <= kNormEpsilon;
      double gy = 0.0;
      if (!clamped) {
        for (std::size_t t = 0; t < lanes.length; ++t) {
          const std::size_t i = off + t * lanes.stride;
          gy += self.grad[i] * self.value[i];
        }
      }
      for (std::size_t t = 0; t < lanes.length; ++t) {
        const std::size_t i = off + t * lanes.stride;
        in.grad[i] += (self.grad[i] - self.value[i] * gy) / denom[l];
      }
    }
  });
}

Tensor mean_pool(const Tensor& x, std::size_t axis) {
  require_rank(x, 2, "mean_pool");
  if (axis > 1) throw DimensionError("mean_pool: axis must be 0 or 1");
  const Lanes lanes = lanes_for(x, axis == 0 ? 0 : 1, "mean_pool");
  std::vector<double> out(lanes.count, 0.0);
  const auto xv = x.values();
  for (std::size_t l = 0; l < lanes.count; ++l) {
    const std::size_t off = lanes.offset(l);
    double acc = 0.0;
    for (std::size_t t = 0; t < lanes.length; ++t) acc += xv[off + t * lanes.stride];
    out[l] = acc / static_cast<double>(lanes.length);
  }
  return make_result({lanes.count}, std::move(out), {x}, [lanes](Node& self) {
    Node& in = *self.inputs[0];
    const double inv = 1.0 / static_cast<double>(lanes.length);
    for (std::size_t l = 0; l < lanes.count; ++l) {
      const std::size_t off = lanes.offset(l);
      for (std::size_t t = 0; t < lanes.length; ++t) in.grad[off + t * lanes.stride] += self.grad[l] * inv;
    }
  });
}

Tensor max_pool(const Tensor& x) {
  const auto xv = x.values();
  const std::size_t arg = static_cast<std::size_t>(std::max_element(xv.begin(), xv.end()) - xv.begin());
  return make_result({1}, {xv[arg]}, {x}, [arg](Node& self) { self.inputs[0]->grad[arg] += self.grad[0]; });
}

Tensor dropout(const Tensor& x, double keep_prob, bool train, Rng& rng) {
  if (!train || keep_prob >= 1.0) return x;
  if (keep_prob <= 0.0) throw UsageError("dropout: keep probability must be positive");
  std::vector<double> mask(x.size());
  std::vector<double> out(x.size());
  const double scale = 1.0 / keep_prob;
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.bernoulli(keep_prob) ? scale : 0.0;
    out[i] = x[i] * mask[i];
  }
  return make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    Node& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i] * mask[i];
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return make_result({1}, {acc}, {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    for (double& g : in.grad) g += self.grad[0];
  });
}

Tensor sum_scalars(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) return Tensor::scalar(0.0);
  double acc = 0.0;
  for (const Tensor& t : scalars) acc += t.item();
  return make_result({1}, {acc}, scalars, [](Node& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->grad[0] += self.grad[0];
    }
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size() || a.rank() != 1 || b.rank() != 1) {
    throw DimensionError("dot: incompatible shapes " + s(a) + " and " + s(b));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return make_result({1}, {acc}, {a, b}, [](Node& self) {
    Node& A = *self.inputs[0];
    Node& B = *self.inputs[1];
    const double g = self.grad[0];
    for (std::size_t i = 0; i < A.value.size(); ++i) {
      if (A.requires_grad) A.grad[i] += g * B.value[i];
      if (B.requires_grad) B.grad[i] += g * A.value[i];
    }
  });
}

Tensor renormalize(const Tensor& x, std::span<const double> mask) {
  if (x.rank() != 1 || mask.size() != x.size()) {
    throw DimensionError("renormalize: mask of length " + std::to_string(mask.size()) + " for " + s(x));
  }
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += mask[i] * x[i];
  if (!(z > 0.0)) throw DimensionError("renormalize: masked sum must be positive");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = mask[i] * x[i] / z;
  std::vector<double> m(mask.begin(), mask.end());
  return make_result(x.shape(), std::move(out), {x}, [m, z](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    double gy = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) gy += self.grad[i] * self.value[i];
    for (std::size_t i = 0; i < m.size(); ++i) in.grad[i] += m[i] * (self.grad[i] - gy) / z;
  });
}

namespace {

struct LstmTrace {
  // Per processing step: concatenated input [x; h_prev], gate activations
  // (i, f, g, o), cell state, tanh(cell), previous cell.
  std::vector<std::vector<double>> xh, gates, cell, tanh_cell, prev_cell;
  std::vector<std::size_t> position;
};

}  // namespace

Tensor lstm(const Tensor& x, const Tensor& w, const Tensor& b, bool reverse) {
  require_rank(x, 2, "lstm");
  require_rank(w, 2, "lstm");
  const std::size_t steps = x.rows(), in = x.cols();
  const std::size_t four_h = w.cols();
  if (four_h % 4 != 0 || w.rows() <= in || b.size() != four_h) {
    throw DimensionError("lstm: weight " + s(w) + " / bias " + s(b) + " incompatible with input " + s(x));
  }
  const std::size_t hid = four_h / 4;
  if (w.rows() != in + hid) throw DimensionError("lstm: weight " + s(w) + " expects input width " + std::to_string(w.rows() - hid) + ", got " + s(x));

  auto trace = std::make_shared<LstmTrace>();
  std::vector<double> out(steps * hid, 0.0);
  std::vector<double> h(hid, 0.0), c(hid, 0.0), z(four_h);
  const auto xv = x.values();
  const auto wv = w.values();
  const auto bv = b.values();
  for (std::size_t step = 0; step < steps; ++step) {
    const std::size_t t = reverse ? steps - 1 - step : step;
    std::vector<double> xh(in + hid);
    std::copy_n(xv.begin() + t * in, in, xh.begin());
    std::copy(h.begin(), h.end(), xh.begin() + in);
    std::copy(bv.begin(), bv.end(), z.begin());
    gemm_acc(xh.data(), wv.data(), z.data(), 1, in + hid, four_h);
    std::vector<double> gates(four_h);
    for (std::size_t j = 0; j < hid; ++j) {
      gates[j] = stable_sigmoid(z[j]);
      gates[hid + j] = stable_sigmoid(z[hid + j]);
      gates[2 * hid + j] = std::tanh(z[2 * hid + j]);
      gates[3 * hid + j] = stable_sigmoid(z[3 * hid + j]);
    }
    std::vector<double> prev = c, tc(hid);
    for (std::size_t j = 0; j < hid; ++j) {
      c[j] = gates[hid + j] * prev[j] + gates[j] * gates[2 * hid + j];
      tc[j] = std::tanh(c[j]);
      h[j] = gates[3 * hid + j] * tc[j];
    }
    std::copy(h.begin(), h.end(), out.begin() + t * hid);
    trace->xh.push_back(std::move(xh));
    trace->gates.push_back(std::move(gates));
    trace->cell.push_back(c);
    trace->tanh_cell.push_back(std::move(tc));
    trace->prev_cell.push_back(std::move(prev));
    trace->position.push_back(t);
  }

  return make_result({steps, hid}, std::move(out), {x, w, b}, [trace, steps, in, hid, four_h](Node& self) {
    Node& X = *self.inputs[0];
    Node& W = *self.inputs[1];
    Node& B = *self.inputs[2];
    std::vector<double> dh_next(hid, 0.0), dc_next(hid, 0.0), dz(four_h), dxh(in + hid);
    for (std::size_t step = steps; step-- > 0;) {
      const std::size_t t = trace->position[step];
      const auto& g = trace->gates[step];
      const auto& tc = trace->tanh_cell[step];
      const auto& prev = trace->prev_cell[step];
      for (std::size_t j = 0; j < hid; ++j) {
        const double dh = self.grad[t * hid + j] + dh_next[j];
        const double ig = g[j], fg = g[hid + j], gg = g[2 * hid + j], og = g[3 * hid + j];
        const double dc = dh * og * (1.0 - tc[j] * tc[j]) + dc_next[j];
        dz[j] = dc * gg * ig * (1.0 - ig);
        dz[hid + j] = dc * prev[j] * fg * (1.0 - fg);
        dz[2 * hid + j] = dc * ig * (1.0 - gg * gg);
        dz[3 * hid + j] = dh * tc[j] * og * (1.0 - og);
        dc_next[j] = dc * fg;
      }
      if (W.requires_grad) gemm_tn_acc(trace->xh[step].data(), dz.data(), W.grad.data(), 1, in + hid, four_h);
      if (B.requires_grad)
        for (std::size_t j = 0; j < four_h; ++j) B.grad[j] += dz[j];
      std::fill(dxh.begin(), dxh.end(), 0.0);
      gemm_nt_acc(dz.data(), W.value.data(), dxh.data(), 1, in + hid, four_h);
      if (X.requires_grad)
        for (std::size_t k = 0; k < in; ++k) X.grad[t * in + k] += dxh[k];
      std::copy(dxh.begin() + in, dxh.end(), dh_next.begin());
    }
  });
}

Tensor weighted_bce(const Tensor& probs, std::span<const double> labels, std::span<const double> weights) {
  require_rank(probs, 1, "weighted_bce");
  if (labels.size() != probs.size() || weights.size() != probs.size()) {
    throw DimensionError("weighted_bce: probs " + s(probs) + " with " + std::to_string(labels.size()) +
                         " labels and " + std::to_string(weights.size()) + " weights");
  }
  constexpr double lo = 1e-12, hi = 1.0 - 1e-12;
  std::vector<double> y(labels.begin(), labels.end()), wt(weights.begin(), weights.end());
  double loss = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double p = std::clamp(probs[j], lo, hi);
    loss -= wt[j] * (y[j] * std::log(p) + (1.0 - y[j]) * std::log(1.0 - p));
  }
  return make_result({1}, {loss}, {probs}, [y = std::move(y), wt = std::move(wt)](Node& self) {
    Node& P = *self.inputs[0];
    for (std::size_t j = 0; j < y.size(); ++j) {
      const double p = P.value[j];
      if (p <= lo || p >= hi) continue;  // clamped region is flat
      P.grad[j] += self.grad[0] * -wt[j] * (y[j] / p - (1.0 - y[j]) / (1.0 - p));
    }
  });
}

}  // namespace mattnet::ad
