// Copyright 2026 The flowplan Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/ops.hpp"

#include <algorithm>
#include <cmath>

#include "flowplan/error.hpp"

namespace flowplan::ad {

namespace {

using BackwardFn = std::function<void(Node&)>;

Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
                   BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const Tensor* in : inputs) any = any || in->requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const Tensor* in : inputs) node->parents.push_back(in->node());
      node->backward_fn = std::move(fn);
    }
  }
  return Tensor(std::move(node));
}

Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(value);
  if (grad_enabled()) {
    bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      for (const Tensor& in : inputs) node->parents.push_back(in.node());
      node->backward_fn = std::move(fn);
    }
  }
  return Tensor(std::move(node));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

bool is_row_broadcast(const Tensor& a, const Tensor& b) {
  return b.rows() == 1 && b.cols() == a.cols() && a.rows() > 1;
}

// out[m×n] += a[m×k]·b[k×n]
void gemm_acc(const double* __restrict a, const double* __restrict b, double* __restrict out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out[m×k] += g[m×n]·bᵀ where b is k×n
void gemm_nt_acc(const double* __restrict g, const double* __restrict b, double* __restrict out, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* orow = out + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      orow[p] += acc;
    }
  }
}

// out[k×n] += aᵀ·g where a is m×k, g is m×n
void gemm_tn_acc(const double* __restrict a, const double* __restrict g, double* __restrict out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* orow = out + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape().str() + " x " + b.shape().str());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.requires_grad) gemm_nt_acc(self.grad.data(), nb.value.data(), na.grad.data(), m, n, k);
    if (nb.requires_grad) gemm_tn_acc(na.value.data(), self.grad.data(), nb.grad.data(), m, k, n);
  });
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto in = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  return make_result({n, m}, std::move(out), {&a}, [m, n](Node& self) {
    Node& na = *self.parents[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) na.grad[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (is_row_broadcast(a, b)) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(a.data().begin(), a.data().end());
    const auto bv = b.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
    return make_result(a.shape(), std::move(out), {&a, &b}, [m, n](Node& self) {
      Node& na = *self.parents[0];
      Node& nb = *self.parents[1];
      if (na.requires_grad)
        for (std::size_t i = 0; i < m * n; ++i) na.grad[i] += self.grad[i];
      if (nb.requires_grad)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) nb.grad[j] += self.grad[i * n + j];
    });
  }
  require_same(a, b, "add");
  std::vector<double> out(a.numel());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (na.requires_grad) na.grad[i] += self.grad[i] * nb.value[i];
      if (nb.requires_grad) nb.grad[i] += self.grad[i] * na.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& x : out) x *= factor;
  return make_result(a.shape(), std::move(out), {&a}, [factor](Node& self) {
    Node& na = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += factor * self.grad[i];
  });
}

Tensor silu(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / (1.0 + std::exp(-av[i]));
  return make_result(a.shape(), std::move(out), {&a}, [](Node& self) {
    Node& na = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = na.value[i];
      const double sig = 1.0 / (1.0 + std::exp(-x));
      na.grad[i] += self.grad[i] * sig * (1.0 + x * (1.0 - sig));
    }
  });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  return make_result(a.shape(), std::move(out), {&a}, [](Node& self) {
    Node& na = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      na.grad[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto av = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = av.data() + i * n;
    const double peak = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - peak);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return make_result(a.shape(), std::move(out), {&a}, [m, n](Node& self) {
    Node& na = *self.parents[0];
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.value.data() + i * n;
      const double* g = self.grad.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) na.grad[i * n + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) throw ShapeError("concat_cols: row mismatch " + parts.front().shape().str() + " vs " + p.shape().str());
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto pv = p.data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.data() + i * p.cols(), p.cols(), out.data() + i * total + offset);
    offset += p.cols();
  }
  return make_result({m, total}, std::move(out), parts, [m, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& np = *self.parents[k];
      if (np.requires_grad)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) np.grad[i * widths[k] + j] += self.grad[i * total + off + j];
      off += widths[k];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::vector<std::size_t> sizes;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.cols() != n) throw ShapeError("concat_rows: column mismatch " + parts.front().shape().str() + " vs " + p.shape().str());
    sizes.push_back(p.numel());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  const std::size_t m = out.size() / n;
  return make_result({m, n}, std::move(out), parts, [sizes](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      Node& np = *self.parents[k];
      if (np.requires_grad)
        for (std::size_t i = 0; i < sizes[k]; ++i) np.grad[i] += self.grad[off + i];
      off += sizes[k];
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > a.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of " + a.shape().str());
  }
  const std::size_t n = a.cols();
  std::vector<double> out(a.data().begin() + begin * n, a.data().begin() + (begin + count) * n);
  return make_result({count, n}, std::move(out), {&a}, [begin, n](Node& self) {
    Node& na = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[begin * n + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > a.cols()) {
    throw ShapeError("slice_cols: cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of " + a.shape().str());
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(a.data().data() + i * n + begin, count, out.data() + i * count);
  return make_result({m, count}, std::move(out), {&a}, [m, n, begin, count](Node& self) {
    Node& na = *self.parents[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) na.grad[i * n + begin + j] += self.grad[i * count + j];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape.numel() != a.numel()) throw ShapeError("reshape: " + a.shape().str() + " to " + shape.str());
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(shape, std::move(out), {&a}, [](Node& self) {
    Node& na = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i];
  });
}

Tensor mean_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(n, 0.0);
  const auto av = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
  for (double& x : out) x /= static_cast<double>(m);
  return make_result({1, n}, std::move(out), {&a}, [m, n](Node& self) {
    Node& na = *self.parents[0];
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) na.grad[i * n + j] += self.grad[j] * inv;
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double x : a.data()) total += x;
  return make_result({1, 1}, {total}, {&a}, [](Node& self) {
    Node& na = *self.parents[0];
    for (double& g : na.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor add_scalars(const std::vector<Tensor>& terms, const std::vector<double>& weights) {
  if (terms.size() != weights.size() || terms.empty()) throw ShapeError("add_scalars: term/weight count mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    if (terms[k].numel() != 1) throw ShapeError("add_scalars: term " + std::to_string(k) + " is " + terms[k].shape().str());
    total += weights[k] * terms[k].item();
  }
  return make_result({1, 1}, {total}, terms, [weights](Node& self) {
    for (std::size_t k = 0; k < weights.size(); ++k)
      if (self.parents[k]->requires_grad) self.parents[k]->grad[0] += weights[k] * self.grad[0];
  });
}

Tensor mse(const Tensor& prediction, const Tensor& target) {
  require_same(prediction, target, "mse");
  const std::size_t n = prediction.numel();
  const auto p = prediction.data(), t = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += (p[i] - t[i]) * (p[i] - t[i]);
  return make_result({1, 1}, {total / static_cast<double>(n)}, {&prediction, &target}, [n](Node& self) {
    Node& np = *self.parents[0];
    Node& nt = *self.parents[1];
    const double c = 2.0 * self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = np.value[i] - nt.value[i];
      if (np.requires_grad) np.grad[i] += c * d;
      if (nt.requires_grad) nt.grad[i] -= c * d;
    }
  });
}

Tensor l1_mean(const Tensor& prediction, const Tensor& target) {
  require_same(prediction, target, "l1_mean");
  const std::size_t n = prediction.numel();
  const auto p = prediction.data(), t = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::abs(p[i] - t[i]);
  return make_result({1, 1}, {total / static_cast<double>(n)}, {&prediction, &target}, [n](Node& self) {
    Node& np = *self.parents[0];
    Node& nt = *self.parents[1];
    const double c = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = np.value[i] - nt.value[i];
      const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      if (np.requires_grad) np.grad[i] += c * sgn;
      if (nt.requires_grad) nt.grad[i] -= c * sgn;
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rows() != 1) throw ShapeError("cross_entropy: logits must be 1xN, got " + logits.shape().str());
  if (label >= logits.cols()) throw ContractError("cross_entropy: label " + std::to_string(label) + " out of range");
  const auto z = logits.data();
  const double peak = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - peak);
  const double log_norm = peak + std::log(total);
  return make_result({1, 1}, {log_norm - z[label]}, {&logits}, [label, log_norm](Node& self) {
    Node& nl = *self.parents[0];
    for (std::size_t j = 0; j < nl.value.size(); ++j) {
      const double p = std::exp(nl.value[j] - log_norm);
      nl.grad[j] += self.grad[0] * (p - (j == label ? 1.0 : 0.0));
    }
  });
}

Tensor clamp_step_length(const Tensor& waypoints, double max_step) {
  if (waypoints.cols() != 2) throw ShapeError("clamp_step_length: expected Hx2, got " + waypoints.shape().str());
  if (!(max_step > 0.0)) throw ContractError("clamp_step_length: max_step must be positive");
  const std::size_t h = waypoints.rows();
  const auto w = waypoints.data();
  // Steps d_k = w_k - w_{k-1} (w_{-1} = origin), rescaled by f_k = min(1, m/|d_k|).
  std::vector<double> steps(2 * h), factors(h), out(2 * h);
  double px = 0.0, py = 0.0, ox = 0.0, oy = 0.0;
  bool clamped = false;
  for (std::size_t k = 0; k < h; ++k) {
    const double dx = w[2 * k] - px, dy = w[2 * k + 1] - py;
    px = w[2 * k];
    py = w[2 * k + 1];
    const double len = std::hypot(dx, dy);
    factors[k] = len > max_step ? max_step / len : 1.0;
    clamped = clamped || factors[k] < 1.0;
    steps[2 * k] = dx;
    steps[2 * k + 1] = dy;
    // Until the first clamp the polyline is returned bit-exactly.
    ox = clamped ? ox + factors[k] * dx : px;
    oy = clamped ? oy + factors[k] * dy : py;
    out[2 * k] = ox;
    out[2 * k + 1] = oy;
  }
  return make_result(waypoints.shape(), std::move(out), {&waypoints},
                     [h, steps, factors, max_step](Node& self) {
    Node& nw = *self.parents[0];
    // out_k = sum_{j<=k} c_j, so dL/dc_j = sum_{k>=j} g_k.
    std::vector<double> gc(2 * h, 0.0);
    double sx = 0.0, sy = 0.0;
    for (std::size_t k = h; k-- > 0;) {
      sx += self.grad[2 * k];
      sy += self.grad[2 * k + 1];
      gc[2 * k] = sx;
      gc[2 * k + 1] = sy;
    }
    // c = f·d; when clamped c = m·d/|d| whose Jacobian is (m/|d|)(I - d̂d̂ᵀ).
    std::vector<double> gd(2 * h);
    for (std::size_t k = 0; k < h; ++k) {
      const double dx = steps[2 * k], dy = steps[2 * k + 1];
      const double gx = gc[2 * k], gy = gc[2 * k + 1];
      if (factors[k] < 1.0) {
        const double len = std::hypot(dx, dy);
        const double ux = dx / len, uy = dy / len;
        const double proj = gx * ux + gy * uy;
        gd[2 * k] = (max_step / len) * (gx - proj * ux);
        gd[2 * k + 1] = (max_step / len) * (gy - proj * uy);
      } else {
        gd[2 * k] = gx;
        gd[2 * k + 1] = gy;
      }
    }
    // d_k = w_k - w_{k-1}
    for (std::size_t k = 0; k < h; ++k) {
      nw.grad[2 * k] += gd[2 * k];
      nw.grad[2 * k + 1] += gd[2 * k + 1];
      if (k + 1 < h) {
        nw.grad[2 * k] -= gd[2 * (k + 1)];
        nw.grad[2 * k + 1] -= gd[2 * (k + 1) + 1];
      }
    }
  });
}

AttentionResult softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v, double scale_factor) {
  if (q.cols() != k.cols()) {
    throw ShapeError("attention: query width " + q.shape().str() + " differs from key width " + k.shape().str());
  }
  if (k.rows() != v.rows()) {
    throw ShapeError("attention: key count " + k.shape().str() + " differs from value count " + v.shape().str());
  }
  const double s = scale_factor > 0.0 ? scale_factor : 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor logits = scale(matmul(q, transpose(k)), s);
  Tensor weights = softmax_rows(logits);
  return {matmul(weights, v), weights};
}

}  // namespace flowplan::ad
