#include "unicorn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "unicorn/error.hpp"

namespace unicorn::ops {

namespace {

using detail::Node;
using BackwardFn = std::function<void(const Node&)>;

void check_finite(const std::vector<double>& values, const char* op) {
  for (const double v : values) {
    if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, std::string("non-finite value produced by ") + op);
  }
}

Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<const Tensor*> inputs,
                   const char* op, BackwardFn backward) {
  check_finite(values, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const Tensor* t : inputs) needs_grad = needs_grad || t->requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->inputs.push_back(t->node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs, const char* op,
                   BackwardFn backward) {
  check_finite(values, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    for (const Tensor& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void require_rank2(const Tensor& t, const char* op) {
  if (!t.defined() || t.rank() != 2) {
    fail(ErrorCode::kShape, std::string(op) + " expects a rank-2 tensor, got " +
                                (t.defined() ? shape_string(t.shape()) : "undefined"));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::kShape,
         std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

Node* raw(const Tensor& t) { return t.node().get(); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    fail(ErrorCode::kShape, "matmul: inner extents differ " + shape_string(a.shape()) + " . " + shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  Node* na = raw(a);
  Node* nb = raw(b);
  return make_result({m, n}, std::move(out), {&a, &b}, "matmul", [na, nb, m, k, n](const Node& self) {
    const double* g = self.grad.data();
    if (na->requires_grad) {
      // dA = dC . B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = nb->data.data() + p * n;
          const double* grow = g + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          na->grad[i * k + p] += acc;
        }
      }
    }
    if (nb->requires_grad) {
      // dB = A^T . dC
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = na->data[i * k + p];
          double* bgrad = nb->grad.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) bgrad[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.at(i * n + j);
  Node* na = raw(a);
  return make_result({n, m}, std::move(out), {&a}, "transpose", [na, m, n](const Node& self) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) na->grad[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  Node* na = raw(a);
  Node* nb = raw(b);
  return make_result(a.shape(), std::move(out), {&a, &b}, "add", [na, nb](const Node& self) {
    for (Node* in : {na, nb}) {
      if (!in->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  Node* na = raw(a);
  Node* nb = raw(b);
  return make_result(a.shape(), std::move(out), {&a, &b}, "sub", [na, nb](const Node& self) {
    if (na->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += self.grad[i];
    if (nb->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) nb->grad[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  Node* na = raw(a);
  Node* nb = raw(b);
  return make_result(a.shape(), std::move(out), {&a, &b}, "mul", [na, nb](const Node& self) {
    if (na->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += self.grad[i] * nb->data[i];
    if (nb->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) nb->grad[i] += self.grad[i] * na->data[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * factor;
  Node* na = raw(a);
  return make_result(a.shape(), std::move(out), {&a}, "scale", [na, factor](const Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += self.grad[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() == 0 || bias.rank() != 1 || bias.dim(0) != x.shape().back()) {
    fail(ErrorCode::kShape, "add_bias: bias " + shape_string(bias.shape()) + " does not match " + shape_string(x.shape()));
  }
  const std::size_t n = bias.dim(0);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) + bias.at(i % n);
  Node* nx = raw(x);
  Node* nb = raw(bias);
  return make_result(x.shape(), std::move(out), {&x, &bias}, "add_bias", [nx, nb, n](const Node& self) {
    if (nx->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) nx->grad[i] += self.grad[i];
    if (nb->requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) nb->grad[i % n] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (const double v : x.data()) total += v;
  Node* nx = raw(x);
  return make_result({}, {total}, {&x}, "sum", [nx](const Node& self) {
    for (double& g : nx->grad) g += self.grad[0];
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double kCoef = 0.044715;
  const double k = std::sqrt(2.0 / std::numbers::pi);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.at(i);
    out[i] = 0.5 * v * (1.0 + std::tanh(k * (v + kCoef * v * v * v)));
  }
  Node* nx = raw(x);
  return make_result(x.shape(), std::move(out), {&x}, "gelu", [nx, k](const Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double v = nx->data[i];
      const double t = std::tanh(k * (v + kCoef * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * kCoef * v * v);
      nx->grad[i] += self.grad[i] * d;
    }
  });
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.at(i));
  Node* nx = raw(x);
  return make_result(x.shape(), std::move(out), {&x}, "tanh", [nx](const Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) nx->grad[i] += self.grad[i] * (1.0 - self.data[i] * self.data[i]);
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.at(i);
    out[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  Node* nx = raw(x);
  return make_result(x.shape(), std::move(out), {&x}, "sigmoid", [nx](const Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) nx->grad[i] += self.grad[i] * self.data[i] * (1.0 - self.data[i]);
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) fail(ErrorCode::kShape, "softmax: axis out of range for " + shape_string(x.shape()));
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t q = 0; q < inner; ++q) {
      const std::size_t base = o * n * inner + q;
      double mx = in[base];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[base + i * inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = std::exp(in[base + i * inner] - mx);
        out[base + i * inner] = e;
        z += e;
      }
      for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= z;
    }
  }
  Node* nx = raw(x);
  return make_result(s, std::move(out), {&x}, "softmax", [nx, outer, inner, n](const Node& self) {
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t q = 0; q < inner; ++q) {
        const std::size_t base = o * n * inner + q;
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += self.grad[base + i * inner] * self.data[base + i * inner];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t idx = base + i * inner;
          nx->grad[idx] += self.data[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() == 0) fail(ErrorCode::kShape, "layer_norm on a scalar");
  const std::size_t n = x.shape().back();
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    fail(ErrorCode::kShape, "layer_norm: gain/bias must have shape [" + std::to_string(n) + "]");
  }
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mean) * inv;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = h * gain.at(j) + bias.at(j);
    }
  }
  Node* nx = raw(x);
  Node* ng = raw(gain);
  Node* nb = raw(bias);
  return make_result(x.shape(), std::move(out), {&x, &gain, &bias}, "layer_norm",
                     [nx, ng, nb, xhat, inv_std, rows, n](const Node& self) {
                       const double dn = static_cast<double>(n);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* g = self.grad.data() + r * n;
                         const double* h = xhat->data() + r * n;
                         if (ng->requires_grad)
                           for (std::size_t j = 0; j < n; ++j) ng->grad[j] += g[j] * h[j];
                         if (nb->requires_grad)
                           for (std::size_t j = 0; j < n; ++j) nb->grad[j] += g[j];
                         if (!nx->requires_grad) continue;
                         double sum_dh = 0.0, sum_dh_h = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           const double dh = g[j] * ng->data[j];
                           sum_dh += dh;
                           sum_dh_h += dh * h[j];
                         }
                         const double inv = (*inv_std)[r];
                         for (std::size_t j = 0; j < n; ++j) {
                           const double dh = g[j] * ng->data[j];
                           nx->grad[r * n + j] += inv / dn * (dn * dh - sum_dh - h[j] * sum_dh_h);
                         }
                       }
                     });
}

Tensor dropout(const Tensor& x, double p, Rng* rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) fail(ErrorCode::kInvalidArgument, "dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  if (rng == nullptr) fail(ErrorCode::kInvalidArgument, "dropout in training mode needs an rng");
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng->uniform() < p ? 0.0 : keep_scale;
    out[i] = x.at(i) * (*mask)[i];
  }
  Node* nx = raw(x);
  return make_result(x.shape(), std::move(out), {&x}, "dropout", [nx, mask](const Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) nx->grad[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  const std::size_t c = logits.numel();
  if (label >= c) {
    fail(ErrorCode::kInvalidArgument,
         "cross_entropy: label " + std::to_string(label) + " out of range for " + std::to_string(c) + " classes");
  }
  const auto z = logits.data();
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (const double v : z) total += std::exp(v - mx);
  const double log_z = mx + std::log(total);
  Node* nl = raw(logits);
  return make_result({}, {log_z - z[label]}, {&logits}, "cross_entropy", [nl, label, log_z](const Node& self) {
    for (std::size_t i = 0; i < nl->data.size(); ++i) {
      const double p = std::exp(nl->data[i] - log_z);
      nl->grad[i] += self.grad[0] * (p - (i == label ? 1.0 : 0.0));
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorCode::kShape, "concat_rows of nothing");
  const std::size_t cols = parts.front().rank() == 2 ? parts.front().dim(1) : 0;
  std::size_t rows = 0;
  for (const Tensor& t : parts) {
    require_rank2(t, "concat_rows");
    if (t.dim(1) != cols) fail(ErrorCode::kShape, "concat_rows: column count mismatch");
    rows += t.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  std::vector<Node*> nodes;
  for (const Tensor& t : parts) {
    out.insert(out.end(), t.data().begin(), t.data().end());
    nodes.push_back(raw(t));
  }
  return make_result({rows, cols}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()), "concat_rows",
                     [nodes](const Node& self) {
                       std::size_t offset = 0;
                       for (Node* in : nodes) {
                         const std::size_t len = in->data.size();
                         if (in->requires_grad)
                           for (std::size_t i = 0; i < len; ++i) in->grad[i] += self.grad[offset + i];
                         offset += len;
                       }
                     });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorCode::kShape, "concat_cols of nothing");
  const std::size_t rows = parts.front().rank() == 2 ? parts.front().dim(0) : 0;
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  std::vector<Node*> nodes;
  for (const Tensor& t : parts) {
    require_rank2(t, "concat_cols");
    if (t.dim(0) != rows) fail(ErrorCode::kShape, "concat_cols: row count mismatch");
    widths.push_back(t.dim(1));
    nodes.push_back(raw(t));
    cols += t.dim(1);
  }
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < widths[p]; ++c) out[r * cols + offset + c] = parts[p].at(r * widths[p] + c);
    offset += widths[p];
  }
  return make_result({rows, cols}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()), "concat_cols",
                     [nodes, widths, rows, cols](const Node& self) {
                       std::size_t off = 0;
                       for (std::size_t p = 0; p < nodes.size(); ++p) {
                         if (nodes[p]->requires_grad) {
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < widths[p]; ++c)
                               nodes[p]->grad[r * widths[p] + c] += self.grad[r * cols + off + c];
                         }
                         off += widths[p];
                       }
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_rows");
  if (begin + count > x.dim(0)) fail(ErrorCode::kShape, "slice_rows out of range");
  const std::size_t cols = x.dim(1);
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                          x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  Node* nx = raw(x);
  return make_result({count, cols}, std::move(out), {&x}, "slice_rows", [nx, begin, cols](const Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) nx->grad[begin * cols + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_cols");
  if (begin + count > x.dim(1)) fail(ErrorCode::kShape, "slice_cols out of range");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out[r * count + c] = x.at(r * cols + begin + c);
  Node* nx = raw(x);
  return make_result({rows, count}, std::move(out), {&x}, "slice_cols", [nx, begin, count, rows, cols](const Node& self) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < count; ++c) nx->grad[r * cols + begin + c] += self.grad[r * count + c];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel() || shape.size() > 3) {
    fail(ErrorCode::kShape, "reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  Node* nx = raw(x);
  return make_result(std::move(shape), std::move(out), {&x}, "reshape", [nx](const Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) nx->grad[i] += self.grad[i];
  });
}

}  // namespace unicorn::ops
