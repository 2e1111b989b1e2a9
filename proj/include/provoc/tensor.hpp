#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "provoc/common.hpp"

namespace provoc::ag {

inline size_t numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  return n;
}

struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on demand
  bool needs_grad = false;
  std::string name;  // parameters only
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

using NodePtr = std::shared_ptr<Node>;

// Graph recording is on by default; NoGradGuard switches it off for inference.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

class Tensor {
public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor leaf(std::vector<int> shape, std::vector<double> data, bool needs_grad = false,
                     std::string name = {}) {
    auto n = std::make_shared<Node>();
    check(numel(shape) == data.size(), "tensor data size mismatch for ", name);
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->needs_grad = needs_grad;
    n->name = std::move(name);
    return Tensor(n);
  }

  static Tensor zeros(std::vector<int> shape, bool needs_grad = false) {
    std::vector<double> d(numel(shape), 0.0);
    return leaf(std::move(shape), std::move(d), needs_grad);
  }

  bool defined() const { return node_ != nullptr; }
  NodePtr node() const { return node_; }
  const std::vector<int>& shape() const { return node_->shape; }
  size_t size() const { return node_->value.size(); }
  int rows() const { return node_->shape.size() >= 1 ? node_->shape[0] : 1; }
  int cols() const { return node_->shape.size() >= 2 ? node_->shape[1] : 1; }
  std::vector<double>& data() { return node_->value; }
  const std::vector<double>& data() const { return node_->value; }
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool needs_grad() const { return node_->needs_grad; }

  double scalar() const {
    check(size() == 1, "scalar() on tensor of size ", size());
    return node_->value[0];
  }

  double at(int i, int j) const { return node_->value[static_cast<size_t>(i) * cols() + j]; }

  // value copy with no graph history
  Tensor detach() const { return leaf(node_->shape, node_->value, false); }

private:
  NodePtr node_;
};

namespace detail {

inline Tensor make_op(std::vector<int> shape, std::vector<double> value,
                      std::vector<NodePtr> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (grad_mode()) {
    bool any = false;
    for (const auto& p : parents)
      if (p->needs_grad) any = true;
    if (any) {
      n->needs_grad = true;
      n->parents = std::move(parents);
      n->backprop = std::move(backprop);
    }
  }
  return Tensor(n);
}

inline void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check(a.shape() == b.shape(), op, ": shape mismatch");
}

}  // namespace detail

// ---- elementwise ----

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "add");
  std::vector<double> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] + b.data()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op(a.shape(), std::move(v), {pa, pb}, [pa, pb](Node& self) {
    if (pa->needs_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "sub");
  std::vector<double> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] - b.data()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op(a.shape(), std::move(v), {pa, pb}, [pa, pb](Node& self) {
    if (pa->needs_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "mul");
  std::vector<double> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] * b.data()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op(a.shape(), std::move(v), {pa, pb}, [pa, pb](Node& self) {
    if (pa->needs_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->value[i];
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] * s;
  auto pa = a.node();
  return detail::make_op(a.shape(), std::move(v), {pa}, [pa, s](Node& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * s;
  });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] + c;
  auto pa = a.node();
  return detail::make_op(a.shape(), std::move(v), {pa}, [pa](Node& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
  });
}

// y = x * s where s is a learned scalar (shape [1])
inline Tensor scale_by_param(const Tensor& a, const Tensor& s) {
  check(s.size() == 1, "scale_by_param expects a scalar parameter");
  const double sv = s.data()[0];
  std::vector<double> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] * sv;
  auto pa = a.node(), ps = s.node();
  return detail::make_op(a.shape(), std::move(v), {pa, ps}, [pa, ps](Node& self) {
    const double sv = ps->value[0];
    if (pa->needs_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * sv;
    }
    if (ps->needs_grad) {
      ps->ensure_grad();
      double acc = 0.0;
      for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * pa->value[i];
      ps->grad[0] += acc;
    }
  });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  auto pa = a.node();
  return detail::make_op(a.shape(), std::move(v), {pa}, [pa](Node& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (pa->value[i] > 0.0) pa->grad[i] += self.grad[i];
  });
}

inline Tensor tanh_op(const Tensor& a) {
  std::vector<double> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a.data()[i]);
  auto pa = a.node();
  auto out = detail::make_op(a.shape(), std::move(v), {pa}, [pa](Node& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      pa->grad[i] += self.grad[i] * (1.0 - y * y);
    }
  });
  return out;
}

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) {
    const double x = a.data()[i];
    v[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  auto pa = a.node();
  auto out = detail::make_op(a.shape(), std::move(v), {pa}, [pa](Node& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      pa->grad[i] += self.grad[i] * y * (1.0 - y);
    }
  });
  return out;
}

inline Tensor exp_op(const Tensor& a) {
  std::vector<double> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = std::exp(a.data()[i]);
  auto pa = a.node();
  auto out = detail::make_op(a.shape(), std::move(v), {pa}, [pa](Node& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[i] += self.grad[i] * self.value[i];
  });
  return out;
}

inline Tensor log_op(const Tensor& a) {
  std::vector<double> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = std::log(a.data()[i]);
  auto pa = a.node();
  return detail::make_op(a.shape(), std::move(v), {pa}, [pa](Node& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] / pa->value[i];
  });
}

// Inverted dropout; the mask is sampled at forward time.
inline Tensor dropout(const Tensor& a, double rate, Rng& rng, bool active) {
  if (!active || rate <= 0.0) return a;
  check(rate < 1.0, "dropout rate must be < 1, got ", rate);
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(a.size());
  std::vector<double> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) {
    (*mask)[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
    v[i] = a.data()[i] * (*mask)[i];
  }
  auto pa = a.node();
  return detail::make_op(a.shape(), std::move(v), {pa}, [pa, mask](Node& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * (*mask)[i];
  });
}

// Gradient reversal: identity forward, -lambda * grad backward.
inline Tensor gradient_reverse(const Tensor& a, double lambda) {
  check(lambda >= 0.0, "gradient reversal lambda must be nonnegative, got ", lambda);
  std::vector<double> v = a.data();
  auto pa = a.node();
  return detail::make_op(a.shape(), std::move(v), {pa}, [pa, lambda](Node& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] -= lambda * self.grad[i];
  });
}

// ---- matrix ops ----

// Fixed iteration order (k ascending per output entry) so results are
// bit-identical across differing matrix heights; blocked BLAS kernels are not.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.shape().size() == 2 && b.shape().size() == 2, "matmul expects rank-2 tensors");
  const int m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  check(k == k2, "matmul inner dimension mismatch: ", k, " vs ", k2);
  std::vector<double> v(static_cast<size_t>(m) * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (int i = 0; i < m; ++i) {
    double* out = v.data() + static_cast<size_t>(i) * n;
    const double* arow = A + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = B + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) out[j] += av * brow[j];
    }
  }
  auto pa = a.node(), pb = b.node();
  return detail::make_op({m, n}, std::move(v), {pa, pb}, [pa, pb, m, k, n](Node& self) {
    const double* G = self.grad.data();
    if (pa->needs_grad) {
      pa->ensure_grad();
      const double* B = pb->value.data();
      // dA = G * B^T
      for (int i = 0; i < m; ++i) {
        const double* grow = G + static_cast<size_t>(i) * n;
        double* darow = pa->grad.data() + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
          const double* brow = B + static_cast<size_t>(kk) * n;
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          darow[kk] += acc;
        }
      }
    }
    if (pb->needs_grad) {
      pb->ensure_grad();
      const double* A = pa->value.data();
      // dB = A^T * G
      for (int i = 0; i < m; ++i) {
        const double* arow = A + static_cast<size_t>(i) * k;
        const double* grow = G + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
          const double av = arow[kk];
          if (av == 0.0) continue;
          double* dbrow = pb->grad.data() + static_cast<size_t>(kk) * n;
          for (int j = 0; j < n; ++j) dbrow[j] += av * grow[j];
        }
      }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  check(a.shape().size() == 2, "transpose expects a rank-2 tensor");
  const int m = a.rows(), n = a.cols();
  std::vector<double> v(a.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) v[static_cast<size_t>(j) * m + i] = a.at(i, j);
  auto pa = a.node();
  return detail::make_op({n, m}, std::move(v), {pa}, [pa, m, n](Node& self) {
    pa->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        pa->grad[static_cast<size_t>(j) * n + i] += self.grad[static_cast<size_t>(i) * m + j];
  });
}

// A[m,n] + v[n] broadcast over rows
inline Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  check(a.shape().size() == 2, "add_rowvec expects a rank-2 tensor");
  check(static_cast<int>(v.size()) == a.cols(), "add_rowvec dimension mismatch");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] = a.at(i, j) + v.data()[j];
  auto pa = a.node(), pv = v.node();
  return detail::make_op({m, n}, std::move(out), {pa, pv}, [pa, pv, m, n](Node& self) {
    if (pa->needs_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pv->needs_grad) {
      pv->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) pv->grad[j] += self.grad[static_cast<size_t>(i) * n + j];
    }
  });
}

inline Tensor row_slice(const Tensor& a, int r0, int r1) {
  check(a.shape().size() == 2, "row_slice expects a rank-2 tensor");
  check(0 <= r0 && r0 < r1 && r1 <= a.rows(), "row_slice range [", r0, ",", r1, ") out of bounds");
  const int n = a.cols(), m = r1 - r0;
  std::vector<double> v(static_cast<size_t>(m) * n);
  std::copy(a.data().begin() + static_cast<size_t>(r0) * n,
            a.data().begin() + static_cast<size_t>(r1) * n, v.begin());
  auto pa = a.node();
  return detail::make_op({m, n}, std::move(v), {pa}, [pa, r0, n](Node& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      pa->grad[static_cast<size_t>(r0) * n + i] += self.grad[i];
  });
}

inline Tensor row_concat(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "row_concat needs at least one part");
  const int n = parts[0].cols();
  int m = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    check(p.shape().size() == 2 && p.cols() == n, "row_concat column mismatch");
    m += p.rows();
    parents.push_back(p.node());
  }
  std::vector<double> v;
  v.reserve(static_cast<size_t>(m) * n);
  for (const auto& p : parts) v.insert(v.end(), p.data().begin(), p.data().end());
  auto parents_copy = parents;
  return detail::make_op({m, n}, std::move(v), std::move(parents),
                         [parents_copy](Node& self) {
                           size_t off = 0;
                           for (const auto& p : parents_copy) {
                             if (p->needs_grad) {
                               p->ensure_grad();
                               for (size_t i = 0; i < p->value.size(); ++i)
                                 p->grad[i] += self.grad[off + i];
                             }
                             off += p->value.size();
                           }
                         });
}

inline Tensor col_slice(const Tensor& a, int c0, int c1) {
  check(a.shape().size() == 2, "col_slice expects a rank-2 tensor");
  check(0 <= c0 && c0 < c1 && c1 <= a.cols(), "col_slice range out of bounds");
  const int m = a.rows(), n = a.cols(), w = c1 - c0;
  std::vector<double> v(static_cast<size_t>(m) * w);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j)
      v[static_cast<size_t>(i) * w + j] = a.at(i, c0 + j);
  auto pa = a.node();
  return detail::make_op({m, w}, std::move(v), {pa}, [pa, c0, m, n, w](Node& self) {
    pa->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        pa->grad[static_cast<size_t>(i) * n + c0 + j] += self.grad[static_cast<size_t>(i) * w + j];
  });
}

inline Tensor col_concat(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "col_concat needs at least one part");
  const int m = parts[0].rows();
  int n = 0;
  std::vector<NodePtr> parents;
  std::vector<int> widths;
  for (const auto& p : parts) {
    check(p.shape().size() == 2 && p.rows() == m, "col_concat row mismatch");
    n += p.cols();
    widths.push_back(p.cols());
    parents.push_back(p.node());
  }
  std::vector<double> v(static_cast<size_t>(m) * n);
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) v[static_cast<size_t>(i) * n + off + j] = p.at(i, j);
    off += w;
  }
  auto parents_copy = parents;
  return detail::make_op({m, n}, std::move(v), std::move(parents),
                         [parents_copy, widths, m, n](Node& self) {
                           int off = 0;
                           for (size_t k = 0; k < parents_copy.size(); ++k) {
                             const auto& p = parents_copy[k];
                             const int w = widths[k];
                             if (p->needs_grad) {
                               p->ensure_grad();
                               for (int i = 0; i < m; ++i)
                                 for (int j = 0; j < w; ++j)
                                   p->grad[static_cast<size_t>(i) * w + j] +=
                                       self.grad[static_cast<size_t>(i) * n + off + j];
                             }
                             off += w;
                           }
                         });
}

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  auto pa = a.node();
  return detail::make_op({1}, {acc}, {pa}, [pa](Node& self) {
    pa->ensure_grad();
    for (auto& g : pa->grad) g += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  auto pa = a.node();
  return detail::make_op({1}, {acc * inv}, {pa}, [pa, inv](Node& self) {
    pa->ensure_grad();
    for (auto& g : pa->grad) g += self.grad[0] * inv;
  });
}

// Softmax over each row restricted to allowed positions; disallowed entries
// are excluded from the sums entirely and produce exact zeros.
inline Tensor masked_softmax_rows(const Tensor& scores,
                                  std::shared_ptr<const std::vector<uint8_t>> allowed) {
  check(scores.shape().size() == 2, "masked_softmax_rows expects a rank-2 tensor");
  const int m = scores.rows(), n = scores.cols();
  check(allowed && static_cast<int>(allowed->size()) == m * n, "mask size mismatch");
  std::vector<double> v(scores.size(), 0.0);
  for (int i = 0; i < m; ++i) {
    double mx = -1e300;
    bool any = false;
    for (int j = 0; j < n; ++j) {
      if ((*allowed)[static_cast<size_t>(i) * n + j]) {
        mx = std::max(mx, scores.at(i, j));
        any = true;
      }
    }
    if (!any) continue;
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      const size_t idx = static_cast<size_t>(i) * n + j;
      if ((*allowed)[idx]) {
        v[idx] = std::exp(scores.data()[idx] - mx);
        z += v[idx];
      }
    }
    for (int j = 0; j < n; ++j) {
      const size_t idx = static_cast<size_t>(i) * n + j;
      if ((*allowed)[idx]) v[idx] /= z;
    }
  }
  auto ps = scores.node();
  auto out = detail::make_op({m, n}, std::move(v), {ps}, [ps, allowed, m, n](Node& self) {
    ps->ensure_grad();
    for (int i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int j = 0; j < n; ++j) {
        const size_t idx = static_cast<size_t>(i) * n + j;
        if ((*allowed)[idx]) dot += self.grad[idx] * self.value[idx];
      }
      for (int j = 0; j < n; ++j) {
        const size_t idx = static_cast<size_t>(i) * n + j;
        if ((*allowed)[idx]) ps->grad[idx] += self.value[idx] * (self.grad[idx] - dot);
      }
    }
  });
  return out;
}

// Per-row layer normalization with learned gain and bias.
inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                              double eps = 1e-5) {
  check(x.shape().size() == 2, "layer_norm_rows expects a rank-2 tensor");
  const int m = x.rows(), n = x.cols();
  check(static_cast<int>(gain.size()) == n && static_cast<int>(bias.size()) == n,
        "layer norm parameter size mismatch");
  std::vector<double> v(x.size());
  auto zcache = std::make_shared<std::vector<double>>(x.size());
  auto scache = std::make_shared<std::vector<double>>(m);
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += x.at(i, j);
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = x.at(i, j) - mu;
      var += d * d;
    }
    var /= n;
    const double inv_sd = 1.0 / std::sqrt(var + eps);
    (*scache)[i] = inv_sd;
    for (int j = 0; j < n; ++j) {
      const size_t idx = static_cast<size_t>(i) * n + j;
      const double z = (x.data()[idx] - mu) * inv_sd;
      (*zcache)[idx] = z;
      v[idx] = gain.data()[j] * z + bias.data()[j];
    }
  }
  auto px = x.node(), pg = gain.node(), pb = bias.node();
  return detail::make_op(
      {m, n}, std::move(v), {px, pg, pb}, [px, pg, pb, zcache, scache, m, n](Node& self) {
        for (int i = 0; i < m; ++i) {
          const double inv_sd = (*scache)[i];
          double mean_gh = 0.0, mean_ghz = 0.0;
          for (int j = 0; j < n; ++j) {
            const size_t idx = static_cast<size_t>(i) * n + j;
            const double gh = self.grad[idx] * pg->value[j];
            mean_gh += gh;
            mean_ghz += gh * (*zcache)[idx];
          }
          mean_gh /= n;
          mean_ghz /= n;
          if (px->needs_grad) {
            px->ensure_grad();
            for (int j = 0; j < n; ++j) {
              const size_t idx = static_cast<size_t>(i) * n + j;
              const double gh = self.grad[idx] * pg->value[j];
              px->grad[idx] += inv_sd * (gh - mean_gh - (*zcache)[idx] * mean_ghz);
            }
          }
          if (pg->needs_grad) {
            pg->ensure_grad();
            for (int j = 0; j < n; ++j) {
              const size_t idx = static_cast<size_t>(i) * n + j;
              pg->grad[j] += self.grad[idx] * (*zcache)[idx];
            }
          }
          if (pb->needs_grad) {
            pb->ensure_grad();
            for (int j = 0; j < n; ++j) pb->grad[j] += self.grad[static_cast<size_t>(i) * n + j];
          }
        }
      });
}

// Row gather from an embedding table.
inline Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  check(table.shape().size() == 2, "embedding table must be rank-2");
  const int v_count = table.rows(), d = table.cols();
  const int L = static_cast<int>(ids.size());
  std::vector<double> v(static_cast<size_t>(L) * d);
  for (int i = 0; i < L; ++i) {
    check(ids[i] >= 0 && ids[i] < v_count, "embedding id ", ids[i], " out of range [0,", v_count, ")");
    std::copy(table.data().begin() + static_cast<size_t>(ids[i]) * d,
              table.data().begin() + static_cast<size_t>(ids[i] + 1) * d,
              v.begin() + static_cast<size_t>(i) * d);
  }
  auto pt = table.node();
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  return detail::make_op({L, d}, std::move(v), {pt}, [pt, ids_copy, d](Node& self) {
    pt->ensure_grad();
    for (size_t i = 0; i < ids_copy->size(); ++i) {
      const size_t dst = static_cast<size_t>((*ids_copy)[i]) * d;
      for (int j = 0; j < d; ++j) pt->grad[dst + j] += self.grad[i * d + j];
    }
  });
}

// 1-D convolution over time. x is [T, c_in], weight is flat [c_out][c_in][k],
// bias [c_out]; output is [T + pad_left + pad_right - k + 1, c_out].
inline Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, int c_in,
                     int c_out, int k, int pad_left, int pad_right) {
  check(x.shape().size() == 2 && x.cols() == c_in, "conv1d input shape mismatch");
  check(static_cast<int>(weight.size()) == c_out * c_in * k, "conv1d weight size mismatch");
  check(static_cast<int>(bias.size()) == c_out, "conv1d bias size mismatch");
  const int T = x.rows();
  const int T_out = T + pad_left + pad_right - k + 1;
  check(T_out >= 1, "conv1d output would be empty");
  std::vector<double> v(static_cast<size_t>(T_out) * c_out);
  const auto W = [&](int o, int c, int kk) {
    return weight.data()[(static_cast<size_t>(o) * c_in + c) * k + kk];
  };
  for (int t = 0; t < T_out; ++t) {
    for (int o = 0; o < c_out; ++o) {
      double acc = bias.data()[o];
      for (int kk = 0; kk < k; ++kk) {
        const int s = t + kk - pad_left;
        if (s < 0 || s >= T) continue;
        for (int c = 0; c < c_in; ++c) acc += x.at(s, c) * W(o, c, kk);
      }
      v[static_cast<size_t>(t) * c_out + o] = acc;
    }
  }
  auto px = x.node(), pw = weight.node(), pb = bias.node();
  return detail::make_op(
      {T_out, c_out}, std::move(v), {px, pw, pb},
      [px, pw, pb, c_in, c_out, k, pad_left, T, T_out](Node& self) {
        const auto widx = [c_in, k](int o, int c, int kk) {
          return (static_cast<size_t>(o) * c_in + c) * k + kk;
        };
        if (px->needs_grad) px->ensure_grad();
        if (pw->needs_grad) pw->ensure_grad();
        if (pb->needs_grad) pb->ensure_grad();
        for (int t = 0; t < T_out; ++t) {
          for (int o = 0; o < c_out; ++o) {
            const double g = self.grad[static_cast<size_t>(t) * c_out + o];
            if (g == 0.0) continue;
            if (pb->needs_grad) pb->grad[o] += g;
            for (int kk = 0; kk < k; ++kk) {
              const int s = t + kk - pad_left;
              if (s < 0 || s >= T) continue;
              for (int c = 0; c < c_in; ++c) {
                if (px->needs_grad)
                  px->grad[static_cast<size_t>(s) * c_in + c] += g * pw->value[widx(o, c, kk)];
                if (pw->needs_grad)
                  pw->grad[widx(o, c, kk)] += g * px->value[static_cast<size_t>(s) * c_in + c];
              }
            }
          }
        }
      });
}

// 3x3 stride-2 convolution with pad 1 on a [C, H, W] map; output
// [c_out, ceil(H/2), ceil(W/2)].
inline Tensor conv2d_s2(const Tensor& x, const Tensor& weight, const Tensor& bias, int c_in,
                        int c_out) {
  check(x.shape().size() == 3 && x.shape()[0] == c_in, "conv2d input shape mismatch");
  const int H = x.shape()[1], W = x.shape()[2];
  const int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  check(static_cast<int>(weight.size()) == c_out * c_in * 9, "conv2d weight size mismatch");
  check(static_cast<int>(bias.size()) == c_out, "conv2d bias size mismatch");
  std::vector<double> v(static_cast<size_t>(c_out) * Ho * Wo);
  const auto xin = [&](int c, int i, int j) {
    return x.data()[(static_cast<size_t>(c) * H + i) * W + j];
  };
  const auto widx = [c_in](int o, int c, int u, int vv) {
    return ((static_cast<size_t>(o) * c_in + c) * 3 + u) * 3 + vv;
  };
  for (int o = 0; o < c_out; ++o) {
    for (int i = 0; i < Ho; ++i) {
      for (int j = 0; j < Wo; ++j) {
        double acc = bias.data()[o];
        for (int c = 0; c < c_in; ++c) {
          for (int u = 0; u < 3; ++u) {
            const int si = 2 * i + u - 1;
            if (si < 0 || si >= H) continue;
            for (int vv = 0; vv < 3; ++vv) {
              const int sj = 2 * j + vv - 1;
              if (sj < 0 || sj >= W) continue;
              acc += xin(c, si, sj) * weight.data()[widx(o, c, u, vv)];
            }
          }
        }
        v[(static_cast<size_t>(o) * Ho + i) * Wo + j] = acc;
      }
    }
  }
  auto px = x.node(), pw = weight.node(), pb = bias.node();
  return detail::make_op(
      {c_out, Ho, Wo}, std::move(v), {px, pw, pb},
      [px, pw, pb, c_in, c_out, H, W, Ho, Wo](Node& self) {
        const auto widx = [c_in](int o, int c, int u, int vv) {
          return ((static_cast<size_t>(o) * c_in + c) * 3 + u) * 3 + vv;
        };
        if (px->needs_grad) px->ensure_grad();
        if (pw->needs_grad) pw->ensure_grad();
        if (pb->needs_grad) pb->ensure_grad();
        for (int o = 0; o < c_out; ++o) {
          for (int i = 0; i < Ho; ++i) {
            for (int j = 0; j < Wo; ++j) {
              const double g = self.grad[(static_cast<size_t>(o) * Ho + i) * Wo + j];
              if (g == 0.0) continue;
              if (pb->needs_grad) pb->grad[o] += g;
              for (int c = 0; c < c_in; ++c) {
                for (int u = 0; u < 3; ++u) {
                  const int si = 2 * i + u - 1;
                  if (si < 0 || si >= H) continue;
                  for (int vv = 0; vv < 3; ++vv) {
                    const int sj = 2 * j + vv - 1;
                    if (sj < 0 || sj >= W) continue;
                    const size_t xi = (static_cast<size_t>(c) * H + si) * W + sj;
                    if (px->needs_grad) px->grad[xi] += g * pw->value[widx(o, c, u, vv)];
                    if (pw->needs_grad) pw->grad[widx(o, c, u, vv)] += g * px->value[xi];
                  }
                }
              }
            }
          }
        }
      });
}

// [C, H, W] feature map -> [H, C*W] sequence (row per H step, features c*W+w).
inline Tensor conv_map_to_seq(const Tensor& a) {
  check(a.shape().size() == 3, "conv_map_to_seq expects a rank-3 tensor");
  const int C = a.shape()[0], H = a.shape()[1], W = a.shape()[2];
  std::vector<double> v(a.size());
  for (int h = 0; h < H; ++h)
    for (int c = 0; c < C; ++c)
      for (int w = 0; w < W; ++w)
        v[(static_cast<size_t>(h) * C + c) * W + w] =
            a.data()[(static_cast<size_t>(c) * H + h) * W + w];
  auto pa = a.node();
  return detail::make_op({H, C * W}, std::move(v), {pa}, [pa, C, H, W](Node& self) {
    pa->ensure_grad();
    for (int h = 0; h < H; ++h)
      for (int c = 0; c < C; ++c)
        for (int w = 0; w < W; ++w)
          pa->grad[(static_cast<size_t>(c) * H + h) * W + w] +=
              self.grad[(static_cast<size_t>(h) * C + c) * W + w];
  });
}

inline Tensor reshape(const Tensor& a, std::vector<int> shape) {
  check(numel(shape) == a.size(), "reshape element count mismatch");
  std::vector<double> v = a.data();
  auto pa = a.node();
  return detail::make_op(std::move(shape), std::move(v), {pa}, [pa](Node& self) {
    pa->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
  });
}

// ---- fused losses ----

// Mean absolute error against a constant target.
inline Tensor l1_loss(const Tensor& pred, const std::vector<double>& target) {
  check(pred.size() == target.size(), "l1_loss size mismatch");
  const double inv = 1.0 / static_cast<double>(pred.size());
  double acc = 0.0;
  for (size_t i = 0; i < target.size(); ++i) acc += std::abs(pred.data()[i] - target[i]);
  auto pp = pred.node();
  auto tgt = std::make_shared<std::vector<double>>(target);
  return detail::make_op({1}, {acc * inv}, {pp}, [pp, tgt, inv](Node& self) {
    pp->ensure_grad();
    for (size_t i = 0; i < tgt->size(); ++i) {
      const double d = pp->value[i] - (*tgt)[i];
      const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      pp->grad[i] += self.grad[0] * s * inv;
    }
  });
}

// Mean squared error against a constant target.
inline Tensor l2_loss(const Tensor& pred, const std::vector<double>& target) {
  check(pred.size() == target.size(), "l2_loss size mismatch");
  const double inv = 1.0 / static_cast<double>(pred.size());
  double acc = 0.0;
  for (size_t i = 0; i < target.size(); ++i) {
    const double d = pred.data()[i] - target[i];
    acc += d * d;
  }
  auto pp = pred.node();
  auto tgt = std::make_shared<std::vector<double>>(target);
  return detail::make_op({1}, {acc * inv}, {pp}, [pp, tgt, inv](Node& self) {
    pp->ensure_grad();
    for (size_t i = 0; i < tgt->size(); ++i)
      pp->grad[i] += self.grad[0] * 2.0 * (pp->value[i] - (*tgt)[i]) * inv;
  });
}

// Weighted binary cross-entropy on logits, averaged over elements.
inline Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& targets,
                              const std::vector<double>& weights) {
  check(logits.size() == targets.size() && logits.size() == weights.size(),
        "bce_with_logits size mismatch");
  const double inv = 1.0 / static_cast<double>(logits.size());
  double acc = 0.0;
  for (size_t i = 0; i < targets.size(); ++i) {
    const double x = logits.data()[i], t = targets[i];
    acc += weights[i] * (std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x))));
  }
  auto pl = logits.node();
  auto tgt = std::make_shared<std::vector<double>>(targets);
  auto wts = std::make_shared<std::vector<double>>(weights);
  return detail::make_op({1}, {acc * inv}, {pl}, [pl, tgt, wts, inv](Node& self) {
    pl->ensure_grad();
    for (size_t i = 0; i < tgt->size(); ++i) {
      const double x = pl->value[i];
      const double sig = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      pl->grad[i] += self.grad[0] * (*wts)[i] * (sig - (*tgt)[i]) * inv;
    }
  });
}

// Mean softmax cross-entropy over rows of logits [B, N] with integer labels.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  check(logits.shape().size() == 2, "cross_entropy expects rank-2 logits");
  const int B = logits.rows(), N = logits.cols();
  check(static_cast<int>(labels.size()) == B, "cross_entropy label count mismatch");
  auto probs = std::make_shared<std::vector<double>>(logits.size());
  double acc = 0.0;
  for (int b = 0; b < B; ++b) {
    check(labels[b] >= 0 && labels[b] < N, "cross_entropy label out of range");
    double mx = -1e300;
    for (int j = 0; j < N; ++j) mx = std::max(mx, logits.at(b, j));
    double z = 0.0;
    for (int j = 0; j < N; ++j) {
      const double e = std::exp(logits.at(b, j) - mx);
      (*probs)[static_cast<size_t>(b) * N + j] = e;
      z += e;
    }
    for (int j = 0; j < N; ++j) (*probs)[static_cast<size_t>(b) * N + j] /= z;
    acc -= std::log((*probs)[static_cast<size_t>(b) * N + labels[b]]);
  }
  const double inv = 1.0 / B;
  auto pl = logits.node();
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return detail::make_op({1}, {acc * inv}, {pl}, [pl, probs, labels_copy, inv](Node& self) {
    pl->ensure_grad();
    const int B = static_cast<int>(labels_copy->size());
    const int N = static_cast<int>(pl->value.size()) / B;
    for (int b = 0; b < B; ++b) {
      for (int j = 0; j < N; ++j) {
        const size_t idx = static_cast<size_t>(b) * N + j;
        const double onehot = j == (*labels_copy)[b] ? 1.0 : 0.0;
        pl->grad[idx] += self.grad[0] * ((*probs)[idx] - onehot) * inv;
      }
    }
  });
}

// ---- backward pass ----

inline void backward(const Tensor& loss) {
  check(loss.size() == 1, "backward expects a scalar loss");
  check(loss.node()->needs_grad, "loss does not require grad; nothing to backpropagate");

  // iterative topological sort
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx].get();
      ++idx;
      if (p->needs_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // zero intermediate grads (leaves keep accumulating across calls)
  for (Node* n : order) {
    n->ensure_grad();
    if (n->backprop) n->zero_grad();
  }
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

}  // namespace provoc::ag
