#pragma once

// Reverse-mode differentiation over row-major matrices. A forward pass
// records a graph of Nodes; backward() walks it in reverse topological
// order. Nodes whose inputs need no gradient keep no parents, so inference
// builds no graph at all.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "s2t/numerics/array.hpp"
#include "s2t/numerics/parameter.hpp"
#include "s2t/numerics/rng.hpp"

namespace s2t::ad {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline ConstMatrixMap as_matrix(const Array& a) {
  return ConstMatrixMap(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                        static_cast<Eigen::Index>(a.cols()));
}
inline MatrixMap as_matrix(Array& a) {
  return MatrixMap(a.data().data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
}

struct Node {
  Array value;
  Array grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  Parameter* param = nullptr;

  Array& grad_buffer() {
    if (grad.empty()) grad = Array(value.shape(), 0.0);
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Array& value() const { return node_->value; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool valid() const { return static_cast<bool>(node_); }

  /// Gradient accumulated by the last backward(); zeros if none reached it.
  Array grad() const { return node_->grad.empty() ? Array(node_->value.shape(), 0.0) : node_->grad; }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

inline Array as_matrix_array(Array a) {
  if (a.rank() == 1) return Array({1, a.size()}, a.vec());
  if (a.rank() != 2) throw std::invalid_argument("autodiff values must be rank 1 or 2");
  return a;
}

inline Var constant(Array value) {
  auto n = std::make_shared<Node>();
  n->value = as_matrix_array(std::move(value));
  return Var(std::move(n));
}

/// Leaf that collects a gradient; used for inputs in gradient checks.
inline Var variable(Array value) {
  auto n = std::make_shared<Node>();
  n->value = as_matrix_array(std::move(value));
  n->requires_grad = true;
  return Var(std::move(n));
}

/// Leaf bound to a Parameter. Frozen parameters act as constants.
inline Var param(Parameter& p) {
  auto n = std::make_shared<Node>();
  n->value = as_matrix_array(p.value);
  n->requires_grad = p.trainable;
  n->param = p.trainable ? &p : nullptr;
  return Var(std::move(n));
}

namespace detail {

inline Var make(Array value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const Var& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    n->parents.reserve(inputs.size());
    for (const Var& in : inputs) n->parents.push_back(in.ptr());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.value().shape()) + " vs " +
                                shape_string(b.value().shape()));
  }
}

}  // namespace detail

inline void backward(const Var& root) {
  if (root.value().size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root.node(), 0}};
  seen.insert(&root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node().grad_buffer().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->grad.empty()) continue;
    if (node->backward) node->backward(*node);
    if (node->param) {
      auto dst = node->param->gradient.data();
      auto src = node->grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
}

// ---------------------------------------------------------------- linear algebra

/// a (m x k) times b (k x n).
inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + ")");
  }
  Array out = Array::matrix(a.rows(), b.cols());
  as_matrix(out).noalias() = as_matrix(a.value()) * as_matrix(b.value());
  return detail::make(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    auto g = as_matrix(self.grad);
    if (pa.requires_grad) as_matrix(pa.grad_buffer()).noalias() += g * as_matrix(pb.value).transpose();
    if (pb.requires_grad) as_matrix(pb.grad_buffer()).noalias() += as_matrix(pa.value).transpose() * g;
  });
}

/// a (m x k) times transpose(b) where b is (n x k).
inline Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimensions differ");
  Array out = Array::matrix(a.rows(), b.rows());
  as_matrix(out).noalias() = as_matrix(a.value()) * as_matrix(b.value()).transpose();
  return detail::make(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    auto g = as_matrix(self.grad);
    if (pa.requires_grad) as_matrix(pa.grad_buffer()).noalias() += g * as_matrix(pb.value);
    if (pb.requires_grad) as_matrix(pb.grad_buffer()).noalias() += g.transpose() * as_matrix(pa.value);
  });
}

// ---------------------------------------------------------------- elementwise

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return detail::make(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      as_matrix(p->grad_buffer()) += as_matrix(self.grad);
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return detail::make(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) as_matrix(self.parents[0]->grad_buffer()) += as_matrix(self.grad);
    if (self.parents[1]->requires_grad) as_matrix(self.parents[1]->grad_buffer()) -= as_matrix(self.grad);
  });
}

/// Adds a (1 x n) row to every row of x.
inline Var add_row(const Var& x, const Var& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw std::invalid_argument("add_row: bias must be 1 x cols");
  Array out = x.value();
  as_matrix(out).rowwise() += as_matrix(row.value()).row(0);
  return detail::make(std::move(out), {x, row}, [](Node& self) {
    Node& px = *self.parents[0];
    Node& pr = *self.parents[1];
    if (px.requires_grad) as_matrix(px.grad_buffer()) += as_matrix(self.grad);
    if (pr.requires_grad) as_matrix(pr.grad_buffer()) += as_matrix(self.grad).colwise().sum();
  });
}

inline Var scale(const Var& x, double s) {
  Array out = x.value();
  for (auto& v : out.data()) v *= s;
  return detail::make(std::move(out), {x}, [s](Node& self) {
    as_matrix(self.parents[0]->grad_buffer()) += s * as_matrix(self.grad);
  });
}

namespace detail {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace detail

/// Tanh-approximated GELU.
inline Var gelu(const Var& x) {
  Array out = x.value();
  for (auto& v : out.data()) {
    const double t = std::tanh(detail::kGeluC * (v + detail::kGeluA * v * v * v));
    v = 0.5 * v * (1.0 + t);
  }
  return detail::make(std::move(out), {x}, [](Node& self) {
    Node& px = *self.parents[0];
    auto gx = px.grad_buffer().data();
    auto in = px.value.data();
    auto g = self.grad.data();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = in[i];
      const double t = std::tanh(detail::kGeluC * (v + detail::kGeluA * v * v * v));
      const double dt = (1.0 - t * t) * detail::kGeluC * (1.0 + 3.0 * detail::kGeluA * v * v);
      gx[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
    }
  });
}

/// Inverted dropout; identity when p == 0.
inline Var dropout(const Var& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: rate must be below 1");
  Array mask(x.value().shape(), 0.0);
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask.data()) m = rng.uniform() >= p ? keep : 0.0;
  Array out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return detail::make(std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    auto gx = self.parents[0]->grad_buffer().data();
    auto g = self.grad.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

// ---------------------------------------------------------------- normalization

/// Row-wise layer normalization with (1 x n) gain and bias.
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
  const std::size_t rows = x.rows();
  const std::size_t n = x.cols();
  if (gamma.cols() != n || beta.cols() != n || gamma.rows() != 1 || beta.rows() != 1) {
    throw std::invalid_argument("layer_norm: gain/bias must be 1 x cols");
  }
  Array xhat = x.value();
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = xhat.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += row[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) row[i] = (row[i] - mean) * inv_std[r];
  }
  Array out = xhat;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < n; ++i) out.at(r, i) = out.at(r, i) * gamma.value()[i] + beta.value()[i];
  }
  return detail::make(std::move(out), {x, gamma, beta},
                      [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, n](Node& self) {
                        Node& px = *self.parents[0];
                        Node& pg = *self.parents[1];
                        Node& pb = *self.parents[2];
                        const Array& g = self.grad;
                        if (pg.requires_grad || pb.requires_grad) {
                          Array& gg = pg.grad_buffer();
                          Array& gb = pb.grad_buffer();
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t i = 0; i < n; ++i) {
                              if (pg.requires_grad) gg[i] += g.at(r, i) * xhat.at(r, i);
                              if (pb.requires_grad) gb[i] += g.at(r, i);
                            }
                          }
                        }
                        if (!px.requires_grad) return;
                        Array& gx = px.grad_buffer();
                        std::vector<double> dxhat(n);
                        for (std::size_t r = 0; r < rows; ++r) {
                          double mean_d = 0.0;
                          double mean_dx = 0.0;
                          for (std::size_t i = 0; i < n; ++i) {
                            dxhat[i] = g.at(r, i) * pg.value[i];
                            mean_d += dxhat[i];
                            mean_dx += dxhat[i] * xhat.at(r, i);
                          }
                          mean_d /= static_cast<double>(n);
                          mean_dx /= static_cast<double>(n);
                          for (std::size_t i = 0; i < n; ++i) {
                            gx.at(r, i) += inv_std[r] * (dxhat[i] - mean_d - xhat.at(r, i) * mean_dx);
                          }
                        }
                      });
}

/// Row-wise softmax. With `causal`, row i may only see columns
/// j <= i + (cols - rows); masked entries get probability zero.
inline Var softmax_rows(const Var& x, bool causal = false) {
  const std::size_t rows = x.rows();
  const std::size_t n = x.cols();
  if (causal && n < rows) throw std::invalid_argument("softmax_rows: causal mask needs cols >= rows");
  const std::size_t offset = n - rows;
  Array out = Array::matrix(rows, n);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t visible = causal ? r + offset + 1 : n;
    const double* in = x.value().data().data() + r * n;
    double* o = out.data().data() + r * n;
    double mx = in[0];
    for (std::size_t i = 1; i < visible; ++i) mx = std::max(mx, in[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < visible; ++i) {
      o[i] = std::exp(in[i] - mx);
      sum += o[i];
    }
    for (std::size_t i = 0; i < visible; ++i) o[i] /= sum;
  }
  Array probs = out;
  return detail::make(std::move(out), {x}, [probs = std::move(probs), rows, n](Node& self) {
    Array& gx = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += probs.at(r, i) * self.grad.at(r, i);
      for (std::size_t i = 0; i < n; ++i) gx.at(r, i) += probs.at(r, i) * (self.grad.at(r, i) - dot);
    }
  });
}

// ---------------------------------------------------------------- shape ops

inline Var slice_rows(const Var& x, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > x.rows()) throw std::out_of_range("slice_rows: range out of bounds");
  const std::size_t n = x.cols();
  std::vector<double> data(x.value().data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                           x.value().data().begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  return detail::make(Array({count, n}, std::move(data)), {x}, [begin, count, n](Node& self) {
    auto gx = self.parents[0]->grad_buffer().data();
    auto g = self.grad.data();
    for (std::size_t i = 0; i < count * n; ++i) gx[begin * n + i] += g[i];
  });
}

inline Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > x.cols()) throw std::out_of_range("slice_cols: range out of bounds");
  const std::size_t rows = x.rows();
  Array out = Array::matrix(rows, count);
  as_matrix(out) = as_matrix(x.value()).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  return detail::make(std::move(out), {x}, [begin, count](Node& self) {
    as_matrix(self.parents[0]->grad_buffer())
        .middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) += as_matrix(self.grad);
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: nothing to concatenate");
  const std::size_t n = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != n) throw std::invalid_argument("concat_rows: column counts differ");
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * n);
  for (const Var& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  return detail::make(Array({rows, n}, std::move(data)), parts, [](Node& self) {
    std::size_t offset = 0;
    auto g = self.grad.data();
    for (auto& p : self.parents) {
      const std::size_t len = p->value.size();
      if (p->requires_grad) {
        auto gp = p->grad_buffer().data();
        for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
      }
      offset += len;
    }
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: nothing to concatenate");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
    cols += p.cols();
  }
  Array out = Array::matrix(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    as_matrix(out).middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(p.cols())) =
        as_matrix(p.value());
    offset += p.cols();
  }
  return detail::make(std::move(out), parts, [](Node& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      const auto width = static_cast<Eigen::Index>(p->value.cols());
      if (p->requires_grad) {
        as_matrix(p->grad_buffer()) += as_matrix(self.grad).middleCols(static_cast<Eigen::Index>(offset), width);
      }
      offset += p->value.cols();
    }
  });
}

/// Embedding lookup: rows of `table` selected by `ids`.
inline Var gather_rows(const Var& table, std::span<const std::size_t> ids) {
  if (ids.empty()) throw std::invalid_argument("gather_rows: no ids");
  const std::size_t n = table.cols();
  std::vector<double> data;
  data.reserve(ids.size() * n);
  for (std::size_t id : ids) {
    if (id >= table.rows()) throw std::out_of_range("gather_rows: id " + std::to_string(id) + " out of range");
    auto row = table.value().data().subspan(id * n, n);
    data.insert(data.end(), row.begin(), row.end());
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return detail::make(Array({ids.size(), n}, std::move(data)), {table}, [idx = std::move(idx), n](Node& self) {
    auto gt = self.parents[0]->grad_buffer().data();
    auto g = self.grad.data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t i = 0; i < n; ++i) gt[idx[r] * n + i] += g[r * n + i];
    }
  });
}

/// Sliding windows over rows: output row j is rows [j*stride, j*stride+window)
/// of x flattened, giving floor((T - window) / stride) + 1 rows.
inline Var frame(const Var& x, std::size_t window, std::size_t stride) {
  const std::size_t t = x.rows();
  const std::size_t d = x.cols();
  if (window == 0 || stride == 0) throw std::invalid_argument("frame: window and stride must be positive");
  if (t < window) {
    throw std::invalid_argument("frame: sequence of " + std::to_string(t) + " steps is shorter than window " +
                                std::to_string(window));
  }
  const std::size_t count = (t - window) / stride + 1;
  const std::size_t width = window * d;
  std::vector<double> data;
  data.reserve(count * width);
  for (std::size_t j = 0; j < count; ++j) {
    auto src = x.value().data().subspan(j * stride * d, width);
    data.insert(data.end(), src.begin(), src.end());
  }
  return detail::make(Array({count, width}, std::move(data)), {x}, [count, width, stride, d](Node& self) {
    auto gx = self.parents[0]->grad_buffer().data();
    auto g = self.grad.data();
    for (std::size_t j = 0; j < count; ++j) {
      for (std::size_t i = 0; i < width; ++i) gx[j * stride * d + i] += g[j * width + i];
    }
  });
}

// ---------------------------------------------------------------- reductions

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return detail::make(Array::scalar(s), {x}, [](Node& self) {
    const double g = self.grad[0];
    for (auto& v : self.parents[0]->grad_buffer().data()) v += g;
  });
}

inline Var sum_squares(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v * v;
  return detail::make(Array::scalar(s), {x}, [](Node& self) {
    const double g = self.grad[0];
    auto gx = self.parents[0]->grad_buffer().data();
    auto in = self.parents[0]->value.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * g * in[i];
  });
}

/// sum(x * w) for a constant weight array of the same size.
inline Var dot_const(const Var& x, const Array& w) {
  if (w.size() != x.value().size()) throw std::invalid_argument("dot_const: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += x.value()[i] * w[i];
  return detail::make(Array::scalar(s), {x}, [w](Node& self) {
    const double g = self.grad[0];
    auto gx = self.parents[0]->grad_buffer().data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * w[i];
  });
}

/// Sum over rows of -log softmax(logits_r)[targets_r].
inline Var cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
  const std::size_t rows = logits.rows();
  const std::size_t n = logits.cols();
  if (targets.size() != rows) throw std::invalid_argument("cross_entropy: one target per row required");
  Array probs = Array::matrix(rows, n);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= n) throw std::out_of_range("cross_entropy: target out of range");
    const double* in = logits.value().data().data() + r * n;
    double mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(in[i] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t i = 0; i < n; ++i) probs.at(r, i) = std::exp(in[i] - log_z);
    loss += log_z - in[targets[r]];
  }
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return detail::make(Array::scalar(loss), {logits},
                      [probs = std::move(probs), tgt = std::move(tgt), n](Node& self) {
                        const double g = self.grad[0];
                        Array& gl = self.parents[0]->grad_buffer();
                        for (std::size_t r = 0; r < tgt.size(); ++r) {
                          for (std::size_t i = 0; i < n; ++i) gl.at(r, i) += g * probs.at(r, i);
                          gl.at(r, tgt[r]) -= g;
                        }
                      });
}

}  // namespace s2t::ad
