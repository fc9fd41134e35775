#include "semsic/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "semsic/kernels/kernels.hpp"

namespace semsic {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != r * c) throw Error("matrix data size does not match shape");
}

namespace ag {
namespace {

thread_local bool g_grad_enabled = true;

const kernels::KernelTable& K() { return kernels::active(); }

using BackwardFn = std::function<void(Node&)>;

Tensor make_result(Matrix value, std::initializer_list<Tensor> inputs, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& t : inputs) any = any || (t.defined() && t.requires_grad());
    if (any) {
      node->requires_grad = true;
      for (const auto& t : inputs)
        if (t.defined()) node->parents.push_back(t.node());
      node->backward_fn = std::move(fn);
    }
  }
  return Tensor(std::move(node));
}

Tensor make_result(Matrix value, std::span<const Tensor> inputs, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& t : inputs) node->parents.push_back(t.node());
      node->backward_fn = std::move(fn);
    }
  }
  return Tensor(std::move(node));
}

bool wants(const Tensor& t) { return t.defined() && t.requires_grad(); }

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw Error(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()));
}

}  // namespace

Matrix& Node::grad_buffer() {
  if (!grad.same_shape(value) || grad.data.empty()) grad = Matrix(value.rows, value.cols);
  return grad;
}

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

void Tensor::zero_grad() { node_->grad = Matrix(); }

double Tensor::item() const {
  if (node_->value.size() != 1) throw Error("item() on a non-scalar tensor");
  return node_->value.data[0];
}

void Tensor::backward() const {
  if (node_->value.size() != 1) throw Error("backward() requires a scalar tensor");
  if (!node_->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer().data[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.data.empty()) n->backward_fn(*n);
  }
  // Release interior gradients; leaves (parameters) keep theirs.
  for (Node* n : order)
    if (n->backward_fn) n->grad = Matrix();
}

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same(a, b, "add");
  Matrix out(a.rows(), a.cols());
  K().add(out.size(), a.value().data.data(), b.value().data.data(), out.data.data());
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    const auto& g = self.grad.data;
    if (wants(a)) K().axpy(g.size(), 1.0, g.data(), a.node()->grad_buffer().data.data());
    if (wants(b)) K().axpy(g.size(), 1.0, g.data(), b.node()->grad_buffer().data.data());
  });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw Error("add_row: shape mismatch");
  Matrix out = x.value();
  for (std::size_t r = 0; r < out.rows; ++r)
    K().add(out.cols, out.row(r), row.value().data.data(), out.row(r));
  return make_result(std::move(out), {x, row}, [x, row](Node& self) {
    const std::size_t n = self.grad.cols;
    if (wants(x)) K().axpy(self.grad.size(), 1.0, self.grad.data.data(), x.node()->grad_buffer().data.data());
    if (wants(row)) {
      double* g = row.node()->grad_buffer().data.data();
      for (std::size_t r = 0; r < self.grad.rows; ++r) K().axpy(n, 1.0, self.grad.row(r), g);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same(a, b, "sub");
  Matrix out = a.value();
  K().axpy(out.size(), -1.0, b.value().data.data(), out.data.data());
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    const auto& g = self.grad.data;
    if (wants(a)) K().axpy(g.size(), 1.0, g.data(), a.node()->grad_buffer().data.data());
    if (wants(b)) K().axpy(g.size(), -1.0, g.data(), b.node()->grad_buffer().data.data());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same(a, b, "mul");
  Matrix out(a.rows(), a.cols());
  K().mul(out.size(), a.value().data.data(), b.value().data.data(), out.data.data());
  return make_result(std::move(out), {a, b}, [a, b](Node& self) {
    const auto& g = self.grad.data;
    const std::size_t n = g.size();
    if (wants(a)) {
      auto& ga = a.node()->grad_buffer().data;
      const auto& bv = b.value().data;
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
    }
    if (wants(b)) {
      auto& gb = b.node()->grad_buffer().data;
      const auto& av = a.value().data;
      for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  Matrix out = a.value();
  K().scale(out.size(), s, out.data.data());
  return make_result(std::move(out), {a}, [a, s](Node& self) {
    K().axpy(self.grad.size(), s, self.grad.data.data(), a.node()->grad_buffer().data.data());
  });
}

Tensor relu(const Tensor& a) {
  Matrix out(a.rows(), a.cols());
  K().relu(out.size(), a.value().data.data(), out.data.data());
  return make_result(std::move(out), {a}, [a](Node& self) {
    K().relu_backward(self.grad.size(), a.value().data.data(), self.grad.data.data(),
                      a.node()->grad_buffer().data.data());
  });
}

Tensor detach(const Tensor& a) { return Tensor::constant(a.value()); }

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size()) throw Error("reshape: element count mismatch");
  Matrix out(rows, cols, a.value().data);
  return make_result(std::move(out), {a}, [a](Node& self) {
    K().axpy(self.grad.size(), 1.0, self.grad.data.data(), a.node()->grad_buffer().data.data());
  });
}

Tensor scale_rows(const Tensor& a, std::span<const double> factors) {
  if (factors.size() != a.rows()) throw Error("scale_rows: factor count mismatch");
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows; ++r) K().scale(out.cols, factors[r], out.row(r));
  std::vector<double> f(factors.begin(), factors.end());
  return make_result(std::move(out), {a}, [a, f = std::move(f)](Node& self) {
    auto& ga = a.node()->grad_buffer();
    for (std::size_t r = 0; r < ga.rows; ++r)
      if (f[r] != 0.0) K().axpy(ga.cols, f[r], self.grad.row(r), ga.row(r));
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw Error("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.value().row(r), p.cols(), out.row(r) + off);
    off += p.cols();
  }
  std::vector<Tensor> keep(parts.begin(), parts.end());
  return make_result(std::move(out), parts, [keep](Node& self) {
    std::size_t off = 0;
    for (const auto& p : keep) {
      if (wants(p)) {
        auto& gp = p.node()->grad_buffer();
        for (std::size_t r = 0; r < gp.rows; ++r)
          K().axpy(gp.cols, 1.0, self.grad.row(r) + off, gp.row(r));
      }
      off += p.cols();
    }
  });
}

Tensor sum_all(const Tensor& a) {
  Matrix out(1, 1, K().sum(a.value().data.data(), a.value().size()));
  return make_result(std::move(out), {a}, [a](Node& self) {
    auto& ga = a.node()->grad_buffer().data;
    const double g = self.grad.data[0];
    for (auto& v : ga) v += g;
  });
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw Error("matmul: inner dimension mismatch");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix out(m, n);
  kernels::gemm(false, false, m, n, k, a.value().data.data(), k, b.value().data.data(), n,
                out.data.data(), n);
  return make_result(std::move(out), {a, b}, [a, b, m, n, k](Node& self) {
    if (wants(a))
      kernels::gemm(false, true, m, k, n, self.grad.data.data(), n, b.value().data.data(), n,
                    a.node()->grad_buffer().data.data(), k);
    if (wants(b))
      kernels::gemm(true, false, k, n, m, a.value().data.data(), k, self.grad.data.data(), n,
                    b.node()->grad_buffer().data.data(), n);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.cols() != w.rows()) throw Error("linear: input width mismatch");
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  Matrix out(m, n);
  if (bias.defined()) {
    if (bias.cols() != n || bias.rows() != 1) throw Error("linear: bias shape mismatch");
    for (std::size_t r = 0; r < m; ++r) std::copy_n(bias.value().data.data(), n, out.row(r));
  }
  kernels::gemm(false, false, m, n, k, x.value().data.data(), k, w.value().data.data(), n,
                out.data.data(), n);
  return make_result(std::move(out), {x, w, bias}, [x, w, bias, m, n, k](Node& self) {
    const double* g = self.grad.data.data();
    if (wants(x))
      kernels::gemm(false, true, m, k, n, g, n, w.value().data.data(), n,
                    x.node()->grad_buffer().data.data(), k);
    if (wants(w))
      kernels::gemm(true, false, k, n, m, x.value().data.data(), k, g, n,
                    w.node()->grad_buffer().data.data(), n);
    if (wants(bias)) {
      double* gb = bias.node()->grad_buffer().data.data();
      for (std::size_t r = 0; r < m; ++r) K().axpy(n, 1.0, g + r * n, gb);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.cols() != n || beta.cols() != n) throw Error("layer_norm: parameter width mismatch");
  Matrix out(m, n);
  auto xhat = std::make_shared<Matrix>(m, n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  const double* gm = gamma.value().data.data();
  const double* bt = beta.value().data.data();
  for (std::size_t r = 0; r < m; ++r) {
    const double* xr = x.value().row(r);
    const double mean = K().sum(xr, n) / static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    double* hr = xhat->row(r);
    double* orow = out.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      hr[c] = (xr[c] - mean) * is;
      orow[c] = gm[c] * hr[c] + bt[c];
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, xhat, inv_std, m, n](Node& self) {
                       const double* gm = gamma.value().data.data();
                       std::vector<double> dxhat(n);
                       double* gg = wants(gamma) ? gamma.node()->grad_buffer().data.data() : nullptr;
                       double* gb = wants(beta) ? beta.node()->grad_buffer().data.data() : nullptr;
                       double* gx = wants(x) ? x.node()->grad_buffer().data.data() : nullptr;
                       for (std::size_t r = 0; r < m; ++r) {
                         const double* dy = self.grad.row(r);
                         const double* hr = xhat->row(r);
                         if (gg)
                           for (std::size_t c = 0; c < n; ++c) gg[c] += dy[c] * hr[c];
                         if (gb) K().axpy(n, 1.0, dy, gb);
                         if (!gx) continue;
                         double mean_d = 0.0, mean_dh = 0.0;
                         for (std::size_t c = 0; c < n; ++c) {
                           dxhat[c] = dy[c] * gm[c];
                           mean_d += dxhat[c];
                           mean_dh += dxhat[c] * hr[c];
                         }
                         mean_d /= static_cast<double>(n);
                         mean_dh /= static_cast<double>(n);
                         const double is = (*inv_std)[r];
                         double* gxr = gx + r * n;
                         for (std::size_t c = 0; c < n; ++c)
                           gxr[c] += is * (dxhat[c] - mean_d - hr[c] * mean_dh);
                       }
                     });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw Error("dropout: probability must be < 1");
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : *mask) m = u(rng) < p ? 0.0 : keep;
  Matrix out(x.rows(), x.cols());
  K().mul(out.size(), x.value().data.data(), mask->data(), out.data.data());
  return make_result(std::move(out), {x}, [x, mask](Node& self) {
    auto& gx = x.node()->grad_buffer().data;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad.data[i] * (*mask)[i];
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  const std::size_t d = table.cols();
  Matrix out(ids.size(), d);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= table.rows())
      throw Error("embedding: id out of range");
    std::copy_n(table.value().row(static_cast<std::size_t>(ids[r])), d, out.row(r));
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return make_result(std::move(out), {table}, [table, idv = std::move(idv), d](Node& self) {
    auto& gt = table.node()->grad_buffer();
    for (std::size_t r = 0; r < idv.size(); ++r)
      K().axpy(d, 1.0, self.grad.row(r), gt.row(static_cast<std::size_t>(idv[r])));
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 std::size_t seq_len, std::span<const std::uint8_t> key_valid) {
  check_same(q, k, "attention(q,k)");
  check_same(k, v, "attention(k,v)");
  const std::size_t rows = q.rows(), dim = q.cols();
  if (heads == 0 || dim % heads != 0) throw Error("attention: width not divisible by heads");
  if (seq_len == 0 || rows % seq_len != 0) throw Error("attention: rows not a multiple of seq_len");
  if (!key_valid.empty() && key_valid.size() != rows) throw Error("attention: mask size mismatch");
  const std::size_t dh = dim / heads, nseq = rows / seq_len, n = seq_len;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  auto probs = std::make_shared<std::vector<double>>(nseq * heads * n * n, 0.0);
  Matrix out(rows, dim);
  const auto& Q = q.value();
  const auto& Kv = k.value();
  const auto& V = v.value();
  std::vector<double> srow(n);
  for (std::size_t s = 0; s < nseq; ++s) {
    const std::size_t base = s * n;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      double* P = probs->data() + ((s * heads + h) * n) * n;
      for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
          if (!key_valid.empty() && !key_valid[base + j]) {
            srow[j] = -std::numeric_limits<double>::infinity();
            continue;
          }
          srow[j] = K().dot(Q.row(base + i) + off, Kv.row(base + j) + off, dh) * inv_sqrt;
          mx = std::max(mx, srow[j]);
        }
        if (!std::isfinite(mx)) continue;  // fully masked sequence
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double e = std::isfinite(srow[j]) ? std::exp(srow[j] - mx) : 0.0;
          P[i * n + j] = e;
          z += e;
        }
        const double iz = 1.0 / z;
        double* orow = out.row(base + i) + off;
        for (std::size_t j = 0; j < n; ++j) {
          P[i * n + j] *= iz;
          if (P[i * n + j] != 0.0) K().axpy(dh, P[i * n + j], V.row(base + j) + off, orow);
        }
      }
    }
  }
  return make_result(std::move(out), {q, k, v},
                     [q, k, v, probs, heads, dh, nseq, n, inv_sqrt](Node& self) {
                       const auto& Q = q.value();
                       const auto& Kv = k.value();
                       const auto& V = v.value();
                       double* gq = wants(q) ? q.node()->grad_buffer().data.data() : nullptr;
                       double* gk = wants(k) ? k.node()->grad_buffer().data.data() : nullptr;
                       double* gv = wants(v) ? v.node()->grad_buffer().data.data() : nullptr;
                       const std::size_t dim = Q.cols;
                       std::vector<double> dP(n), dS(n);
                       for (std::size_t s = 0; s < nseq; ++s) {
                         const std::size_t base = s * n;
                         for (std::size_t h = 0; h < heads; ++h) {
                           const std::size_t off = h * dh;
                           const double* P = probs->data() + ((s * heads + h) * n) * n;
                           for (std::size_t i = 0; i < n; ++i) {
                             const double* dO = self.grad.row(base + i) + off;
                             const double* Pi = P + i * n;
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j) {
                               if (Pi[j] == 0.0) {
                                 dP[j] = 0.0;
                                 continue;
                               }
                               if (gv) K().axpy(dh, Pi[j], dO, gv + (base + j) * dim + off);
                               dP[j] = K().dot(dO, V.row(base + j) + off, dh);
                               acc += Pi[j] * dP[j];
                             }
                             for (std::size_t j = 0; j < n; ++j) {
                               dS[j] = Pi[j] * (dP[j] - acc) * inv_sqrt;
                               if (dS[j] == 0.0) continue;
                               if (gq) K().axpy(dh, dS[j], Kv.row(base + j) + off, gq + (base + i) * dim + off);
                               if (gk) K().axpy(dh, dS[j], Q.row(base + i) + off, gk + (base + j) * dim + off);
                             }
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------

Tensor im2col_seq(const Tensor& x, std::size_t seq_len) {
  const std::size_t rows = x.rows(), c = x.cols();
  if (seq_len == 0 || rows % seq_len != 0) throw Error("im2col_seq: rows not a multiple of seq_len");
  Matrix out(rows, 3 * c);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t pos = r % seq_len;
    if (pos > 0) std::copy_n(x.value().row(r - 1), c, out.row(r));
    std::copy_n(x.value().row(r), c, out.row(r) + c);
    if (pos + 1 < seq_len) std::copy_n(x.value().row(r + 1), c, out.row(r) + 2 * c);
  }
  return make_result(std::move(out), {x}, [x, seq_len, c](Node& self) {
    auto& gx = x.node()->grad_buffer();
    for (std::size_t r = 0; r < gx.rows; ++r) {
      const std::size_t pos = r % seq_len;
      const double* g = self.grad.row(r);
      if (pos > 0) K().axpy(c, 1.0, g, gx.row(r - 1));
      K().axpy(c, 1.0, g + c, gx.row(r));
      if (pos + 1 < seq_len) K().axpy(c, 1.0, g + 2 * c, gx.row(r + 1));
    }
  });
}

Tensor col2im_seq(const Tensor& cols, std::size_t seq_len) {
  const std::size_t rows = cols.rows();
  if (cols.cols() % 3 != 0) throw Error("col2im_seq: width must be a multiple of 3");
  if (seq_len == 0 || rows % seq_len != 0) throw Error("col2im_seq: rows not a multiple of seq_len");
  const std::size_t c = cols.cols() / 3;
  Matrix out(rows, c);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t pos = r % seq_len;
    const double* src = cols.value().row(r);
    if (pos > 0) K().axpy(c, 1.0, src, out.row(r - 1));
    K().axpy(c, 1.0, src + c, out.row(r));
    if (pos + 1 < seq_len) K().axpy(c, 1.0, src + 2 * c, out.row(r + 1));
  }
  return make_result(std::move(out), {cols}, [cols, seq_len, c](Node& self) {
    auto& gc = cols.node()->grad_buffer();
    for (std::size_t r = 0; r < gc.rows; ++r) {
      const std::size_t pos = r % seq_len;
      double* g = gc.row(r);
      if (pos > 0) K().axpy(c, 1.0, self.grad.row(r - 1), g);
      K().axpy(c, 1.0, self.grad.row(r), g + c);
      if (pos + 1 < seq_len) K().axpy(c, 1.0, self.grad.row(r + 1), g + 2 * c);
    }
  });
}

Tensor gdn(const Tensor& x, const Tensor& beta_raw, const Tensor& gamma_raw, bool inverse) {
  constexpr double kBetaFloor = 1e-6;
  const std::size_t m = x.rows(), c = x.cols();
  if (beta_raw.cols() != c || beta_raw.rows() != 1 || gamma_raw.rows() != c || gamma_raw.cols() != c)
    throw Error("gdn: parameter shape mismatch");
  Matrix gamma(c, c), xsq(m, c);
  for (std::size_t i = 0; i < gamma.size(); ++i)
    gamma.data[i] = gamma_raw.value().data[i] * gamma_raw.value().data[i];
  K().mul(xsq.size(), x.value().data.data(), x.value().data.data(), xsq.data.data());
  // norm(r, i) = sqrt(beta_i + sum_j gamma_ij x_rj^2)
  auto norm = std::make_shared<Matrix>(m, c);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t i = 0; i < c; ++i) {
      const double b = beta_raw.value().data[i];
      (*norm)(r, i) = b * b + kBetaFloor;
    }
  kernels::gemm(false, true, m, c, c, xsq.data.data(), c, gamma.data.data(), c,
                norm->data.data(), c);
  for (auto& v : norm->data) v = std::sqrt(v);
  Matrix out(m, c);
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = inverse ? x.value().data[i] * norm->data[i] : x.value().data[i] / norm->data[i];
  auto gamma_p = std::make_shared<Matrix>(std::move(gamma));
  auto xsq_p = std::make_shared<Matrix>(std::move(xsq));
  return make_result(
      std::move(out), {x, beta_raw, gamma_raw},
      [x, beta_raw, gamma_raw, norm, gamma_p, xsq_p, inverse, m, c](Node& self) {
        const auto& X = x.value().data;
        const auto& dy = self.grad.data;
        // a = dy*x/n^3 (forward) or dy*x/n (inverse); sign folds into coefficient.
        Matrix a(m, c);
        for (std::size_t i = 0; i < a.size(); ++i) {
          const double nv = norm->data[i];
          a.data[i] = inverse ? dy[i] * X[i] / nv : dy[i] * X[i] / (nv * nv * nv);
        }
        const double sign = inverse ? 1.0 : -1.0;
        if (wants(x)) {
          auto& gx = x.node()->grad_buffer().data;
          Matrix ag(m, c);
          kernels::gemm(false, false, m, c, c, a.data.data(), c, gamma_p->data.data(), c,
                        ag.data.data(), c);
          for (std::size_t i = 0; i < gx.size(); ++i) {
            const double direct = inverse ? dy[i] * norm->data[i] : dy[i] / norm->data[i];
            gx[i] += direct + sign * X[i] * ag.data[i];
          }
        }
        if (wants(beta_raw)) {
          auto& gb = beta_raw.node()->grad_buffer().data;
          for (std::size_t i = 0; i < c; ++i) {
            double s = 0.0;
            for (std::size_t r = 0; r < m; ++r) s += a(r, i);
            gb[i] += sign * 0.5 * s * 2.0 * beta_raw.value().data[i];
          }
        }
        if (wants(gamma_raw)) {
          Matrix dgamma(c, c);
          kernels::gemm(true, false, c, c, m, a.data.data(), c, xsq_p->data.data(), c,
                        dgamma.data.data(), c);
          auto& gg = gamma_raw.node()->grad_buffer().data;
          for (std::size_t i = 0; i < gg.size(); ++i)
            gg[i] += sign * 0.5 * dgamma.data[i] * 2.0 * gamma_raw.value().data[i];
        }
      });
}

// ---------------------------------------------------------------------------

Tensor normalize_rows(const Tensor& a, double target_norm, bool allow_zero) {
  const std::size_t m = a.rows(), n = a.cols();
  auto norms = std::make_shared<std::vector<double>>(m);
  Matrix out = a.value();
  for (std::size_t r = 0; r < m; ++r) {
    const double nr = std::sqrt(K().sum_squares(out.row(r), n));
    (*norms)[r] = nr;
    if (!(nr > 0.0)) {
      if (allow_zero) continue;
      throw Error("zero-energy frame");
    }
    K().scale(n, target_norm / nr, out.row(r));
  }
  return make_result(std::move(out), {a}, [a, norms, target_norm, m, n](Node& self) {
    auto& ga = a.node()->grad_buffer();
    for (std::size_t r = 0; r < m; ++r) {
      const double nr = (*norms)[r];
      if (nr == 0.0) continue;
      const double* v = a.value().row(r);
      const double* dy = self.grad.row(r);
      const double proj = K().dot(v, dy, n) / (nr * nr);
      const double f = target_norm / nr;
      double* g = ga.row(r);
      for (std::size_t c = 0; c < n; ++c) g[c] += f * (dy[c] - v[c] * proj);
    }
  });
}

Tensor row_norms(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Matrix out(m, 1);
  for (std::size_t r = 0; r < m; ++r) out.data[r] = std::sqrt(K().sum_squares(a.value().row(r), n));
  auto norms = std::make_shared<std::vector<double>>(out.data);
  return make_result(std::move(out), {a}, [a, norms, m, n](Node& self) {
    auto& ga = a.node()->grad_buffer();
    for (std::size_t r = 0; r < m; ++r) {
      const double nr = (*norms)[r];
      if (nr == 0.0) continue;
      K().axpy(n, self.grad.data[r] / nr, a.value().row(r), ga.row(r));
    }
  });
}

Tensor mul_rows(const Tensor& a, const Tensor& s) {
  if (s.cols() != 1 || s.rows() != a.rows()) throw Error("mul_rows: factor shape mismatch");
  const std::size_t m = a.rows(), n = a.cols();
  Matrix out = a.value();
  for (std::size_t r = 0; r < m; ++r) K().scale(n, s.value().data[r], out.row(r));
  return make_result(std::move(out), {a, s}, [a, s, m, n](Node& self) {
    if (wants(a)) {
      auto& ga = a.node()->grad_buffer();
      for (std::size_t r = 0; r < m; ++r) K().axpy(n, s.value().data[r], self.grad.row(r), ga.row(r));
    }
    if (wants(s)) {
      auto& gs = s.node()->grad_buffer();
      for (std::size_t r = 0; r < m; ++r) gs.data[r] += K().dot(self.grad.row(r), a.value().row(r), n);
    }
  });
}

Tensor complex_scale_rows(const Tensor& a, std::span<const std::complex<double>> factors) {
  const std::size_t m = a.rows(), n = a.cols();
  if (n % 2 != 0) throw Error("complex_scale_rows: width must be even");
  if (factors.size() != m) throw Error("complex_scale_rows: factor count mismatch");
  Matrix out(m, n);
  for (std::size_t r = 0; r < m; ++r) {
    const double hr = factors[r].real(), hi = factors[r].imag();
    const double* v = a.value().row(r);
    double* o = out.row(r);
    for (std::size_t t = 0; t < n; t += 2) {
      o[t] = v[t] * hr - v[t + 1] * hi;
      o[t + 1] = v[t] * hi + v[t + 1] * hr;
    }
  }
  std::vector<std::complex<double>> f(factors.begin(), factors.end());
  return make_result(std::move(out), {a}, [a, f = std::move(f), m, n](Node& self) {
    auto& ga = a.node()->grad_buffer();
    for (std::size_t r = 0; r < m; ++r) {
      const double hr = f[r].real(), hi = f[r].imag();
      const double* dy = self.grad.row(r);
      double* g = ga.row(r);
      for (std::size_t t = 0; t < n; t += 2) {
        g[t] += dy[t] * hr + dy[t + 1] * hi;
        g[t + 1] += -dy[t] * hi + dy[t + 1] * hr;
      }
    }
  });
}

// ---------------------------------------------------------------------------

namespace {
void softmax_inplace(double* row, std::size_t n) {
  const double mx = K().max(row, n);
  double z = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    row[c] = std::exp(row[c] - mx);
    z += row[c];
  }
  K().scale(n, 1.0 / z, row);
}
}  // namespace

Tensor softmax_rows(const Tensor& logits) {
  Matrix out = logits.value();
  for (std::size_t r = 0; r < out.rows; ++r) softmax_inplace(out.row(r), out.cols);
  auto probs = std::make_shared<Matrix>(out);
  return make_result(std::move(out), {logits}, [logits, probs](Node& self) {
    auto& g = logits.node()->grad_buffer();
    for (std::size_t r = 0; r < g.rows; ++r) {
      const double* p = probs->row(r);
      const double* dy = self.grad.row(r);
      const double s = K().dot(p, dy, g.cols);
      double* gr = g.row(r);
      for (std::size_t c = 0; c < g.cols; ++c) gr[c] += p[c] * (dy[c] - s);
    }
  });
}

Tensor softmax_bce_loss(const Tensor& logits, std::span<const int> targets,
                        std::span<const double> row_weight, double divisor, double clamp) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m || row_weight.size() != m) throw Error("softmax_bce_loss: size mismatch");
  if (!(divisor > 0.0)) throw Error("softmax_bce_loss: divisor must be positive");
  auto probs = std::make_shared<Matrix>(logits.value());
  const double inv_ln2 = 1.0 / std::numbers::ln2;
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (row_weight[r] == 0.0) continue;
    double* p = probs->row(r);
    softmax_inplace(p, n);
    const auto t = static_cast<std::size_t>(targets[r]);
    if (t >= n) throw Error("softmax_bce_loss: target out of range");
    double row_loss = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double pc = std::clamp(p[c], clamp, 1.0 - clamp);
      row_loss -= (c == t) ? std::log(pc) : std::log1p(-pc);
    }
    total += row_weight[r] * row_loss * inv_ln2;
  }
  Matrix out(1, 1, total / divisor);
  std::vector<int> tv(targets.begin(), targets.end());
  std::vector<double> wv(row_weight.begin(), row_weight.end());
  return make_result(
      std::move(out), {logits},
      [logits, probs, tv = std::move(tv), wv = std::move(wv), divisor, clamp, inv_ln2, m,
       n](Node& self) {
        auto& g = logits.node()->grad_buffer();
        const double upstream = self.grad.data[0];
        std::vector<double> pg(n);
        for (std::size_t r = 0; r < m; ++r) {
          if (wv[r] == 0.0) continue;
          const double s = upstream * wv[r] * inv_ln2 / divisor;
          const double* p = probs->row(r);
          const auto t = static_cast<std::size_t>(tv[r]);
          double acc = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            if (p[c] <= clamp || p[c] >= 1.0 - clamp) {
              pg[c] = 0.0;
              continue;
            }
            // p_c * dL/dp_c
            pg[c] = (c == t) ? -s : s * p[c] / (1.0 - p[c]);
            acc += pg[c];
          }
          double* gr = g.row(r);
          for (std::size_t c = 0; c < n; ++c) gr[c] += pg[c] - p[c] * acc;
        }
      });
}

}  // namespace ag
}  // namespace semsic
