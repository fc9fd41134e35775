#pragma once
// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tensor is a handle to a graph node.  Operations record a backward closure
// only while gradient recording is enabled and at least one input requires a
// gradient, so inference under NoGradGuard builds no graph at all.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace semsic {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

namespace ag {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Returns the gradient buffer, allocating zeros on first use.
  Matrix& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();
  std::size_t rows() const { return node_->value.rows; }
  std::size_t cols() const { return node_->value.cols; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  double item() const;
  // Seeds d(this)/d(this) = 1 on a 1x1 tensor and propagates to all inputs.
  void backward() const;
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- elementwise and shape ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// x [n x c] + row [1 x c] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor detach(const Tensor& a);
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);
// Multiplies row r by factors[r]; factors are constants.
Tensor scale_rows(const Tensor& a, std::span<const double> factors);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor sum_all(const Tensor& a);

// ---- dense layers ----
Tensor matmul(const Tensor& a, const Tensor& b);
// x [n x in] * w [in x out] + bias [1 x out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);
// Gathers rows of table [V x d] for each id.
Tensor embedding(const Tensor& table, std::span<const int> ids);

// Multi-head scaled dot-product attention over independent sequences of
// seq_len consecutive rows.  key_valid (optional, one flag per row of k)
// masks keys out of the softmax.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 std::size_t seq_len, std::span<const std::uint8_t> key_valid = {});

// ---- sequence convolution helpers (kernel width 3, zero padding 1) ----
// [rows x C] -> [rows x 3C]: each row gathers (prev, self, next) within its sequence.
Tensor im2col_seq(const Tensor& x, std::size_t seq_len);
// Adjoint of im2col_seq: [rows x 3C] -> [rows x C] scatter-add.
Tensor col2im_seq(const Tensor& cols, std::size_t seq_len);
// Generalized divisive normalization, y = x / sqrt(beta + gamma x^2), or the
// inverse y = x * sqrt(...).  beta = beta_raw^2 + floor, gamma = gamma_raw^2.
Tensor gdn(const Tensor& x, const Tensor& beta_raw, const Tensor& gamma_raw, bool inverse);

// ---- framing / channel helpers ----
// Scales each row to Euclidean norm target_norm.  Throws on a zero row unless
// allow_zero, in which case zero rows pass through unchanged.
Tensor normalize_rows(const Tensor& a, double target_norm, bool allow_zero = false);
// Euclidean norm of every row, [rows x 1].
Tensor row_norms(const Tensor& a);
// Multiplies row r of a by s[r]; s is [rows x 1] and differentiable.
Tensor mul_rows(const Tensor& a, const Tensor& s);
// Treats consecutive column pairs as (re, im) and multiplies row r by factors[r].
Tensor complex_scale_rows(const Tensor& a, std::span<const std::complex<double>> factors);

// ---- probabilities and losses ----
Tensor softmax_rows(const Tensor& logits);
// Two-term base-2 binary cross-entropy between softmax(logits) and one-hot targets,
// summed over vocabulary entries and rows weighted by row_weight, divided by divisor.
// Probabilities are clamped to [clamp, 1 - clamp]; clamped entries get no gradient.
Tensor softmax_bce_loss(const Tensor& logits, std::span<const int> targets,
                        std::span<const double> row_weight, double divisor,
                        double clamp = 1e-12);

}  // namespace ag
}  // namespace semsic
