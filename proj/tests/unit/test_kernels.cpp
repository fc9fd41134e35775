#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "semsic/kernels/kernels.hpp"

using namespace semsic::kernels;

namespace {

std::vector<double> randv(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("scalar gemm matches a naive triple loop") {
  std::mt19937_64 rng(1);
  const std::size_t m = 5, n = 7, k = 3;
  auto a = randv(m * k, rng), b = randv(k * n, rng);
  std::vector<double> c(m * n, 0.5), ref(m * n, 0.5);
  scalar_table().gemm_nn(m, n, k, a.data(), k, b.data(), n, c.data(), n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) ref[i * n + j] += a[i * k + p] * b[p * n + j];
  CHECK(max_abs_diff(c, ref) < 1e-12);
}

TEST_CASE("transposed gemm wrapper") {
  std::mt19937_64 rng(2);
  const std::size_t m = 4, n = 6, k = 5;
  auto at = randv(k * m, rng), bt = randv(n * k, rng);
  std::vector<double> c(m * n, 0.0), ref(m * n, 0.0);
  gemm(true, true, m, n, k, at.data(), m, bt.data(), k, c.data(), n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) ref[i * n + j] += at[p * m + i] * bt[j * k + p];
  CHECK(max_abs_diff(c, ref) < 1e-12);
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const KernelTable* v = avx2_table();
  if (v == nullptr || !cpu_supports_avx2()) {
    MESSAGE("AVX2 unavailable; equivalence test skipped");
    return;
  }
  const KernelTable& s = scalar_table();
  std::mt19937_64 rng(3);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 33u, 257u, 1001u}) {
    auto x = randv(n, rng), y = randv(n, rng);
    CAPTURE(n);
    CHECK(std::abs(s.dot(x.data(), y.data(), n) - v->dot(x.data(), y.data(), n)) < 1e-10);
    CHECK(std::abs(s.sum(x.data(), n) - v->sum(x.data(), n)) < 1e-10);
    CHECK(std::abs(s.sum_squares(x.data(), n) - v->sum_squares(x.data(), n)) < 1e-10);
    if (n > 0) CHECK(s.max(x.data(), n) == v->max(x.data(), n));

    auto y1 = y, y2 = y;
    s.axpy(n, 0.7, x.data(), y1.data());
    v->axpy(n, 0.7, x.data(), y2.data());
    CHECK(max_abs_diff(y1, y2) < 1e-12);

    auto z1 = x, z2 = x;
    s.scale(n, -1.3, z1.data());
    v->scale(n, -1.3, z2.data());
    CHECK(max_abs_diff(z1, z2) == 0.0);

    std::vector<double> a1(n), a2(n);
    s.add(n, x.data(), y.data(), a1.data());
    v->add(n, x.data(), y.data(), a2.data());
    CHECK(max_abs_diff(a1, a2) == 0.0);
    s.mul(n, x.data(), y.data(), a1.data());
    v->mul(n, x.data(), y.data(), a2.data());
    CHECK(max_abs_diff(a1, a2) == 0.0);
    s.relu(n, x.data(), a1.data());
    v->relu(n, x.data(), a2.data());
    CHECK(max_abs_diff(a1, a2) == 0.0);

    auto d1 = y, d2 = y;
    s.relu_backward(n, x.data(), y.data(), d1.data());
    v->relu_backward(n, x.data(), y.data(), d2.data());
    CHECK(max_abs_diff(d1, d2) == 0.0);
  }
  const std::size_t shapes[][3] = {{1, 1, 1}, {4, 8, 3}, {5, 9, 17}, {13, 31, 300}, {64, 64, 64}, {3, 130, 2}};
  for (const auto& shape : shapes) {
    const std::size_t m = shape[0], n = shape[1], k = shape[2];
    CAPTURE(m);
    CAPTURE(n);
    CAPTURE(k);
    auto a = randv(m * k, rng), b = randv(k * n, rng);
    std::vector<double> c1(m * n, 1.0), c2(m * n, 1.0);
    s.gemm_nn(m, n, k, a.data(), k, b.data(), n, c1.data(), n);
    v->gemm_nn(m, n, k, a.data(), k, b.data(), n, c2.data(), n);
    CHECK(max_abs_diff(c1, c2) < 1e-10 * static_cast<double>(k));
  }
}

TEST_CASE("isa override") {
  const Isa before = active().isa;
  force_isa(Isa::kScalar);
  CHECK(active().isa == Isa::kScalar);
  CHECK(isa_name(Isa::kScalar) == "scalar");
  force_isa(before);
  CHECK(active().isa == before);
}
