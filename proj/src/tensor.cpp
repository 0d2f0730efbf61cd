#include "conpro/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace conpro {

void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    check(d >= 0, "negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check(shape_numel(shape_) == static_cast<int64_t>(data_.size()),
        "tensor data length does not match shape " + shape_str(shape_));
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

Tensor Tensor::reshaped(Shape s) const {
  check(shape_numel(s) == size(), "reshape " + shape_str(shape_) + " -> " + shape_str(s) + " changes element count");
  return Tensor(std::move(s), data_);
}

double Tensor::sum() const {
  double acc = 0.0;
  for (double x : data_) acc += x;
  return acc;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double x : data_) m = std::max(m, std::fabs(x));
  return m;
}

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

void axpy(double a, const double* x, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void mm_nn_acc(double* c, const double* a, const double* b, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void mm_nt_acc(double* c, const double* a, const double* b, int64_t m, int64_t n, int64_t k) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

void mm_tn_acc(double* c, const double* a, const double* b, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      axpy(av, brow, c + p * n, n);
    }
  }
}

Tensor matmul_nn(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 && b.ndim() == 2, "matmul expects 2-d tensors");
  check(a.dim(1) == b.dim(0),
        "matmul shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor c({a.dim(0), b.dim(1)});
  mm_nn_acc(c.data(), a.data(), b.data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

Tensor transpose2(const Tensor& a) {
  check(a.ndim() == 2, "transpose expects a 2-d tensor");
  Tensor t({a.dim(1), a.dim(0)});
  for (int64_t i = 0; i < a.dim(0); ++i)
    for (int64_t j = 0; j < a.dim(1); ++j) t.at2(j, i) = a.at2(i, j);
  return t;
}

uint64_t fnv1a64_bytes(const double* data, int64_t n) {
  uint64_t h = 1469598103934665603ull;
  const unsigned char* p = reinterpret_cast<const unsigned char*>(data);
  const size_t bytes = static_cast<size_t>(n) * sizeof(double);
  for (size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t fnv1a64(const Tensor& t) { return fnv1a64_bytes(t.data(), t.size()); }

}  // namespace conpro
