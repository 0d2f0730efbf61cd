#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace conpro {

using Shape = std::vector<int64_t>;

[[noreturn]] void fail(const std::string& msg);

inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

std::string shape_str(const Shape& s);

// Dense row-major tensor of doubles. All numerics in this project run at
// double precision so gradient checks and oracle comparisons have headroom.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at2(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  double at2(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  double& at4(int64_t a, int64_t b, int64_t c, int64_t d) {
    return data_[static_cast<size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
  }
  double at4(int64_t a, int64_t b, int64_t c, int64_t d) const {
    return data_[static_cast<size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(double v);
  Tensor reshaped(Shape s) const;

  double sum() const;
  double max_abs() const;
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

int64_t shape_numel(const Shape& s);

// y += a*x over n elements
void axpy(double a, const double* x, double* y, int64_t n);

// C += A(M,K) * B(K,N)
void mm_nn_acc(double* c, const double* a, const double* b, int64_t m, int64_t k, int64_t n);
// C(M,K) += A(M,N) * B(K,N)^T
void mm_nt_acc(double* c, const double* a, const double* b, int64_t m, int64_t n, int64_t k);
// C(K,N) += A(M,K)^T * B(M,N)
void mm_tn_acc(double* c, const double* a, const double* b, int64_t m, int64_t k, int64_t n);

Tensor matmul_nn(const Tensor& a, const Tensor& b);
Tensor transpose2(const Tensor& a);

// FNV-1a over the raw little-endian byte image of the tensor data.
uint64_t fnv1a64_bytes(const double* p, int64_t n);
uint64_t fnv1a64(const Tensor& t);

}  // namespace conpro
