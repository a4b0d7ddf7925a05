#include "gsure/tensor.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gsure/error.hpp"

namespace gsure {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_string(t.shape()));
  }
}

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.shape()[0]),
                  static_cast<Eigen::Index>(t.shape()[1]));
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  require_rank2(*this, "rows");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_rank2(*this, "cols");
  return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) {
  return std::span<double>(data_).subspan(r * shape_[1], shape_[1]);
}

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item: tensor has " + std::to_string(data_.size()) + " elements");
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("reshape: " + shape_string(shape_) + " -> " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "sub");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor& Tensor::axpy(double s, const Tensor& other) {
  require_same_shape(*this, other, "axpy");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
  return *this;
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::squared_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  out += b;
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  out -= b;
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  out *= s;
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out(Shape{a.rows(), b.cols()});
  MutMap(out.data().data(), out.shape()[0], out.shape()[1]).noalias() = as_matrix(a) * as_matrix(b);
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_tn");
  require_rank2(b, "matmul_tn");
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + shape_string(a.shape()) + "^T x " + shape_string(b.shape()));
  }
  Tensor out(Shape{a.cols(), b.cols()});
  MutMap(out.data().data(), out.shape()[0], out.shape()[1]).noalias() =
      as_matrix(a).transpose() * as_matrix(b);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
  }
  Tensor out(Shape{a.rows(), b.rows()});
  MutMap(out.data().data(), out.shape()[0], out.shape()[1]).noalias() =
      as_matrix(a) * as_matrix(b).transpose();
  return out;
}

Tensor stack_rows(std::span<const std::vector<double>> rows) {
  if (rows.empty()) return Tensor(Shape{0, 0});
  const std::size_t n = rows.front().size();
  Tensor out(Shape{rows.size(), n});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != n) throw ShapeError("stack_rows: ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), out.row(r).begin());
  }
  return out;
}

}  // namespace gsure
