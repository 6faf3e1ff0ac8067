#include "headrouter/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>

namespace headrouter {

namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw ShapeError("tensor rank must be at least 1");
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
  }
}

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected rank-2 tensor, got " + t.shape_string());
  }
}

void require_same_dims(const Tensor& a, const Tensor& b, const char* what) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  check_dims(dims_);
  data_.assign(product(dims_), 0.0f);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_);
  if (data_.size() != product(dims_)) {
    throw ShapeError("tensor payload length " + std::to_string(data_.size()) +
                     " does not match dims " + shape_string());
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  if (rows.size() == 0) throw ShapeError("from_rows: no rows");
  const std::size_t cols = rows.begin()->size();
  std::vector<float> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, float fill) {
  Tensor t({rows, cols});
  std::fill(t.data_.begin(), t.data_.end(), fill);
  return t;
}

Tensor Tensor::vector(std::vector<float> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const {
  require_rank2(*this, "rows");
  return dims_[0];
}

std::size_t Tensor::cols() const {
  require_rank2(*this, "cols");
  return dims_[1];
}

std::span<const float> Tensor::row(std::size_t i) const {
  const std::size_t c = cols();
  if (i >= dims_[0]) throw ShapeError("row index out of range");
  return std::span<const float>(data_).subspan(i * c, c);
}

std::span<float> Tensor::row(std::size_t i) {
  const std::size_t c = cols();
  if (i >= dims_[0]) throw ShapeError("row index out of range");
  return std::span<float>(data_).subspan(i * c, c);
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
  if (a.dims() != b.dims()) return false;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(av[i]) != std::bit_cast<std::uint32_t>(bv[i])) return false;
  }
  return true;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "max_abs_diff");
  float worst = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::fabs(a.values()[i] - b.values()[i]));
  }
  return worst;
}

bool all_finite(const Tensor& t) noexcept {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](float v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
  if (b.rows() != q) {
    throw ShapeError("matmul: inner dimensions differ " + a.shape_string() + " * " +
                     b.shape_string());
  }
  Tensor out({p, r});
  const float* A = a.values().data();
  const float* B = b.values().data();
  float* C = out.values().data();
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < q; ++k) {
        acc += static_cast<double>(A[i * q + k]) * static_cast<double>(B[k * r + j]);
      }
      C[i * r + j] = static_cast<float>(acc);
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  require_rank2(a, "softmax_rows");
  Tensor out({a.rows(), a.cols()});
  std::vector<double> e(a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row(i);
    const double hi = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      e[j] = std::exp(static_cast<double>(in[j]) - hi);
      sum += e[j];
    }
    auto dst = out.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) dst[j] = static_cast<float>(e[j] / sum);
  }
  return out;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  // sqrt(x*x) == x exactly, so cosine(a, a) is exactly 1.
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor reshape(const Tensor& t, std::vector<std::size_t> dims) {
  check_dims(dims);
  if (product(dims) != t.size()) {
    throw ShapeError("reshape: cannot view " + t.shape_string() + " with " +
                     std::to_string(product(dims)) + " elements");
  }
  return Tensor(std::move(dims), t.data());
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
  require_rank2(top, "concat_rows");
  require_rank2(bottom, "concat_rows");
  if (top.cols() != bottom.cols()) throw ShapeError("concat_rows: column counts differ");
  std::vector<float> data(top.data());
  data.insert(data.end(), bottom.data().begin(), bottom.data().end());
  return Tensor({top.rows() + bottom.rows(), top.cols()}, std::move(data));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    auto dst = out.row(i).begin();
    for (const auto& p : parts) dst = std::copy(p.row(i).begin(), p.row(i).end(), dst);
  }
  return out;
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  require_rank2(t, "slice_rows");
  if (begin >= end || end > t.rows()) throw ShapeError("slice_rows: bad range");
  const std::size_t c = t.cols();
  std::vector<float> data(t.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                          t.data().begin() + static_cast<std::ptrdiff_t>(end * c));
  return Tensor({end - begin, c}, std::move(data));
}

Tensor slice_cols(const Tensor& t, std::size_t begin, std::size_t end) {
  require_rank2(t, "slice_cols");
  if (begin >= end || end > t.cols()) throw ShapeError("slice_cols: bad range");
  Tensor out({t.rows(), end - begin});
  for (std::size_t i = 0; i < t.rows(); ++i) {
    auto src = t.row(i);
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(begin),
              src.begin() + static_cast<std::ptrdiff_t>(end), out.row(i).begin());
  }
  return out;
}

Tensor scale(const Tensor& t, float factor) {
  Tensor out(t);
  for (float& v : out.values()) v *= factor;
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "add");
  Tensor out(a);
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  require_same_dims(a, b, "subtract");
  Tensor out(a);
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

}  // namespace headrouter
