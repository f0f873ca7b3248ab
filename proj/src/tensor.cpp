#include "numcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

#include "numcast/errors.hpp"
#include "numcast/kernels.hpp"

namespace numcast {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive");
  }
  if (shape_size(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_string(shape));
  }
  impl_ = std::make_shared<Storage>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1, 1}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> data, bool requires_grad) {
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->data.size(); }

std::size_t Tensor::rows() const {
  const Shape& s = impl_->shape;
  if (s.size() == 1) return 1;
  if (s.size() == 2) return s[0];
  throw DimensionError("expected a matrix, got shape " + shape_string(s));
}

std::size_t Tensor::cols() const {
  const Shape& s = impl_->shape;
  if (s.size() == 1) return s[0];
  if (s.size() == 2) return s[1];
  throw DimensionError("expected a matrix, got shape " + shape_string(s));
}

std::span<double> Tensor::data() { return impl_->data; }
std::span<const double> Tensor::data() const { return impl_->data; }

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_string(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return impl_->data[r * cols() + c];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::ensure_grad() const {
  if (impl_->grad.size() != impl_->data.size()) {
    impl_->grad.assign(impl_->data.size(), 0.0);
  }
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor copy(impl_->shape, impl_->data, impl_->requires_grad);
  copy.impl_->grad = impl_->grad;
  return copy;
}

// ---------------------------------------------------------------------------

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

Tensor result_like(std::size_t rows, std::size_t cols,
                   std::vector<double> data, bool requires_grad) {
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

// Accumulates into x.grad only when x participates in differentiation.
template <typename F>
void accumulate(const Tensor& x, F&& body) {
  if (!x.requires_grad()) return;
  body(x.ensure_grad());
}

}  // namespace

void Tape::record(const Tensor& output, std::function<void()> backward) {
  nodes_.push_back({output, std::move(backward)});
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ " +
                         shape_string(a.shape()) + " · " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm_nn(a.data(), b.data(), out, m, k, n, false);
  const bool track = a.requires_grad() || b.requires_grad();
  Tensor y = result_like(m, n, std::move(out), track);
  if (track) {
    record(y, [a, b, y, m, k, n]() mutable {
      accumulate(a, [&](std::span<double> ga) {
        kernels::gemm_nt(y.grad(), b.data(), ga, m, n, k, true);
      });
      accumulate(b, [&](std::span<double> gb) {
        kernels::gemm_tn(a.data(), y.grad(), gb, m, k, n, true);
      });
    });
  }
  return y;
}

Tensor Tape::transpose(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  auto xd = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xd[i * c + j];
  Tensor y = result_like(c, r, std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    record(y, [x, y, r, c]() mutable {
      auto gy = y.grad();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[j * r + i];
    });
  }
  return y;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  const bool track = a.requires_grad() || b.requires_grad();
  Tensor y = result_like(a.rows(), a.cols(), std::move(out), track);
  if (track) {
    record(y, [a, b, y]() mutable {
      auto gy = y.grad();
      accumulate(a, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      });
      accumulate(b, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      });
    });
  }
  return y;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  const bool track = a.requires_grad() || b.requires_grad();
  Tensor y = result_like(a.rows(), a.cols(), std::move(out), track);
  if (track) {
    record(y, [a, b, y]() mutable {
      auto gy = y.grad();
      accumulate(a, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      });
      accumulate(b, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gy[i];
      });
    });
  }
  return y;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  const bool track = a.requires_grad() || b.requires_grad();
  Tensor y = result_like(a.rows(), a.cols(), std::move(out), track);
  if (track) {
    record(y, [a, b, y]() mutable {
      auto gy = y.grad();
      auto ad = a.data(), bd = b.data();
      accumulate(a, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * bd[i];
      });
      accumulate(b, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * ad[i];
      });
    });
  }
  return y;
}

Tensor Tape::scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  Tensor y = result_like(x.rows(), x.cols(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    record(y, [x, y, factor]() mutable {
      auto gy = y.grad();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * gy[i];
    });
  }
  return y;
}

Tensor Tape::add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t r = x.rows(), c = x.cols();
  if (bias.size() != c) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) +
                         " does not match columns of " +
                         shape_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto bd = bias.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bd[j];
  const bool track = x.requires_grad() || bias.requires_grad();
  Tensor y = result_like(r, c, std::move(out), track);
  if (track) {
    record(y, [x, bias, y, r, c]() mutable {
      auto gy = y.grad();
      accumulate(x, [&](std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      });
      accumulate(bias, [&](std::span<double> g) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) g[j] += gy[i * c + j];
      });
    });
  }
  return y;
}

Tensor Tape::tanh(const Tensor& x) {
  std::vector<double> out(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xd[i]);
  Tensor y = result_like(x.rows(), x.cols(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    record(y, [x, y]() mutable {
      auto gy = y.grad();
      auto yd = y.data();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx[i] += gy[i] * (1.0 - yd[i] * yd[i]);
    });
  }
  return y;
}

Tensor Tape::relu(const Tensor& x) {
  std::vector<double> out(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  Tensor y = result_like(x.rows(), x.cols(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    record(y, [x, y]() mutable {
      auto gy = y.grad();
      auto xd = x.data();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (xd[i] > 0.0) gx[i] += gy[i];
    });
  }
  return y;
}

Tensor Tape::sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = xd[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-xd[i]))
                          : std::exp(xd[i]) / (1.0 + std::exp(xd[i]));
  }
  Tensor y = result_like(x.rows(), x.cols(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    record(y, [x, y]() mutable {
      auto gy = y.grad();
      auto yd = y.data();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx[i] += gy[i] * yd[i] * (1.0 - yd[i]);
    });
  }
  return y;
}

Tensor Tape::softmax(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  auto xd = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xd.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(row[j] - mx);
      total += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= total;
  }
  Tensor y = result_like(r, c, std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    record(y, [x, y, r, c]() mutable {
      auto gy = y.grad();
      auto yd = y.data();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += gy[i * c + j] * yd[i * c + j];
        for (std::size_t j = 0; j < c; ++j)
          gx[i * c + j] += yd[i * c + j] * (gy[i * c + j] - dot);
      }
    });
  }
  return y;
}

Tensor Tape::log_softmax(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  auto xd = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xd.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(row[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
  }
  Tensor y = result_like(r, c, std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    record(y, [x, y, r, c]() mutable {
      auto gy = y.grad();
      auto yd = y.data();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) total += gy[i * c + j];
        for (std::size_t j = 0; j < c; ++j)
          gx[i * c + j] += gy[i * c + j] - std::exp(yd[i * c + j]) * total;
      }
    });
  }
  return y;
}

Tensor Tape::layer_norm(const Tensor& x, double eps) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  std::vector<double> inv_std(r);
  auto xd = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xd.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = (row[j] - mu) * inv_std[i];
  }
  Tensor y = result_like(r, c, std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    record(y, [x, y, r, c, inv_std = std::move(inv_std)]() mutable {
      auto gy = y.grad();
      auto yd = y.data();
      auto gx = x.ensure_grad();
      const double inv_c = 1.0 / static_cast<double>(c);
      for (std::size_t i = 0; i < r; ++i) {
        double mean_g = 0.0, mean_gy = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          mean_g += gy[i * c + j];
          mean_gy += gy[i * c + j] * yd[i * c + j];
        }
        mean_g *= inv_c;
        mean_gy *= inv_c;
        for (std::size_t j = 0; j < c; ++j) {
          gx[i * c + j] += inv_std[i] *
                           (gy[i * c + j] - mean_g - yd[i * c + j] * mean_gy);
        }
      }
    });
  }
  return y;
}

Tensor Tape::mean_pool(const Tensor& x) {
  return masked_mean_pool(x, std::vector<bool>(x.rows(), true));
}

Tensor Tape::masked_mean_pool(const Tensor& x, const std::vector<bool>& row_mask) {
  const std::size_t r = x.rows(), c = x.cols();
  if (row_mask.size() != r) {
    throw DimensionError("masked_mean_pool: mask length " +
                         std::to_string(row_mask.size()) + " vs " +
                         std::to_string(r) + " rows");
  }
  const auto live = static_cast<std::size_t>(
      std::count(row_mask.begin(), row_mask.end(), true));
  if (live == 0) throw ContractError("masked_mean_pool: every row is masked");
  const double inv = 1.0 / static_cast<double>(live);
  std::vector<double> out(c, 0.0);
  auto xd = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    if (!row_mask[i]) continue;
    for (std::size_t j = 0; j < c; ++j) out[j] += xd[i * c + j];
  }
  for (double& v : out) v *= inv;
  Tensor y = result_like(1, c, std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    record(y, [x, y, row_mask, r, c, inv]() mutable {
      auto gy = y.grad();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        if (!row_mask[i]) continue;
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[j] * inv;
      }
    });
  }
  return y;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t r = parts.front().rows();
  std::size_t c = 0;
  bool track = false;
  for (const Tensor& p : parts) {
    if (p.rows() != r) throw DimensionError("concat_cols: row counts differ");
    c += p.cols();
    track = track || p.requires_grad();
  }
  std::vector<double> out(r * c);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t pc = p.cols();
    auto pd = p.data();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(pd.data() + i * pc, pc, out.data() + i * c + offset);
    offset += pc;
  }
  Tensor y = result_like(r, c, std::move(out), track);
  if (track) {
    record(y, [parts, y, r, c]() mutable {
      auto gy = y.grad();
      std::size_t offset = 0;
      for (const Tensor& p : parts) {
        const std::size_t pc = p.cols();
        accumulate(p, [&](std::span<double> g) {
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < pc; ++j)
              g[i * pc + j] += gy[i * c + offset + j];
        });
        offset += pc;
      }
    });
  }
  return y;
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  bool track = false;
  for (const Tensor& p : parts) {
    if (p.cols() != c) throw DimensionError("concat_rows: column counts differ");
    r += p.rows();
    track = track || p.requires_grad();
  }
  std::vector<double> out;
  out.reserve(r * c);
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor y = result_like(r, c, std::move(out), track);
  if (track) {
    record(y, [parts, y]() mutable {
      auto gy = y.grad();
      std::size_t offset = 0;
      for (const Tensor& p : parts) {
        const std::size_t n = p.size();
        accumulate(p, [&](std::span<double> g) {
          for (std::size_t i = 0; i < n; ++i) g[i] += gy[offset + i];
        });
        offset += n;
      }
    });
  }
  return y;
}

Tensor Tape::slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t r = x.rows(), c = x.cols();
  if (count == 0 || begin + count > c) {
    throw DimensionError("slice_cols: range out of bounds");
  }
  std::vector<double> out(r * count);
  auto xd = x.data();
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(xd.data() + i * c + begin, count, out.data() + i * count);
  Tensor y = result_like(r, count, std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    record(y, [x, y, r, c, begin, count]() mutable {
      auto gy = y.grad();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j)
          gx[i * c + begin + j] += gy[i * count + j];
    });
  }
  return y;
}

Tensor Tape::slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t r = x.rows(), c = x.cols();
  if (count == 0 || begin + count > r) {
    throw DimensionError("slice_rows: range out of bounds");
  }
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                          x.data().begin() +
                              static_cast<std::ptrdiff_t>((begin + count) * c));
  Tensor y = result_like(count, c, std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    record(y, [x, y, c, begin]() mutable {
      auto gy = y.grad();
      auto gx = x.ensure_grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[begin * c + i] += gy[i];
    });
  }
  return y;
}

Tensor Tape::embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
  const std::size_t vocab = table.rows(), d = table.cols();
  if (ids.empty()) throw ContractError("embedding_lookup: empty id list");
  std::vector<double> out(ids.size() * d);
  auto td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab) {
      throw ContractError("embedding_lookup: id " + std::to_string(ids[i]) +
                          " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(td.data() + ids[i] * d, d, out.data() + i * d);
  }
  Tensor y = result_like(ids.size(), d, std::move(out), table.requires_grad());
  if (table.requires_grad()) {
    std::vector<std::size_t> rows(ids.begin(), ids.end());
    record(y, [table, y, d, rows = std::move(rows)]() mutable {
      auto gy = y.grad();
      auto gt = table.ensure_grad();
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) gt[rows[i] * d + j] += gy[i * d + j];
    });
  }
  return y;
}

Tensor Tape::sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor y = Tensor::scalar(total, x.requires_grad());
  if (x.requires_grad()) {
    record(y, [x, y]() mutable {
      const double g = y.grad()[0];
      for (double& v : x.ensure_grad()) v += g;
    });
  }
  return y;
}

Tensor Tape::mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor Tape::pick(const Tensor& x, std::size_t r, std::size_t c) {
  if (r >= x.rows() || c >= x.cols()) throw DimensionError("pick: out of bounds");
  const std::size_t index = r * x.cols() + c;
  Tensor y = Tensor::scalar(x.data()[index], x.requires_grad());
  if (x.requires_grad()) {
    record(y, [x, y, index]() mutable { x.ensure_grad()[index] += y.grad()[0]; });
  }
  return y;
}

Tensor Tape::bce_with_logits(const Tensor& logits, std::span<const double> targets) {
  if (targets.size() != logits.size()) {
    throw DimensionError("bce_with_logits: target count mismatch");
  }
  auto z = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    // log(1 + e^z) − t·z, evaluated stably.
    total += std::max(z[i], 0.0) - z[i] * targets[i] +
             std::log1p(std::exp(-std::abs(z[i])));
  }
  const double inv = 1.0 / static_cast<double>(z.size());
  Tensor y = Tensor::scalar(total * inv, logits.requires_grad());
  if (logits.requires_grad()) {
    std::vector<double> t(targets.begin(), targets.end());
    record(y, [logits, y, inv, t = std::move(t)]() mutable {
      const double g = y.grad()[0];
      auto z = logits.data();
      auto gz = logits.ensure_grad();
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double s = z[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-z[i]))
                                     : std::exp(z[i]) / (1.0 + std::exp(z[i]));
        gz[i] += g * inv * (s - t[i]);
      }
    });
  }
  return y;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar tensor");
  }
  for (Node& node : nodes_) {
    auto g = node.output.ensure_grad();
    std::fill(g.begin(), g.end(), 0.0);
  }
  Tensor seed = loss;
  seed.ensure_grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

}  // namespace numcast
