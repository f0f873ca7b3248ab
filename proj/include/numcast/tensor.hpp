#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace numcast {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor handle. Copies share storage; use clone() for a
/// deep copy. Operations on the tape treat rank-1 tensors as 1×n matrices.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  /// Gradient buffer; empty until a backward pass touches this tensor.
  bool has_grad() const;
  /// Gradient storage belongs to the shared buffer, not the handle, so these
  /// are usable through const handles captured by backward closures.
  std::span<double> grad() const;
  /// Allocates the gradient buffer if needed and returns it.
  std::span<double> ensure_grad() const;
  void zero_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> impl_;
};

/// Define-by-run record of primitive operations. Every op appends a node whose
/// inputs were created before it, so reverse iteration is a valid topological
/// order for the backward pass. Ops whose inputs do not require gradients are
/// evaluated but not recorded.
class Tape {
 public:
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& x);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& x, double factor);
  /// x[r×c] + bias[1×c] added to every row.
  Tensor add_bias(const Tensor& x, const Tensor& bias);
  Tensor tanh(const Tensor& x);
  Tensor relu(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  Tensor softmax(const Tensor& x);
  Tensor log_softmax(const Tensor& x);
  /// Row-wise normalization to zero mean and unit variance (no affine part).
  Tensor layer_norm(const Tensor& x, double eps = kLayerNormEps);
  /// Mean over rows; returns 1×c.
  Tensor mean_pool(const Tensor& x);
  /// Mean over rows whose mask entry is true; returns 1×c.
  Tensor masked_mean_pool(const Tensor& x, const std::vector<bool>& row_mask);
  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor concat_rows(const std::vector<Tensor>& parts);
  Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
  Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
  Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids);
  Tensor sum(const Tensor& x);
  Tensor mean(const Tensor& x);
  /// Single element as a scalar tensor.
  Tensor pick(const Tensor& x, std::size_t r, std::size_t c);
  /// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets.
  Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every tensor on the tape.
  /// Gradients of recorded intermediates are reset first; gradients of leaf
  /// tensors accumulate, so callers zero them between passes.
  void backward(const Tensor& loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  static constexpr double kLayerNormEps = 1e-5;

 private:
  struct Node {
    Tensor output;
    std::function<void()> backward;
  };
  void record(const Tensor& output, std::function<void()> backward);

  std::vector<Node> nodes_;
};

}  // namespace numcast
