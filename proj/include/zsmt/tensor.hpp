#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "zsmt/rng.hpp"

namespace zsmt {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class DropoutMode { Elementwise, Variational };

class Tensor;

struct TensorNode {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first touched by backward
  std::vector<Tensor> parents;
  std::function<void()> backward;  // accumulates into parents' grads
  bool requires_grad = false;
  int64_t tape_pos = -1;

  void ensure_grad();
};

// Dense row-major float tensor. Copies are shallow: they alias the same node,
// which is what parameter registries and the tape rely on.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<float> data);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  // Leaf with requires_grad set; the unit every optimizer step touches.
  static Tensor parameter(Shape shape, std::vector<float> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }

  std::vector<float>& data() { return node_->data; }
  const std::vector<float>& data() const { return node_->data; }
  std::vector<float>& grad() { return node_->grad; }
  const std::vector<float>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  float item() const;

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Records every grad-requiring op result in creation order, which is a
// topological order by construction. One tape per training step.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  // Reverse sweep from `loss` (must be scalar). Visits each recorded node at
  // most once. Parameters in `also_touch` get a zero grad buffer even when
  // the loss does not reach them.
  void backward(const Tensor& loss, const std::vector<Tensor>& also_touch = {});

  void record(const std::shared_ptr<TensorNode>& node);
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::shared_ptr<TensorNode>> nodes_;
  Tape* prev_ = nullptr;
};

// Scoped guard that disables graph construction (inference mode).
struct NoGrad {
  NoGrad();
  ~NoGrad();

 private:
  bool prev_;
};

bool grad_enabled();

// Convenience wrapper for the active tape.
void backward(const Tensor& loss, const std::vector<Tensor>& also_touch = {});

// ---- ops -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);
// x[..., d] + bias[d]
Tensor add_bias(const Tensor& x, const Tensor& bias);
// x[B, T, d] + m[T, d] broadcast over the leading dim (positional encodings)
Tensor add_seq(const Tensor& x, const Tensor& m);

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k]^T
Tensor bmm(const Tensor& a, const Tensor& b);        // [B,m,k]x[B,k,n]
Tensor bmm_nt(const Tensor& a, const Tensor& b);     // [B,m,k]x[B,n,k]^T

Tensor relu(const Tensor& x);
// Softmax over the last axis. -inf entries are masked out exactly; a row of
// all -inf is an error.
Tensor softmax_lastdim(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);
Tensor dropout(const Tensor& x, float rate, DropoutMode mode, bool training, Rng& rng);

// table[V,d] gathered by ids -> [N,d]; backward scatter-adds into the table.
Tensor embedding_lookup(const Tensor& table, const std::vector<int32_t>& ids);

Tensor concat_lastdim(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& x, Shape new_shape);
// [a,b,c,d] -> [a,c,b,d]; used to split/merge attention heads.
Tensor permute_0213(const Tensor& x);

Tensor sum_all(const Tensor& x);

// Mean over non-pad positions of -sum_k q_k log p_k with
// q = (1-eps)*onehot + eps/V. Positions with target == pad_id are excluded
// from both the sum and the normalizer.
Tensor cross_entropy_label_smoothed(const Tensor& logits, const std::vector<int32_t>& targets,
                                    float epsilon, int32_t pad_id);

bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace zsmt
