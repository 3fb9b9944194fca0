#include "zsmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "zsmt/kernels.hpp"

namespace zsmt {

namespace {

thread_local Tape* g_tape = nullptr;
thread_local bool g_grad_enabled = true;

bool track_grad(std::initializer_list<const Tensor*> parents) {
  if (!g_grad_enabled || g_tape == nullptr) return false;
  for (const Tensor* p : parents) {
    if (p->requires_grad()) return true;
  }
  return false;
}

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + shape_str(a) + " and " +
                              shape_str(b));
}

void attach(Tensor& out, std::vector<Tensor> parents, std::function<void()> backward_fn) {
  TensorNode* n = out.node();
  n->requires_grad = true;
  n->parents = std::move(parents);
  n->backward = std::move(backward_fn);
  g_tape->record(out.node_ptr());
}

}  // namespace

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

void TensorNode::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
}

Tensor Tensor::from(Shape shape, std::vector<float> data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) + " wants " +
                                std::to_string(shape_numel(shape)) + " elements, got " +
                                std::to_string(data.size()));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape) {
  return full(std::move(shape), 0.0f);
}

Tensor Tensor::full(Shape shape, float value) {
  auto node = std::make_shared<TensorNode>();
  node->data.assign(static_cast<size_t>(shape_numel(shape)), value);
  node->shape = std::move(shape);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Shape shape, std::vector<float> data) {
  Tensor t = from(std::move(shape), std::move(data));
  t.set_requires_grad(true);
  return t;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

float Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("Tensor::item: tensor has shape " + shape_str(shape()));
  }
  return node_->data[0];
}

Tape::Tape() {
  prev_ = g_tape;
  g_tape = this;
}

Tape::~Tape() {
  g_tape = prev_;
}

Tape* Tape::current() {
  return g_tape;
}

void Tape::record(const std::shared_ptr<TensorNode>& node) {
  node->tape_pos = static_cast<int64_t>(nodes_.size());
  nodes_.push_back(node);
}

void Tape::backward(const Tensor& loss, const std::vector<Tensor>& also_touch) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  for (const Tensor& t : also_touch) t.node()->ensure_grad();

  TensorNode* root = loss.node();
  root->ensure_grad();
  root->grad[0] = 1.0f;
  if (root->tape_pos < 0) return;  // a leaf: nothing upstream of it

  std::vector<char> needed(nodes_.size(), 0);
  std::vector<TensorNode*> stack = {root};
  needed[static_cast<size_t>(root->tape_pos)] = 1;
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    for (const Tensor& p : n->parents) {
      int64_t pos = p.node()->tape_pos;
      if (pos >= 0 && pos < static_cast<int64_t>(nodes_.size()) &&
          nodes_[static_cast<size_t>(pos)].get() == p.node() && !needed[static_cast<size_t>(pos)]) {
        needed[static_cast<size_t>(pos)] = 1;
        stack.push_back(p.node());
      }
    }
  }
  for (int64_t i = static_cast<int64_t>(nodes_.size()) - 1; i >= 0; --i) {
    if (!needed[static_cast<size_t>(i)]) continue;
    TensorNode* n = nodes_[static_cast<size_t>(i)].get();
    if (!n->backward) continue;
    n->ensure_grad();
    n->backward();
  }
}

void backward(const Tensor& loss, const std::vector<Tensor>& also_touch) {
  Tape* tape = Tape::current();
  if (tape == nullptr) throw std::runtime_error("backward: no active tape");
  tape->backward(loss, also_touch);
}

NoGrad::NoGrad() : prev_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGrad::~NoGrad() {
  g_grad_enabled = prev_;
}

bool grad_enabled() {
  return g_grad_enabled;
}

// ---- elementwise -------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  Tensor result = Tensor::from(a.shape(), std::move(out));
  if (track_grad({&a, &b})) {
    TensorNode* self = result.node();
    attach(result, {a, b}, [self, an = a.node(), bn = b.node()]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += self->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) bn->grad[i] += self->grad[i];
      }
    });
  }
  return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  Tensor result = Tensor::from(a.shape(), std::move(out));
  if (track_grad({&a, &b})) {
    TensorNode* self = result.node();
    attach(result, {a, b}, [self, an = a.node(), bn = b.node()]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += self->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) bn->grad[i] -= self->grad[i];
      }
    });
  }
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor result = Tensor::from(a.shape(), std::move(out));
  if (track_grad({&a, &b})) {
    TensorNode* self = result.node();
    attach(result, {a, b}, [self, an = a.node(), bn = b.node()]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += self->grad[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) bn->grad[i] += self->grad[i] * an->data[i];
      }
    });
  }
  return result;
}

Tensor scale(const Tensor& a, float c) {
  std::vector<float> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
  Tensor result = Tensor::from(a.shape(), std::move(out));
  if (track_grad({&a})) {
    TensorNode* self = result.node();
    attach(result, {a}, [self, an = a.node(), c]() {
      an->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += self->grad[i] * c;
    });
  }
  return result;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() < 1 || bias.rank() != 1 || x.dim(x.rank() - 1) != bias.dim(0)) {
    shape_error("add_bias", x.shape(), bias.shape());
  }
  const int d = bias.dim(0);
  const int64_t rows = x.numel() / d;
  std::vector<float> out(x.data().size());
  for (int64_t r = 0; r < rows; ++r) {
    const float* xi = x.data().data() + r * d;
    float* oi = out.data() + r * d;
    for (int j = 0; j < d; ++j) oi[j] = xi[j] + bias.data()[static_cast<size_t>(j)];
  }
  Tensor result = Tensor::from(x.shape(), std::move(out));
  if (track_grad({&x, &bias})) {
    TensorNode* self = result.node();
    attach(result, {x, bias}, [self, xn = x.node(), bn = bias.node(), rows, d]() {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) xn->grad[i] += self->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
          const float* gi = self->grad.data() + r * d;
          for (int j = 0; j < d; ++j) bn->grad[static_cast<size_t>(j)] += gi[j];
        }
      }
    });
  }
  return result;
}

Tensor add_seq(const Tensor& x, const Tensor& m) {
  if (x.rank() != 3 || m.rank() != 2 || x.dim(1) != m.dim(0) || x.dim(2) != m.dim(1)) {
    shape_error("add_seq", x.shape(), m.shape());
  }
  const int64_t block = static_cast<int64_t>(x.dim(1)) * x.dim(2);
  const int b = x.dim(0);
  std::vector<float> out(x.data().size());
  for (int bi = 0; bi < b; ++bi) {
    const float* xi = x.data().data() + bi * block;
    float* oi = out.data() + bi * block;
    for (int64_t i = 0; i < block; ++i) oi[i] = xi[i] + m.data()[static_cast<size_t>(i)];
  }
  Tensor result = Tensor::from(x.shape(), std::move(out));
  if (track_grad({&x, &m})) {
    TensorNode* self = result.node();
    attach(result, {x, m}, [self, xn = x.node(), mn = m.node(), b, block]() {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (size_t i = 0; i < self->grad.size(); ++i) xn->grad[i] += self->grad[i];
      }
      if (mn->requires_grad) {
        mn->ensure_grad();
        for (int bi = 0; bi < b; ++bi) {
          const float* gi = self->grad.data() + bi * block;
          for (int64_t i = 0; i < block; ++i) mn->grad[static_cast<size_t>(i)] += gi[i];
        }
      }
    });
  }
  return result;
}

// ---- matrix products -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_error("matmul", a.shape(), b.shape());
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(static_cast<size_t>(m) * n);
  kernels::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  Tensor result = Tensor::from({m, n}, std::move(out));
  if (track_grad({&a, &b})) {
    TensorNode* self = result.node();
    attach(result, {a, b}, [self, an = a.node(), bn = b.node(), m, n, k]() {
      if (an->requires_grad) {
        an->ensure_grad();
        kernels::gemm_nt(m, k, n, self->grad.data(), bn->data.data(), an->grad.data(), true);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        kernels::gemm_tn(k, n, m, an->data.data(), self->grad.data(), bn->grad.data(), true);
      }
    });
  }
  return result;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    shape_error("matmul_nt", a.shape(), b.shape());
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<float> out(static_cast<size_t>(m) * n);
  kernels::gemm_nt(m, n, k, a.data().data(), b.data().data(), out.data());
  Tensor result = Tensor::from({m, n}, std::move(out));
  if (track_grad({&a, &b})) {
    TensorNode* self = result.node();
    attach(result, {a, b}, [self, an = a.node(), bn = b.node(), m, n, k]() {
      if (an->requires_grad) {
        an->ensure_grad();
        kernels::gemm_nn(m, k, n, self->grad.data(), bn->data.data(), an->grad.data(), true);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        kernels::gemm_tn(n, k, m, self->grad.data(), an->data.data(), bn->grad.data(), true);
      }
    });
  }
  return result;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    shape_error("bmm", a.shape(), b.shape());
  }
  const int bt = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<float> out(static_cast<size_t>(bt) * m * n);
  kernels::bgemm_nn(bt, m, n, k, a.data().data(), b.data().data(), out.data());
  Tensor result = Tensor::from({bt, m, n}, std::move(out));
  if (track_grad({&a, &b})) {
    TensorNode* self = result.node();
    attach(result, {a, b}, [self, an = a.node(), bn = b.node(), bt, m, n, k]() {
      if (an->requires_grad) {
        an->ensure_grad();
        kernels::bgemm_nt(bt, m, k, n, self->grad.data(), bn->data.data(), an->grad.data(), true);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        kernels::bgemm_tn(bt, k, n, m, an->data.data(), self->grad.data(), bn->grad.data(), true);
      }
    });
  }
  return result;
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
    shape_error("bmm_nt", a.shape(), b.shape());
  }
  const int bt = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
  std::vector<float> out(static_cast<size_t>(bt) * m * n);
  kernels::bgemm_nt(bt, m, n, k, a.data().data(), b.data().data(), out.data());
  Tensor result = Tensor::from({bt, m, n}, std::move(out));
  if (track_grad({&a, &b})) {
    TensorNode* self = result.node();
    attach(result, {a, b}, [self, an = a.node(), bn = b.node(), bt, m, n, k]() {
      if (an->requires_grad) {
        an->ensure_grad();
        kernels::bgemm_nn(bt, m, k, n, self->grad.data(), bn->data.data(), an->grad.data(), true);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        kernels::bgemm_tn(bt, n, k, m, self->grad.data(), an->data.data(), bn->grad.data(), true);
      }
    });
  }
  return result;
}

// ---- nonlinearities --------------------------------------------------

Tensor relu(const Tensor& x) {
  std::vector<float> out(x.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > 0.0f ? x.data()[i] : 0.0f;
  Tensor result = Tensor::from(x.shape(), std::move(out));
  if (track_grad({&x})) {
    TensorNode* self = result.node();
    attach(result, {x}, [self, xn = x.node()]() {
      xn->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i) {
        if (xn->data[i] > 0.0f) xn->grad[i] += self->grad[i];
      }
    });
  }
  return result;
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() < 1) throw std::invalid_argument("softmax: scalar input");
  const int d = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / d;
  constexpr float neg_inf = -std::numeric_limits<float>::infinity();
  std::vector<float> out(x.data().size());
  for (int64_t r = 0; r < rows; ++r) {
    const float* xi = x.data().data() + r * d;
    float* oi = out.data() + r * d;
    float mx = neg_inf;
    for (int j = 0; j < d; ++j) mx = std::max(mx, xi[j]);
    if (mx == neg_inf) {
      throw std::runtime_error("softmax: fully masked row " + std::to_string(r));
    }
    double sum = 0.0;
    for (int j = 0; j < d; ++j) {
      const double e = xi[j] == neg_inf ? 0.0 : std::exp(static_cast<double>(xi[j]) - mx);
      oi[j] = static_cast<float>(e);
      sum += e;
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (int j = 0; j < d; ++j) oi[j] *= inv;
  }
  Tensor result = Tensor::from(x.shape(), std::move(out));
  if (track_grad({&x})) {
    TensorNode* self = result.node();
    attach(result, {x}, [self, xn = x.node(), rows, d]() {
      xn->ensure_grad();
      for (int64_t r = 0; r < rows; ++r) {
        const float* y = self->data.data() + r * d;
        const float* g = self->grad.data() + r * d;
        float* gx = xn->grad.data() + r * d;
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += static_cast<double>(g[j]) * y[j];
        for (int j = 0; j < d; ++j) gx[j] += y[j] * (g[j] - static_cast<float>(dot));
      }
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  if (x.rank() < 1) throw std::invalid_argument("layer_norm: scalar input");
  const int d = x.dim(x.rank() - 1);
  if (d == 0) throw std::invalid_argument("layer_norm: zero-width last dimension");
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d) {
    shape_error("layer_norm", x.shape(), gain.shape());
  }
  if (eps <= 0.0f) throw std::invalid_argument("layer_norm: eps must be positive");
  const int64_t rows = x.numel() / d;
  std::vector<float> out(x.data().size());
  auto mean = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
  auto inv = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const float* xi = x.data().data() + r * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += xi[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = xi[j] - mu;
      var += c * c;
    }
    var /= d;
    const float iv = static_cast<float>(1.0 / std::sqrt(var + eps));
    (*mean)[static_cast<size_t>(r)] = static_cast<float>(mu);
    (*inv)[static_cast<size_t>(r)] = iv;
    float* oi = out.data() + r * d;
    for (int j = 0; j < d; ++j) {
      const float xhat = (xi[j] - static_cast<float>(mu)) * iv;
      oi[j] = xhat * gain.data()[static_cast<size_t>(j)] + bias.data()[static_cast<size_t>(j)];
    }
  }
  Tensor result = Tensor::from(x.shape(), std::move(out));
  if (track_grad({&x, &gain, &bias})) {
    TensorNode* self = result.node();
    attach(result, {x, gain, bias},
           [self, xn = x.node(), gn = gain.node(), bn = bias.node(), mean, inv, rows, d]() {
             for (int64_t r = 0; r < rows; ++r) {
               const float* xi = xn->data.data() + r * d;
               const float* g = self->grad.data() + r * d;
               const float mu = (*mean)[static_cast<size_t>(r)];
               const float iv = (*inv)[static_cast<size_t>(r)];
               if (gn->requires_grad || bn->requires_grad) {
                 if (gn->requires_grad) gn->ensure_grad();
                 if (bn->requires_grad) bn->ensure_grad();
                 for (int j = 0; j < d; ++j) {
                   const float xhat = (xi[j] - mu) * iv;
                   if (gn->requires_grad) gn->grad[static_cast<size_t>(j)] += g[j] * xhat;
                   if (bn->requires_grad) bn->grad[static_cast<size_t>(j)] += g[j];
                 }
               }
               if (xn->requires_grad) {
                 xn->ensure_grad();
                 float* gx = xn->grad.data() + r * d;
                 double s1 = 0.0, s2 = 0.0;
                 for (int j = 0; j < d; ++j) {
                   const float dyg = g[j] * gn->data[static_cast<size_t>(j)];
                   const float xhat = (xi[j] - mu) * iv;
                   s1 += dyg;
                   s2 += static_cast<double>(dyg) * xhat;
                 }
                 const float m1 = static_cast<float>(s1 / d);
                 const float m2 = static_cast<float>(s2 / d);
                 for (int j = 0; j < d; ++j) {
                   const float dyg = g[j] * gn->data[static_cast<size_t>(j)];
                   const float xhat = (xi[j] - mu) * iv;
                   gx[j] += iv * (dyg - m1 - xhat * m2);
                 }
               }
             }
           });
  }
  return result;
}

Tensor dropout(const Tensor& x, float rate, DropoutMode mode, bool training, Rng& rng) {
  if (rate < 0.0f || rate >= 1.0f) {
    throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0f) return x;
  const float keep_scale = 1.0f / (1.0f - rate);
  auto mask = std::make_shared<std::vector<float>>();
  std::vector<float> out(x.data().size());
  if (mode == DropoutMode::Elementwise) {
    mask->resize(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) {
      const float m = rng.next_float() >= rate ? keep_scale : 0.0f;
      (*mask)[i] = m;
      out[i] = x.data()[i] * m;
    }
  } else {
    // One feature mask per sequence, shared across all timesteps (the
    // second-to-last axis).
    if (x.rank() < 2) throw std::invalid_argument("dropout: variational mode needs rank >= 2");
    const int d = x.dim(x.rank() - 1);
    const int t = x.dim(x.rank() - 2);
    const int64_t lead = x.numel() / (static_cast<int64_t>(t) * d);
    mask->resize(static_cast<size_t>(lead) * d);
    for (int64_t b = 0; b < lead; ++b) {
      for (int j = 0; j < d; ++j) {
        (*mask)[static_cast<size_t>(b * d + j)] = rng.next_float() >= rate ? keep_scale : 0.0f;
      }
    }
    for (int64_t b = 0; b < lead; ++b) {
      for (int ti = 0; ti < t; ++ti) {
        const int64_t base = (b * t + ti) * d;
        for (int j = 0; j < d; ++j) {
          out[static_cast<size_t>(base + j)] =
              x.data()[static_cast<size_t>(base + j)] * (*mask)[static_cast<size_t>(b * d + j)];
        }
      }
    }
  }
  Tensor result = Tensor::from(x.shape(), std::move(out));
  if (track_grad({&x})) {
    TensorNode* self = result.node();
    const bool elementwise = mode == DropoutMode::Elementwise;
    const int d = x.dim(x.rank() - 1);
    const int t = elementwise ? 1 : x.dim(x.rank() - 2);
    attach(result, {x}, [self, xn = x.node(), mask, elementwise, d, t]() {
      xn->ensure_grad();
      if (elementwise) {
        for (size_t i = 0; i < self->grad.size(); ++i) xn->grad[i] += self->grad[i] * (*mask)[i];
      } else {
        const int64_t lead = static_cast<int64_t>(self->grad.size()) / (static_cast<int64_t>(t) * d);
        for (int64_t b = 0; b < lead; ++b) {
          for (int ti = 0; ti < t; ++ti) {
            const int64_t base = (b * t + ti) * d;
            for (int j = 0; j < d; ++j) {
              xn->grad[static_cast<size_t>(base + j)] +=
                  self->grad[static_cast<size_t>(base + j)] * (*mask)[static_cast<size_t>(b * d + j)];
            }
          }
        }
      }
    });
  }
  return result;
}

// ---- structural ops ----------------------------------------------------

Tensor embedding_lookup(const Tensor& table, const std::vector<int32_t>& ids) {
  if (table.rank() != 2) {
    throw std::invalid_argument("embedding_lookup: table must be rank 2, got " +
                                shape_str(table.shape()));
  }
  const int v = table.dim(0), d = table.dim(1);
  const int n = static_cast<int>(ids.size());
  std::vector<float> out(static_cast<size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    if (ids[static_cast<size_t>(i)] < 0 || ids[static_cast<size_t>(i)] >= v) {
      throw std::invalid_argument("embedding_lookup: id " +
                                  std::to_string(ids[static_cast<size_t>(i)]) +
                                  " out of range for table " + shape_str(table.shape()));
    }
    const float* row = table.data().data() + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * d;
    std::memcpy(out.data() + static_cast<int64_t>(i) * d, row, sizeof(float) * static_cast<size_t>(d));
  }
  Tensor result = Tensor::from({n, d}, std::move(out));
  if (track_grad({&table})) {
    TensorNode* self = result.node();
    auto ids_copy = std::make_shared<std::vector<int32_t>>(ids);
    attach(result, {table}, [self, tn = table.node(), ids_copy, d]() {
      tn->ensure_grad();
      for (size_t i = 0; i < ids_copy->size(); ++i) {
        const float* g = self->grad.data() + static_cast<int64_t>(i) * d;
        float* dst = tn->grad.data() + static_cast<int64_t>((*ids_copy)[i]) * d;
        for (int j = 0; j < d; ++j) dst[j] += g[j];
      }
    });
  }
  return result;
}

Tensor concat_lastdim(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1) shape_error("concat_lastdim", a.shape(), b.shape());
  for (int i = 0; i + 1 < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) shape_error("concat_lastdim", a.shape(), b.shape());
  }
  const int da = a.dim(a.rank() - 1), db = b.dim(b.rank() - 1);
  const int64_t rows = a.numel() / da;
  Shape out_shape = a.shape();
  out_shape.back() = da + db;
  std::vector<float> out(static_cast<size_t>(rows) * (da + db));
  for (int64_t r = 0; r < rows; ++r) {
    std::memcpy(out.data() + r * (da + db), a.data().data() + r * da,
                sizeof(float) * static_cast<size_t>(da));
    std::memcpy(out.data() + r * (da + db) + da, b.data().data() + r * db,
                sizeof(float) * static_cast<size_t>(db));
  }
  Tensor result = Tensor::from(std::move(out_shape), std::move(out));
  if (track_grad({&a, &b})) {
    TensorNode* self = result.node();
    attach(result, {a, b}, [self, an = a.node(), bn = b.node(), rows, da, db]() {
      for (int64_t r = 0; r < rows; ++r) {
        const float* g = self->grad.data() + r * (da + db);
        if (an->requires_grad) {
          an->ensure_grad();
          for (int j = 0; j < da; ++j) an->grad[static_cast<size_t>(r * da + j)] += g[j];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int j = 0; j < db; ++j) bn->grad[static_cast<size_t>(r * db + j)] += g[da + j];
        }
      }
    });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel()) shape_error("reshape", x.shape(), new_shape);
  Tensor result = Tensor::from(std::move(new_shape), x.data());
  if (track_grad({&x})) {
    TensorNode* self = result.node();
    attach(result, {x}, [self, xn = x.node()]() {
      xn->ensure_grad();
      for (size_t i = 0; i < self->grad.size(); ++i) xn->grad[i] += self->grad[i];
    });
  }
  return result;
}

namespace {
void permute_0213_raw(const float* src, float* dst, int a, int b, int c, int d) {
  for (int i = 0; i < a; ++i) {
    for (int j = 0; j < b; ++j) {
      for (int l = 0; l < c; ++l) {
        const float* s = src + (((static_cast<int64_t>(i) * b + j) * c + l) * d);
        float* t = dst + (((static_cast<int64_t>(i) * c + l) * b + j) * d);
        std::memcpy(t, s, sizeof(float) * static_cast<size_t>(d));
      }
    }
  }
}
}  // namespace

Tensor permute_0213(const Tensor& x) {
  if (x.rank() != 4) {
    throw std::invalid_argument("permute_0213: rank-4 tensor required, got " +
                                shape_str(x.shape()));
  }
  const int a = x.dim(0), b = x.dim(1), c = x.dim(2), d = x.dim(3);
  std::vector<float> out(x.data().size());
  permute_0213_raw(x.data().data(), out.data(), a, b, c, d);
  Tensor result = Tensor::from({a, c, b, d}, std::move(out));
  if (track_grad({&x})) {
    TensorNode* self = result.node();
    attach(result, {x}, [self, xn = x.node(), a, b, c, d]() {
      xn->ensure_grad();
      std::vector<float> tmp(self->grad.size());
      permute_0213_raw(self->grad.data(), tmp.data(), a, c, b, d);
      for (size_t i = 0; i < tmp.size(); ++i) xn->grad[i] += tmp[i];
    });
  }
  return result;
}

Tensor sum_all(const Tensor& x) {
  double total = 0.0;
  for (float v : x.data()) total += v;
  Tensor result = Tensor::from({1}, {static_cast<float>(total)});
  if (track_grad({&x})) {
    TensorNode* self = result.node();
    attach(result, {x}, [self, xn = x.node()]() {
      xn->ensure_grad();
      const float g = self->grad[0];
      for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
    });
  }
  return result;
}

Tensor cross_entropy_label_smoothed(const Tensor& logits, const std::vector<int32_t>& targets,
                                    float epsilon, int32_t pad_id) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("cross_entropy: logits must be [N,V], got " +
                                shape_str(logits.shape()));
  }
  const int n = logits.dim(0), v = logits.dim(1);
  if (v == 0) throw std::invalid_argument("cross_entropy: zero-width vocabulary");
  if (static_cast<int>(targets.size()) != n) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(n) + " rows");
  }
  if (epsilon < 0.0f || epsilon >= 1.0f) {
    throw std::invalid_argument("cross_entropy: epsilon must be in [0,1)");
  }
  auto lse = std::make_shared<std::vector<double>>(static_cast<size_t>(n), 0.0);
  int64_t nonpad = 0;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int32_t t = targets[static_cast<size_t>(i)];
    if (t == pad_id) continue;
    if (t < 0 || t >= v) {
      throw std::invalid_argument("cross_entropy: target " + std::to_string(t) +
                                  " out of range [0," + std::to_string(v) + ")");
    }
    const float* z = logits.data().data() + static_cast<int64_t>(i) * v;
    float mx = z[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, z[j]);
    double sum = 0.0, zsum = 0.0;
    for (int j = 0; j < v; ++j) {
      sum += std::exp(static_cast<double>(z[j]) - mx);
      zsum += z[j];
    }
    const double row_lse = mx + std::log(sum);
    (*lse)[static_cast<size_t>(i)] = row_lse;
    total += row_lse - (1.0 - epsilon) * z[t] - (epsilon / v) * zsum;
    ++nonpad;
  }
  if (nonpad == 0) throw std::invalid_argument("cross_entropy: all positions padded");
  const double loss = total / static_cast<double>(nonpad);
  if (!std::isfinite(loss)) throw std::runtime_error("cross_entropy: non-finite loss");
  Tensor result = Tensor::from({1}, {static_cast<float>(loss)});
  if (track_grad({&logits})) {
    TensorNode* self = result.node();
    auto tgt = std::make_shared<std::vector<int32_t>>(targets);
    attach(result, {logits}, [self, ln = logits.node(), tgt, lse, n, v, epsilon, pad_id,
                              nonpad]() {
      ln->ensure_grad();
      const float gout = self->grad[0];
      const float inv_n = 1.0f / static_cast<float>(nonpad);
      const float uniform = epsilon / static_cast<float>(v);
      for (int i = 0; i < n; ++i) {
        const int32_t t = (*tgt)[static_cast<size_t>(i)];
        if (t == pad_id) continue;
        const float* z = ln->data.data() + static_cast<int64_t>(i) * v;
        float* g = ln->grad.data() + static_cast<int64_t>(i) * v;
        const double row_lse = (*lse)[static_cast<size_t>(i)];
        for (int j = 0; j < v; ++j) {
          const float p = static_cast<float>(std::exp(static_cast<double>(z[j]) - row_lse));
          const float q = uniform + (j == t ? 1.0f - epsilon : 0.0f);
          g[j] += gout * (p - q) * inv_n;
        }
      }
    });
  }
  return result;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), sizeof(float) * a.data().size()) == 0;
}

}  // namespace zsmt
