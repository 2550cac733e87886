#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qamatch/rng.hpp"
#include "qamatch/tensor.hpp"

namespace qamatch::nn {

/// A named learnable tensor with a persistent gradient buffer.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

  void zero_grad() { grad.fill(0.0); }
};

/// Ordered parameter registry. Names are unique; references stay valid for
/// the life of the set (deque storage).
class ParameterSet {
 public:
  Parameter& add(const std::string& name, std::vector<std::size_t> shape) {
    if (index_.count(name)) {
      throw std::invalid_argument("duplicate parameter name: " + name);
    }
    params_.emplace_back(name, Tensor::zeros(std::move(shape)));
    index_[name] = params_.size() - 1;
    return params_.back();
  }

  Parameter& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return params_[it->second];
  }
  const Parameter& at(const std::string& name) const {
    return const_cast<ParameterSet*>(this)->at(name);
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform(-k, k) with k = 1/sqrt(fan_in); the default weight init.
inline void init_uniform_fan_in(Parameter& p, std::size_t fan_in, Rng& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : p.value.data) x = rng.uniform(-k, k);
}

/// Handle to a node on a Graph tape.
struct Value {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

/// Reverse-mode tape over a fixed set of primitive ops. One Graph records
/// one forward pass; backward() walks the tape once in reverse. Gradients
/// for Parameter leaves accumulate directly into Parameter::grad, so batch
/// averaging is a matter of seeding backward() with 1/batch.
class Graph {
 public:
  explicit Graph(bool training = false, Rng* rng = nullptr)
      : training_(training), rng_(rng) {}

  bool training() const { return training_; }

  Value input(Tensor t) { return make_owned(std::move(t), nullptr); }

  Value zeros(std::size_t n) { return input(Tensor::zeros({n})); }

  Value param(Parameter& p) {
    auto it = param_cache_.find(&p);
    if (it != param_cache_.end()) return it->second;
    nodes_.push_back(Node{});
    Node& n = nodes_.back();
    n.val = &p.value;
    n.grad = &p.grad;
    Value v{static_cast<std::uint32_t>(nodes_.size() - 1)};
    param_cache_.emplace(&p, v);
    return v;
  }

  // ---- primitive ops -------------------------------------------------

  /// [m,k]x[k,n] -> [m,n], or [m,k]x[k] -> [m].
  Value matmul(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.rank() != 2 || B.rank() < 1 || B.rank() > 2 || A.cols() != B.rows()) {
      shape_error("matmul", A, B);
    }
    const std::size_t m = A.rows(), k = A.cols();
    if (B.rank() == 1) {
      Tensor out({m});
      for (std::size_t i = 0; i < m; ++i) {
        const double* wrow = A.data.data() + i * k;
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += wrow[j] * B.data[j];
        out[i] = acc;
      }
      return make_owned(std::move(out), [a, b](Graph& g, Value out_v) {
        const Tensor& A2 = g.val(a);
        const Tensor& x = g.val(b);
        const Tensor& dy = *g.node(out_v).grad;
        Tensor& da = *g.node(a).grad;
        Tensor& db = *g.node(b).grad;
        const std::size_t m2 = A2.rows(), k2 = A2.cols();
        for (std::size_t i = 0; i < m2; ++i) {
          const double d = dy[i];
          double* darow = da.data.data() + i * k2;
          const double* wrow = A2.data.data() + i * k2;
          for (std::size_t j = 0; j < k2; ++j) {
            darow[j] += d * x.data[j];
            db.data[j] += wrow[j] * d;
          }
        }
      });
    }
    const std::size_t n2 = B.cols();
    Tensor out({m, n2});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double aij = A.at(i, j);
        for (std::size_t c = 0; c < n2; ++c) out.at(i, c) += aij * B.at(j, c);
      }
    }
    return make_owned(std::move(out), [a, b](Graph& g, Value out_v) {
      const Tensor& A2 = g.val(a);
      const Tensor& B2 = g.val(b);
      const Tensor& dy = *g.node(out_v).grad;
      Tensor& da = *g.node(a).grad;
      Tensor& db = *g.node(b).grad;
      const std::size_t m2 = A2.rows(), k2 = A2.cols(), n = B2.cols();
      for (std::size_t i = 0; i < m2; ++i) {
        for (std::size_t j = 0; j < k2; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < n; ++c) acc += dy.at(i, c) * B2.at(j, c);
          da.at(i, j) += acc;
        }
      }
      for (std::size_t j = 0; j < k2; ++j) {
        for (std::size_t c = 0; c < n; ++c) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m2; ++i) acc += A2.at(i, j) * dy.at(i, c);
          db.at(j, c) += acc;
        }
      }
    });
  }

  Value add(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) shape_error("add", A, B);
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
    return make_owned(std::move(out), [a, b](Graph& g, Value out_v) {
      const Tensor& dy = *g.node(out_v).grad;
      Tensor& da = *g.node(a).grad;
      Tensor& db = *g.node(b).grad;
      for (std::size_t i = 0; i < dy.size(); ++i) {
        da.data[i] += dy[i];
        db.data[i] += dy[i];
      }
    });
  }

  /// Elementwise (Hadamard) product.
  Value mul(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) shape_error("mul", A, B);
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    return make_owned(std::move(out), [a, b](Graph& g, Value out_v) {
      const Tensor& dy = *g.node(out_v).grad;
      const Tensor& A2 = g.val(a);
      const Tensor& B2 = g.val(b);
      Tensor& da = *g.node(a).grad;
      Tensor& db = *g.node(b).grad;
      for (std::size_t i = 0; i < dy.size(); ++i) {
        da.data[i] += dy[i] * B2[i];
        db.data[i] += dy[i] * A2[i];
      }
    });
  }

  Value scale(Value a, double k) {
    Tensor out = val(a);
    for (double& x : out.data) x *= k;
    return make_owned(std::move(out), [a, k](Graph& g, Value out_v) {
      const Tensor& dy = *g.node(out_v).grad;
      Tensor& da = *g.node(a).grad;
      for (std::size_t i = 0; i < dy.size(); ++i) da.data[i] += k * dy[i];
    });
  }

  Value concat(std::span<const Value> parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    std::size_t total = 0;
    for (Value p : parts) {
      if (val(p).rank() != 1) {
        throw std::invalid_argument("concat: rank-1 inputs required, got " +
                                    val(p).shape_str());
      }
      total += val(p).size();
    }
    Tensor out({total});
    std::size_t off = 0;
    for (Value p : parts) {
      const Tensor& t = val(p);
      std::copy(t.data.begin(), t.data.end(), out.data.begin() + off);
      off += t.size();
    }
    std::vector<Value> ids(parts.begin(), parts.end());
    return make_owned(std::move(out), [ids](Graph& g, Value out_v) {
      const Tensor& dy = *g.node(out_v).grad;
      std::size_t off2 = 0;
      for (Value p : ids) {
        Tensor& dp = *g.node(p).grad;
        for (std::size_t i = 0; i < dp.size(); ++i) dp.data[i] += dy[off2 + i];
        off2 += dp.size();
      }
    });
  }

  Value concat(Value a, Value b) {
    const Value parts[] = {a, b};
    return concat(std::span<const Value>(parts, 2));
  }

  Value slice(Value x, std::size_t offset, std::size_t len) {
    const Tensor& X = val(x);
    if (X.rank() != 1 || offset + len > X.size()) {
      throw std::invalid_argument("slice: [" + std::to_string(offset) + ", " +
                                  std::to_string(offset + len) +
                                  ") out of range for " + X.shape_str());
    }
    Tensor out({len});
    std::copy(X.data.begin() + offset, X.data.begin() + offset + len,
              out.data.begin());
    return make_owned(std::move(out), [x, offset, len](Graph& g, Value out_v) {
      const Tensor& dy = *g.node(out_v).grad;
      Tensor& dx = *g.node(x).grad;
      for (std::size_t i = 0; i < len; ++i) dx.data[offset + i] += dy[i];
    });
  }

  Value tanh(Value x) {
    Tensor out = val(x);
    for (double& v : out.data) v = std::tanh(v);
    return make_owned(std::move(out), [x](Graph& g, Value out_v) {
      const Tensor& y = g.val(out_v);
      const Tensor& dy = *g.node(out_v).grad;
      Tensor& dx = *g.node(x).grad;
      for (std::size_t i = 0; i < y.size(); ++i) {
        dx.data[i] += (1.0 - y[i] * y[i]) * dy[i];
      }
    });
  }

  Value sigmoid(Value x) {
    Tensor out = val(x);
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return make_owned(std::move(out), [x](Graph& g, Value out_v) {
      const Tensor& y = g.val(out_v);
      const Tensor& dy = *g.node(out_v).grad;
      Tensor& dx = *g.node(x).grad;
      for (std::size_t i = 0; i < y.size(); ++i) {
        dx.data[i] += y[i] * (1.0 - y[i]) * dy[i];
      }
    });
  }

  /// Vector softmax, max-shifted for stability.
  Value softmax(Value x) {
    const Tensor& X = val(x);
    if (X.rank() != 1 || X.size() == 0) {
      throw std::invalid_argument("softmax: non-empty vector required, got " +
                                  X.shape_str());
    }
    Tensor out = X;
    double mx = out[0];
    for (double v : out.data) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : out.data) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : out.data) v /= sum;
    return make_owned(std::move(out), [x](Graph& g, Value out_v) {
      const Tensor& y = g.val(out_v);
      const Tensor& dy = *g.node(out_v).grad;
      Tensor& dx = *g.node(x).grad;
      double dot = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) dot += dy[i] * y[i];
      for (std::size_t i = 0; i < y.size(); ++i) {
        dx.data[i] += y[i] * (dy[i] - dot);
      }
    });
  }

  /// Inner product of two equal-length vectors; returns a scalar.
  Value dot(Value a, Value b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.rank() != 1 || !A.same_shape(B)) shape_error("dot", A, B);
    double acc = 0.0;
    for (std::size_t i = 0; i < A.size(); ++i) acc += A[i] * B[i];
    return make_owned(Tensor::scalar(acc), [a, b](Graph& g, Value out_v) {
      const double d = (*g.node(out_v).grad)[0];
      const Tensor& A2 = g.val(a);
      const Tensor& B2 = g.val(b);
      Tensor& da = *g.node(a).grad;
      Tensor& db = *g.node(b).grad;
      for (std::size_t i = 0; i < A2.size(); ++i) {
        da.data[i] += d * B2[i];
        db.data[i] += d * A2[i];
      }
    });
  }

  /// sum_k weights[k] * items[k]; the attention-pooling combiner.
  Value weighted_sum(Value weights, std::span<const Value> items) {
    const Tensor& W = val(weights);
    if (W.rank() != 1 || W.size() != items.size()) {
      throw std::invalid_argument(
          "weighted_sum: " + std::to_string(items.size()) + " items vs weights " +
          W.shape_str());
    }
    const std::size_t n = val(items[0]).size();
    Tensor out({n});
    for (std::size_t k = 0; k < items.size(); ++k) {
      const Tensor& item = val(items[k]);
      if (item.rank() != 1 || item.size() != n) shape_error("weighted_sum", val(items[0]), item);
      const double w = W[k];
      for (std::size_t i = 0; i < n; ++i) out[i] += w * item[i];
    }
    std::vector<Value> ids(items.begin(), items.end());
    return make_owned(std::move(out), [weights, ids](Graph& g, Value out_v) {
      const Tensor& dy = *g.node(out_v).grad;
      const Tensor& W2 = g.val(weights);
      Tensor& dw = *g.node(weights).grad;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const Tensor& item = g.val(ids[k]);
        Tensor& ditem = *g.node(ids[k]).grad;
        double acc = 0.0;
        const double w = W2[k];
        for (std::size_t i = 0; i < dy.size(); ++i) {
          acc += dy[i] * item[i];
          ditem.data[i] += w * dy[i];
        }
        dw.data[k] += acc;
      }
    });
  }

  /// Inverted dropout: in training mode each component is zeroed with
  /// probability p and survivors are scaled by 1/(1-p); in eval mode the
  /// input passes through untouched.
  Value dropout(Value x, double p) {
    if (p < 0.0 || p >= 1.0) {
      throw std::invalid_argument("dropout: p must be in [0, 1), got " +
                                  std::to_string(p));
    }
    if (!training_ || p == 0.0) return x;
    if (!rng_) throw std::logic_error("dropout: training graph has no rng");
    const Tensor& X = val(x);
    std::vector<double> mask(X.size());
    const double keep_scale = 1.0 / (1.0 - p);
    Tensor out = X;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      mask[i] = rng_->uniform01() < p ? 0.0 : keep_scale;
      out[i] *= mask[i];
    }
    return make_owned(std::move(out), [x, mask](Graph& g, Value out_v) {
      const Tensor& dy = *g.node(out_v).grad;
      Tensor& dx = *g.node(x).grad;
      for (std::size_t i = 0; i < dy.size(); ++i) dx.data[i] += mask[i] * dy[i];
    });
  }

  /// -log softmax(logits)[target], computed via a stable log-sum-exp.
  Value cross_entropy(Value logits, int target) {
    const Tensor& Z = val(logits);
    if (Z.rank() != 1 || Z.size() < 2 || target < 0 ||
        target >= static_cast<int>(Z.size())) {
      throw std::invalid_argument("cross_entropy: logits " + Z.shape_str() +
                                  ", class " + std::to_string(target));
    }
    double mx = Z[0];
    for (double v : Z.data) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : Z.data) sum += std::exp(v - mx);
    const double loss = mx + std::log(sum) - Z[static_cast<std::size_t>(target)];
    return make_owned(Tensor::scalar(loss), [logits, target](Graph& g, Value out_v) {
      const double d = (*g.node(out_v).grad)[0];
      const Tensor& Z2 = g.val(logits);
      Tensor& dz = *g.node(logits).grad;
      double mx2 = Z2[0];
      for (double v : Z2.data) mx2 = std::max(mx2, v);
      double sum2 = 0.0;
      for (double v : Z2.data) sum2 += std::exp(v - mx2);
      for (std::size_t i = 0; i < Z2.size(); ++i) {
        const double soft = std::exp(Z2[i] - mx2) / sum2;
        dz.data[i] += d * (soft - (static_cast<int>(i) == target ? 1.0 : 0.0));
      }
    });
  }

  // ---- accessors / backward ------------------------------------------

  const Tensor& value(Value v) const { return *nodes_.at(v.id).val; }

  const Tensor& grad_of(Value v) const {
    const Node& n = nodes_.at(v.id);
    if (!n.grad) throw std::logic_error("grad_of: backward has not run");
    return *n.grad;
  }
  std::size_t size() const { return nodes_.size(); }

  /// Walks the tape in reverse from `loss` (a scalar), accumulating
  /// d(loss)/d(node) everywhere; Parameter gradients land in their
  /// persistent buffers. `seed` scales the whole pass (use 1/batch for
  /// mean-reduced batch losses). Single use per graph.
  void backward(Value loss, double seed = 1.0) {
    if (val(loss).size() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  val(loss).shape_str());
    }
    if (backward_done_) throw std::logic_error("backward: tape already consumed");
    backward_done_ = true;
    for (std::uint32_t i = 0; i <= loss.id; ++i) {
      Node& n = nodes_[i];
      if (!n.grad) {
        n.owned_grad = Tensor::zeros(n.val->shape);
        n.grad = &n.owned_grad;
      }
    }
    node(loss).grad->data[0] += seed;
    for (std::uint32_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.back) n.back(*this, Value{i});
    }
  }

 private:
  using BackFn = std::function<void(Graph&, Value)>;

  struct Node {
    Tensor owned_val;
    Tensor owned_grad;
    const Tensor* val = nullptr;
    Tensor* grad = nullptr;
    BackFn back;
  };

  // Gradient buffers materialize in backward(); eval-only graphs never pay
  // for them.
  Value make_owned(Tensor t, BackFn back) {
    nodes_.push_back(Node{});
    Node& n = nodes_.back();
    n.owned_val = std::move(t);
    n.val = &n.owned_val;
    n.back = std::move(back);
    return Value{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Node& node(Value v) { return nodes_.at(v.id); }
  const Tensor& val(Value v) const { return *nodes_.at(v.id).val; }

  [[noreturn]] static void shape_error(const char* op, const Tensor& a,
                                       const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                                a.shape_str() + " and " + b.shape_str());
  }

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, Value> param_cache_;
  bool training_;
  Rng* rng_;
  bool backward_done_ = false;
};

}  // namespace qamatch::nn
