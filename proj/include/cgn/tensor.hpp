// Dense float64 tensors and a define-by-run reverse-mode tape.
//
// A Tape owns (or borrows) every value produced during one forward pass.
// Each primitive appends its output value; when any input requires a
// gradient it also appends a Record so backward() can replay the chain rule
// in reverse order. Records hold only ids and a few scalar attributes, the
// saved values live in the value table.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <deque>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cgn/errors.hpp"

namespace cgn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ')';
  return os.str();
}

struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;

  Tensor() : data(1, 0.0) {}

  Tensor(Shape s, std::vector<double> values, bool needs_grad = false)
      : shape(std::move(s)), data(std::move(values)), requires_grad(needs_grad) {
    if (data.size() != shape_numel(shape)) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
  }

  static Tensor zeros(Shape s) {
    const std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(v));
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  double item() const {
    if (data.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape));
    return data[0];
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  /// Bitwise value comparison (shape and data); ignores gradient state.
  bool same_values(const Tensor& other) const {
    return shape == other.shape &&
           std::memcmp(data.data(), other.data.data(), data.size() * sizeof(double)) == 0;
  }
};

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  Add,
  AddBias,
  Scale,
  Concat,
  Relu,
  Softplus,
  Mean,
  Softmax,
  CrossEntropy,
  Pick,
  Flatten,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::AddBias: return "add_bias";
    case Op::Scale: return "scale";
    case Op::Concat: return "concat";
    case Op::Relu: return "relu";
    case Op::Softplus: return "softplus";
    case Op::Mean: return "mean";
    case Op::Softmax: return "softmax";
    case Op::CrossEntropy: return "cross_entropy";
    case Op::Pick: return "pick";
    case Op::Flatten: return "flatten";
  }
  return "?";
}

/// One recorded primitive application. `scalar` carries the Scale factor;
/// `param` the axis (Concat, Mean) or index (CrossEntropy target, Pick).
struct Record {
  Op op = Op::Leaf;
  std::size_t inputs[2] = {0, 0};
  std::size_t n_inputs = 0;
  std::size_t output = 0;
  double scalar = 0.0;
  std::size_t param = 0;
};

namespace detail {

inline void require(bool ok, Op op, const std::string& msg) {
  if (!ok) throw DimensionError(std::string(op_name(op)) + ": " + msg);
}

inline void softmax_into(std::span<const double> z, std::span<double> out) {
  double mx = z[0];
  for (double v : z) mx = v > mx ? v : mx;
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
}

inline Tensor forward_kernel(Op op, const Tensor* a, const Tensor* b, double scalar,
                             std::size_t param) {
  const bool binary = op == Op::MatMul || op == Op::Add || op == Op::AddBias || op == Op::Concat;
  require(!binary || b != nullptr, op, "missing second operand");
  switch (op) {
    case Op::MatMul: {
      require(a->rank() == 2, op, "left operand must be a matrix, got " + shape_str(a->shape));
      const std::size_t m = a->shape[0], k = a->shape[1];
      if (b->rank() == 1) {
        require(b->shape[0] == k, op, shape_str(a->shape) + " x " + shape_str(b->shape));
        Tensor out = Tensor::zeros({m});
        for (std::size_t i = 0; i < m; ++i) {
          const double* row = a->data.data() + i * k;
          double acc = 0.0;
          for (std::size_t p = 0; p < k; ++p) acc += row[p] * b->data[p];
          out.data[i] = acc;
        }
        return out;
      }
      require(b->rank() == 2 && b->shape[0] == k, op,
              shape_str(a->shape) + " x " + shape_str(b->shape));
      const std::size_t n = b->shape[1];
      Tensor out = Tensor::zeros({m, n});
      for (std::size_t i = 0; i < m; ++i) {
        double* crow = out.data.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a->data[i * k + p];
          if (av == 0.0) continue;
          const double* brow = b->data.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
      return out;
    }
    case Op::Add: {
      require(a->shape == b->shape, op, shape_str(a->shape) + " + " + shape_str(b->shape));
      Tensor out = *a;
      out.requires_grad = false;
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b->data[i];
      return out;
    }
    case Op::AddBias: {
      require(a->rank() == 2 && b->rank() == 1 && b->shape[0] == a->shape[0], op,
              shape_str(a->shape) + " + bias " + shape_str(b->shape));
      Tensor out = *a;
      out.requires_grad = false;
      const std::size_t cols = a->shape[1];
      for (std::size_t r = 0; r < a->shape[0]; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.data[r * cols + c] += b->data[r];
      return out;
    }
    case Op::Scale: {
      Tensor out = *a;
      out.requires_grad = false;
      for (double& v : out.data) v *= scalar;
      return out;
    }
    case Op::Concat: {
      if (a->rank() == 1 && b->rank() == 1) {
        require(param == 0, op, "axis out of range for vectors");
        std::vector<double> v(a->data);
        v.insert(v.end(), b->data.begin(), b->data.end());
        return Tensor::vector(std::move(v));
      }
      require(a->rank() == 2 && b->rank() == 2 && param < 2, op,
              shape_str(a->shape) + " ++ " + shape_str(b->shape));
      if (param == 0) {
        require(a->shape[1] == b->shape[1], op,
                "column counts differ: " + shape_str(a->shape) + " ++ " + shape_str(b->shape));
        std::vector<double> v(a->data);
        v.insert(v.end(), b->data.begin(), b->data.end());
        return Tensor({a->shape[0] + b->shape[0], a->shape[1]}, std::move(v));
      }
      require(a->shape[0] == b->shape[0], op,
              "row counts differ: " + shape_str(a->shape) + " ++ " + shape_str(b->shape));
      const std::size_t rows = a->shape[0], ca = a->shape[1], cb = b->shape[1];
      Tensor out = Tensor::zeros({rows, ca + cb});
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(a->data.data() + r * ca, ca, out.data.data() + r * (ca + cb));
        std::copy_n(b->data.data() + r * cb, cb, out.data.data() + r * (ca + cb) + ca);
      }
      return out;
    }
    case Op::Relu: {
      Tensor out = *a;
      out.requires_grad = false;
      for (double& v : out.data) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case Op::Softplus: {
      Tensor out = *a;
      out.requires_grad = false;
      for (double& v : out.data) v = (v > 0.0 ? v : 0.0) + std::log1p(std::exp(-std::abs(v)));
      return out;
    }
    case Op::Mean: {
      if (a->rank() == 1) {
        require(param == 0 && a->shape[0] > 0, op, "bad axis or empty vector");
        double s = 0.0;
        for (double v : a->data) s += v;
        return Tensor::scalar(s / static_cast<double>(a->shape[0]));
      }
      require(a->rank() == 2 && param < 2, op, "expects a matrix and axis 0 or 1");
      const std::size_t rows = a->shape[0], cols = a->shape[1];
      if (param == 0) {
        require(rows > 0, op, "mean over empty axis");
        Tensor out = Tensor::zeros({cols});
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) out.data[c] += a->data[r * cols + c];
        for (double& v : out.data) v /= static_cast<double>(rows);
        return out;
      }
      require(cols > 0, op, "mean over empty axis");
      Tensor out = Tensor::zeros({rows});
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += a->data[r * cols + c];
        out.data[r] = s / static_cast<double>(cols);
      }
      return out;
    }
    case Op::Softmax: {
      require(a->rank() == 1 && a->shape[0] > 0, op, "expects a non-empty vector");
      Tensor out = Tensor::zeros(a->shape);
      softmax_into(a->data, out.data);
      return out;
    }
    case Op::CrossEntropy: {
      require(a->rank() == 1 && a->shape[0] > 0, op, "expects a non-empty logit vector");
      require(param < a->shape[0], op, "target class out of range");
      double mx = a->data[0];
      for (double v : a->data) mx = v > mx ? v : mx;
      double sum = 0.0;
      for (double v : a->data) sum += std::exp(v - mx);
      return Tensor::scalar(std::log(sum) + mx - a->data[param]);
    }
    case Op::Pick: {
      require(a->rank() == 1 && param < a->shape[0], op, "index out of range");
      return Tensor::scalar(a->data[param]);
    }
    case Op::Flatten: {
      return Tensor({a->size()}, a->data);
    }
    case Op::Leaf: break;
  }
  throw ContractError("forward_kernel called on a leaf");
}

inline void accumulate_input_grads(const Record& rec, const Tensor& a, const Tensor* b,
                                   const std::vector<double>& gout, std::vector<double>* ga,
                                   std::vector<double>* gb) {
  switch (rec.op) {
    case Op::MatMul: {
      const std::size_t m = a.shape[0], k = a.shape[1];
      if (b->rank() == 1) {
        if (ga)
          for (std::size_t i = 0; i < m; ++i) {
            const double g = gout[i];
            double* row = ga->data() + i * k;
            for (std::size_t p = 0; p < k; ++p) row[p] += g * b->data[p];
          }
        if (gb)
          for (std::size_t i = 0; i < m; ++i) {
            const double g = gout[i];
            const double* row = a.data.data() + i * k;
            for (std::size_t p = 0; p < k; ++p) (*gb)[p] += row[p] * g;
          }
        return;
      }
      const std::size_t n = b->shape[1];
      if (ga)
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = gout.data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b->data.data() + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            (*ga)[i * k + p] += acc;
          }
        }
      if (gb)
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = gout.data() + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = a.data[i * k + p];
            if (av == 0.0) continue;
            double* out = gb->data() + p * n;
            for (std::size_t j = 0; j < n; ++j) out[j] += av * grow[j];
          }
        }
      return;
    }
    case Op::Add:
      if (ga)
        for (std::size_t i = 0; i < gout.size(); ++i) (*ga)[i] += gout[i];
      if (gb)
        for (std::size_t i = 0; i < gout.size(); ++i) (*gb)[i] += gout[i];
      return;
    case Op::AddBias: {
      const std::size_t cols = a.shape[1];
      if (ga)
        for (std::size_t i = 0; i < gout.size(); ++i) (*ga)[i] += gout[i];
      if (gb)
        for (std::size_t r = 0; r < a.shape[0]; ++r)
          for (std::size_t c = 0; c < cols; ++c) (*gb)[r] += gout[r * cols + c];
      return;
    }
    case Op::Scale:
      if (ga)
        for (std::size_t i = 0; i < gout.size(); ++i) (*ga)[i] += rec.scalar * gout[i];
      return;
    case Op::Concat: {
      if (a.rank() == 1 || rec.param == 0) {
        const std::size_t na = a.size();
        if (ga)
          for (std::size_t i = 0; i < na; ++i) (*ga)[i] += gout[i];
        if (gb)
          for (std::size_t i = 0; i < b->size(); ++i) (*gb)[i] += gout[na + i];
        return;
      }
      const std::size_t rows = a.shape[0], ca = a.shape[1], cb = b->shape[1];
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g = gout.data() + r * (ca + cb);
        if (ga)
          for (std::size_t c = 0; c < ca; ++c) (*ga)[r * ca + c] += g[c];
        if (gb)
          for (std::size_t c = 0; c < cb; ++c) (*gb)[r * cb + c] += g[ca + c];
      }
      return;
    }
    case Op::Relu:
      if (ga)
        for (std::size_t i = 0; i < gout.size(); ++i)
          if (a.data[i] > 0.0) (*ga)[i] += gout[i];
      return;
    case Op::Softplus:
      if (ga)
        for (std::size_t i = 0; i < gout.size(); ++i) {
          const double v = a.data[i];
          const double sig = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
          (*ga)[i] += gout[i] * sig;
        }
      return;
    case Op::Mean: {
      if (!ga) return;
      if (a.rank() == 1) {
        const double g = gout[0] / static_cast<double>(a.size());
        for (double& v : *ga) v += g;
        return;
      }
      const std::size_t rows = a.shape[0], cols = a.shape[1];
      if (rec.param == 0) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c)
            (*ga)[r * cols + c] += gout[c] / static_cast<double>(rows);
      } else {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c)
            (*ga)[r * cols + c] += gout[r] / static_cast<double>(cols);
      }
      return;
    }
    case Op::Softmax: {
      if (!ga) return;
      std::vector<double> s(a.size());
      softmax_into(a.data, s);
      double dot = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) dot += gout[i] * s[i];
      for (std::size_t i = 0; i < s.size(); ++i) (*ga)[i] += s[i] * (gout[i] - dot);
      return;
    }
    case Op::CrossEntropy: {
      if (!ga) return;
      std::vector<double> s(a.size());
      softmax_into(a.data, s);
      s[rec.param] -= 1.0;
      for (std::size_t i = 0; i < s.size(); ++i) (*ga)[i] += gout[0] * s[i];
      return;
    }
    case Op::Pick:
      if (ga) (*ga)[rec.param] += gout[0];
      return;
    case Op::Flatten:
      if (ga)
        for (std::size_t i = 0; i < gout.size(); ++i) (*ga)[i] += gout[i];
      return;
    case Op::Leaf: return;
  }
}

}  // namespace detail

class Tape;

/// Handle to a value on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Copies `t` onto the tape; gradient tracking follows t.requires_grad.
  Var leaf(Tensor t) {
    const bool rg = t.requires_grad;
    owned_.push_back(std::move(t));
    return push(&owned_.back(), rg);
  }
  Var leaf(Tensor t, bool requires_grad) {
    t.requires_grad = requires_grad;
    return leaf(std::move(t));
  }
  /// References `t` without copying. `t` must outlive the tape and stay unchanged.
  Var borrow(const Tensor& t, bool requires_grad) { return push(&t, requires_grad); }

  const Tensor& value(std::size_t id) const { return *values_.at(id); }
  const Tensor& value(Var v) const { return value(v.id()); }
  bool requires_grad(std::size_t id) const { return needs_grad_.at(id) != 0; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const Record> records() const noexcept { return records_; }

  Var apply(Op op, Var a, double scalar = 0.0, std::size_t param = 0) {
    return apply_impl(op, a, nullptr, scalar, param);
  }
  Var apply(Op op, Var a, Var b, double scalar = 0.0, std::size_t param = 0) {
    return apply_impl(op, a, &b, scalar, param);
  }

  /// Populates gradients of every tape value with respect to the scalar `out`.
  /// Each call starts from cleared buffers.
  void backward(Var out) {
    if (out.tape() != this) throw ContractError("backward: output is not on this tape");
    const Tensor& ov = value(out.id());
    if (ov.size() != 1)
      throw ContractError("backward: output must be a scalar, got shape " + shape_str(ov.shape));
    if (!requires_grad(out.id()))
      throw ContractError("backward: output was not recorded on the tape");
    grads_.assign(values_.size(), {});
    grads_[out.id()].assign(1, 1.0);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      const Record& rec = *it;
      if (rec.output > out.id() || grads_[rec.output].empty()) continue;
      std::vector<double>* g[2] = {nullptr, nullptr};
      for (std::size_t k = 0; k < rec.n_inputs; ++k) {
        const std::size_t in = rec.inputs[k];
        if (!needs_grad_[in]) continue;
        if (grads_[in].empty()) grads_[in].assign(values_[in]->size(), 0.0);
        g[k] = &grads_[in];
      }
      const Tensor* b = rec.n_inputs > 1 ? values_[rec.inputs[1]] : nullptr;
      detail::accumulate_input_grads(rec, *values_[rec.inputs[0]], b, grads_[rec.output], g[0],
                                     g[1]);
    }
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (needs_grad_[i] && grads_[i].empty()) grads_[i].assign(values_[i]->size(), 0.0);
  }

  /// Gradient buffer of `v` after backward(); zeros when `v` is off every path.
  Tensor gradient(Var v) const {
    const Tensor& val = value(v.id());
    if (v.id() < grads_.size() && !grads_[v.id()].empty()) return Tensor(val.shape, grads_[v.id()]);
    return Tensor::zeros(val.shape);
  }

  /// Every record's inputs precede its output, and records are in output order.
  bool is_topological() const {
    std::size_t last = 0;
    bool first = true;
    for (const Record& rec : records_) {
      if (!first && rec.output <= last) return false;
      for (std::size_t k = 0; k < rec.n_inputs; ++k)
        if (rec.inputs[k] >= rec.output) return false;
      last = rec.output;
      first = false;
    }
    return true;
  }

  /// Recomputes each recorded output from its stored inputs; true when all
  /// agree bitwise with the values produced during the forward pass.
  bool replay() const {
    for (const Record& rec : records_) {
      const Tensor* b = rec.n_inputs > 1 ? values_[rec.inputs[1]] : nullptr;
      Tensor again = detail::forward_kernel(rec.op, values_[rec.inputs[0]], b, rec.scalar, rec.param);
      if (!again.same_values(*values_[rec.output])) return false;
    }
    return true;
  }

 private:
  Var push(const Tensor* t, bool requires_grad) {
    values_.push_back(t);
    needs_grad_.push_back(requires_grad ? 1 : 0);
    return Var(this, values_.size() - 1);
  }

  Var apply_impl(Op op, Var a, const Var* b, double scalar, std::size_t param) {
    if (a.tape() != this || (b && b->tape() != this))
      throw ContractError(std::string(op_name(op)) + ": operand belongs to a different tape");
    const Tensor* bv = b ? values_[b->id()] : nullptr;
    Tensor out = detail::forward_kernel(op, values_[a.id()], bv, scalar, param);
    if (!out.all_finite())
      throw NumericError(std::string(op_name(op)) + " produced a non-finite value");
    const bool rg = needs_grad_[a.id()] || (b && needs_grad_[b->id()]);
    owned_.push_back(std::move(out));
    Var result = push(&owned_.back(), rg);
    if (rg) {
      Record rec;
      rec.op = op;
      rec.inputs[0] = a.id();
      rec.n_inputs = 1;
      if (b) {
        rec.inputs[1] = b->id();
        rec.n_inputs = 2;
      }
      rec.output = result.id();
      rec.scalar = scalar;
      rec.param = param;
      records_.push_back(rec);
    }
    return result;
  }

  std::deque<Tensor> owned_;
  std::vector<const Tensor*> values_;
  std::vector<char> needs_grad_;
  std::vector<std::vector<double>> grads_;
  std::vector<Record> records_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

// Primitive set. All operands must live on the same tape.

/// Matrix-matrix (m x k)(k x n) or matrix-vector (m x k)(k).
inline Var matmul(Var a, Var b) { return a.tape()->apply(Op::MatMul, a, b); }
inline Var add(Var a, Var b) { return a.tape()->apply(Op::Add, a, b); }
/// Adds a length-rows vector to every column of a matrix.
inline Var add_bias(Var m, Var bias) { return m.tape()->apply(Op::AddBias, m, bias); }
inline Var scale(Var a, double c) { return a.tape()->apply(Op::Scale, a, c); }
/// Axis 0 stacks rows (the feature axis for column-per-node matrices).
inline Var concat(Var a, Var b, std::size_t axis = 0) {
  return a.tape()->apply(Op::Concat, a, b, 0.0, axis);
}
inline Var relu(Var a) { return a.tape()->apply(Op::Relu, a); }
/// log(1 + exp(a)), the smooth counterpart of relu.
inline Var softplus(Var a) { return a.tape()->apply(Op::Softplus, a); }
inline Var mean(Var a, std::size_t axis) { return a.tape()->apply(Op::Mean, a, 0.0, axis); }
inline Var softmax(Var a) { return a.tape()->apply(Op::Softmax, a); }
/// Fused softmax + negative log-likelihood of `target`; returns a scalar.
inline Var cross_entropy(Var logits, std::size_t target) {
  return logits.tape()->apply(Op::CrossEntropy, logits, 0.0, target);
}
inline Var pick(Var v, std::size_t index) { return v.tape()->apply(Op::Pick, v, 0.0, index); }
inline Var flatten(Var a) { return a.tape()->apply(Op::Flatten, a); }

/// Plain softmax for callers outside a tape.
inline std::vector<double> softmax_values(std::span<const double> z) {
  std::vector<double> out(z.size());
  if (!z.empty()) detail::softmax_into(z, out);
  return out;
}

}  // namespace cgn
