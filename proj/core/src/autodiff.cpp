#include "ptp/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "ptp/errors.hpp"

namespace ptp {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const NumArray& a) {
  return ConstMap(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                  static_cast<Eigen::Index>(a.cols()));
}

MutMap view(NumArray& a) {
  return MutMap(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                static_cast<Eigen::Index>(a.cols()));
}

std::string shape_str(const NumArray& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

[[noreturn]] void dim_error(Op op, const std::string& detail) {
  throw DimensionError(std::string(op_name(op)) + ": " + detail);
}

void expect_arity(Op op, std::size_t got, std::size_t want) {
  if (got != want) {
    dim_error(op, "expected " + std::to_string(want) + " operands, got " + std::to_string(got));
  }
}

bool row_broadcast(const NumArray& a, const NumArray& b) {
  return b.rows() == 1 && b.cols() == a.cols() && a.rows() != 1;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename F>
NumArray map_values(const NumArray& a, F f) {
  NumArray out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

NumArray identity_plus(const NumArray& l, double jitter) {
  NumArray b = l;
  for (std::size_t i = 0; i < b.rows(); ++i) b(i, i) += 1.0 + jitter;
  return b;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kParameter: return "parameter";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSubtract: return "subtract";
    case Op::kMultiply: return "multiply";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kRowSum: return "row_sum";
    case Op::kColSum: return "col_sum";
    case Op::kConcatCols: return "concat_cols";
    case Op::kConcatRows: return "concat_rows";
    case Op::kSliceCols: return "slice_cols";
    case Op::kSliceRows: return "slice_rows";
    case Op::kSegmentSum: return "segment_sum";
    case Op::kGatherRows: return "gather_rows";
    case Op::kSquaredL2: return "squared_l2";
    case Op::kTranspose: return "transpose";
    case Op::kReshape: return "reshape";
    case Op::kClamp: return "clamp";
    case Op::kMinReduce: return "min_reduce";
    case Op::kPairwiseSqDist: return "pairwise_sq_dist";
    case Op::kSpdInverseTrace: return "spd_inverse_trace";
  }
  return "unknown";
}

bool ldlt(const NumArray& spd, NumArray& factor) {
  const std::size_t n = spd.rows();
  factor = NumArray(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = spd(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= factor(j, k) * factor(j, k) * factor(k, k);
    if (!(d > 0.0)) return false;
    factor(j, j) = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = spd(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= factor(i, k) * factor(j, k) * factor(k, k);
      factor(i, j) = s / d;
    }
  }
  return true;
}

NumArray ldlt_inverse(const NumArray& factor) {
  const std::size_t n = factor.rows();
  // Solve L D L^T X = I column by column, L unit lower.
  NumArray inv(n, n);
  std::vector<double> y(n);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = (i == c) ? 1.0 : 0.0;
      for (std::size_t k = 0; k < i; ++k) s -= factor(i, k) * y[k];
      y[i] = s;
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = y[ii] / factor(ii, ii);
      for (std::size_t k = ii + 1; k < n; ++k) s -= factor(k, ii) * inv(k, c);
      inv(ii, c) = s;
    }
  }
  return inv;
}

const NumArray& Var::value() const { return tape_->value(*this); }

Var Tape::constant(NumArray value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite value");
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const ParamStore& store, const std::string& name) {
  for (const auto& [pname, id] : param_ids_) {
    if (pname == name) return Var(this, id);
  }
  Node n;
  n.op = Op::kParameter;
  n.value = store.value(name);
  if (!n.value.all_finite()) throw NumericError("parameter '" + name + "' is not finite");
  n.requires_grad = store.trainable(name);
  n.param_name = name;
  nodes_.push_back(std::move(n));
  param_ids_.emplace_back(name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::apply(Op op, std::span<const Var> operands, OpAttrs attrs) {
  for (const auto& v : operands) {
    if (v.tape_ != this) throw ContractError(std::string(op_name(op)) + ": operand from another tape");
  }
  auto in = [&](std::size_t k) -> const NumArray& { return nodes_[operands[k].id_].value; };
  NumArray out;
  NumArray aux;

  switch (op) {
    case Op::kConstant:
    case Op::kParameter:
      throw ContractError("apply: leaves are created with constant()/parameter()");

    case Op::kMatmul: {
      expect_arity(op, operands.size(), 2);
      const auto& a = in(0);
      const auto& b = in(1);
      if (a.cols() != b.rows()) dim_error(op, shape_str(a) + " * " + shape_str(b));
      out = NumArray(a.rows(), b.cols());
      if (a.cols() > 0) view(out).noalias() = view(a) * view(b);
      break;
    }
    case Op::kAdd:
    case Op::kSubtract: {
      expect_arity(op, operands.size(), 2);
      const auto& a = in(0);
      const auto& b = in(1);
      const double sign = op == Op::kAdd ? 1.0 : -1.0;
      if (a.same_shape(b)) {
        out = a;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += sign * b[i];
      } else if (row_broadcast(a, b)) {
        out = a;
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) += sign * b(0, c);
      } else {
        dim_error(op, shape_str(a) + " vs " + shape_str(b));
      }
      break;
    }
    case Op::kMultiply: {
      expect_arity(op, operands.size(), 2);
      const auto& a = in(0);
      const auto& b = in(1);
      if (!a.same_shape(b)) dim_error(op, shape_str(a) + " vs " + shape_str(b));
      out = a;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
      break;
    }
    case Op::kScale:
      expect_arity(op, operands.size(), 1);
      out = map_values(in(0), [s = attrs.scalar](double x) { return s * x; });
      break;
    case Op::kAddScalar:
      expect_arity(op, operands.size(), 1);
      out = map_values(in(0), [s = attrs.scalar](double x) { return x + s; });
      break;
    case Op::kRelu:
      expect_arity(op, operands.size(), 1);
      out = map_values(in(0), [](double x) { return x > 0.0 ? x : 0.0; });
      break;
    case Op::kSigmoid:
      expect_arity(op, operands.size(), 1);
      out = map_values(in(0), stable_sigmoid);
      break;
    case Op::kTanh:
      expect_arity(op, operands.size(), 1);
      out = map_values(in(0), [](double x) { return std::tanh(x); });
      break;
    case Op::kExp:
      expect_arity(op, operands.size(), 1);
      out = map_values(in(0), [](double x) { return std::exp(x); });
      if (!out.all_finite()) throw NumericError("exp: overflow");
      break;
    case Op::kLog: {
      expect_arity(op, operands.size(), 1);
      for (double x : in(0).data()) {
        if (!(x > 0.0)) throw NumericError("log: non-positive argument " + std::to_string(x));
      }
      out = map_values(in(0), [](double x) { return std::log(x); });
      break;
    }
    case Op::kSum:
    case Op::kMean: {
      expect_arity(op, operands.size(), 1);
      const auto& a = in(0);
      double s = 0.0;
      for (double x : a.data()) s += x;
      if (op == Op::kMean) {
        if (a.size() == 0) dim_error(op, "mean of an empty array");
        s /= static_cast<double>(a.size());
      }
      out = NumArray::scalar(s);
      break;
    }
    case Op::kRowSum: {
      expect_arity(op, operands.size(), 1);
      const auto& a = in(0);
      out = NumArray(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(r, 0) += a(r, c);
      break;
    }
    case Op::kColSum: {
      expect_arity(op, operands.size(), 1);
      const auto& a = in(0);
      out = NumArray(1, a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(0, c) += a(r, c);
      break;
    }
    case Op::kConcatCols: {
      if (operands.empty()) dim_error(op, "no operands");
      const std::size_t rows = in(0).rows();
      std::size_t cols = 0;
      for (std::size_t k = 0; k < operands.size(); ++k) {
        if (in(k).rows() != rows) dim_error(op, "row count mismatch");
        cols += in(k).cols();
      }
      out = NumArray(rows, cols);
      std::size_t off = 0;
      for (std::size_t k = 0; k < operands.size(); ++k) {
        const auto& a = in(k);
        for (std::size_t r = 0; r < rows; ++r)
          std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(r * a.cols()), a.cols(),
                      out.data().begin() + static_cast<std::ptrdiff_t>(r * cols + off));
        off += a.cols();
      }
      break;
    }
    case Op::kConcatRows: {
      if (operands.empty()) dim_error(op, "no operands");
      const std::size_t cols = in(0).cols();
      std::vector<double> data;
      std::size_t rows = 0;
      for (std::size_t k = 0; k < operands.size(); ++k) {
        if (in(k).cols() != cols) dim_error(op, "column count mismatch");
        rows += in(k).rows();
        data.insert(data.end(), in(k).data().begin(), in(k).data().end());
      }
      out = NumArray(rows, cols, std::move(data));
      break;
    }
    case Op::kSliceCols: {
      expect_arity(op, operands.size(), 1);
      const auto& a = in(0);
      if (attrs.begin > attrs.end || attrs.end > a.cols()) dim_error(op, "range out of bounds");
      out = NumArray(a.rows(), attrs.end - attrs.begin);
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = attrs.begin; c < attrs.end; ++c) out(r, c - attrs.begin) = a(r, c);
      break;
    }
    case Op::kSliceRows: {
      expect_arity(op, operands.size(), 1);
      const auto& a = in(0);
      if (attrs.begin > attrs.end || attrs.end > a.rows()) dim_error(op, "range out of bounds");
      out = NumArray(attrs.end - attrs.begin, a.cols(),
                     std::vector<double>(a.data().begin() + static_cast<std::ptrdiff_t>(attrs.begin * a.cols()),
                                         a.data().begin() + static_cast<std::ptrdiff_t>(attrs.end * a.cols())));
      break;
    }
    case Op::kSegmentSum: {
      expect_arity(op, operands.size(), 1);
      const auto& a = in(0);
      if (attrs.index.size() != a.rows()) dim_error(op, "index length != source rows");
      out = NumArray(attrs.rows, a.cols());
      for (std::size_t k = 0; k < a.rows(); ++k) {
        const std::size_t dst = attrs.index[k];
        if (dst >= attrs.rows) dim_error(op, "segment index out of range");
        for (std::size_t c = 0; c < a.cols(); ++c) out(dst, c) += a(k, c);
      }
      break;
    }
    case Op::kGatherRows: {
      expect_arity(op, operands.size(), 1);
      const auto& a = in(0);
      out = NumArray(attrs.index.size(), a.cols());
      for (std::size_t k = 0; k < attrs.index.size(); ++k) {
        const std::size_t src = attrs.index[k];
        if (src >= a.rows()) dim_error(op, "gather index out of range");
        for (std::size_t c = 0; c < a.cols(); ++c) out(k, c) = a(src, c);
      }
      break;
    }
    case Op::kSquaredL2: {
      expect_arity(op, operands.size(), 1);
      const auto& a = in(0);
      out = NumArray(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(r, 0) += a(r, c) * a(r, c);
      break;
    }
    case Op::kTranspose: {
      expect_arity(op, operands.size(), 1);
      const auto& a = in(0);
      out = NumArray(a.cols(), a.rows());
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
      break;
    }
    case Op::kReshape: {
      expect_arity(op, operands.size(), 1);
      const auto& a = in(0);
      if (attrs.rows * attrs.cols != a.size()) dim_error(op, "element count changes");
      out = NumArray(attrs.rows, attrs.cols, a.values());
      break;
    }
    case Op::kClamp:
      expect_arity(op, operands.size(), 1);
      if (attrs.lo > attrs.hi) dim_error(op, "lo > hi");
      out = map_values(in(0), [&](double x) { return std::clamp(x, attrs.lo, attrs.hi); });
      break;
    case Op::kMinReduce: {
      expect_arity(op, operands.size(), 1);
      const auto& a = in(0);
      if (a.size() == 0) dim_error(op, "min of an empty array");
      const auto it = std::min_element(a.data().begin(), a.data().end());
      attrs.index = {static_cast<std::size_t>(it - a.data().begin())};
      out = NumArray::scalar(*it);
      break;
    }
    case Op::kPairwiseSqDist: {
      expect_arity(op, operands.size(), 1);
      const auto& a = in(0);
      const std::size_t k = a.rows();
      out = NumArray(k, k);
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) {
          double d = 0.0;
          for (std::size_t c = 0; c < a.cols(); ++c) {
            const double diff = a(i, c) - a(j, c);
            d += diff * diff;
          }
          out(i, j) = d;
          out(j, i) = d;
        }
      break;
    }
    case Op::kSpdInverseTrace: {
      expect_arity(op, operands.size(), 1);
      const auto& a = in(0);
      if (a.rows() != a.cols()) dim_error(op, "matrix must be square, got " + shape_str(a));
      NumArray factor;
      if (!ldlt(identity_plus(a, 0.0), factor) && !ldlt(identity_plus(a, 1e-9), factor)) {
        throw NumericError("spd_inverse_trace: L + I is not positive definite");
      }
      NumArray inv = ldlt_inverse(factor);
      double tr = 0.0;
      for (std::size_t i = 0; i < inv.rows(); ++i) tr += inv(i, i);
      out = NumArray::scalar(tr);
      aux = std::move(inv);
      break;
    }
  }

  if (!out.all_finite()) throw NumericError(std::string(op_name(op)) + ": non-finite result");

  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.aux = std::move(aux);
  n.op = op;
  n.inputs.reserve(operands.size());
  for (const auto& v : operands) {
    n.inputs.push_back(v.id_);
    n.requires_grad = n.requires_grad || nodes_[v.id_].requires_grad;
  }
  n.attrs = std::move(attrs);
  n.value = std::move(out);
  return Var(this, nodes_.size() - 1);
}

NumArray& Tape::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value)) {
    n.grad = NumArray(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::backprop_node(std::size_t id) {
  // Inputs are appended before their consumers, so references stay valid
  // while accumulating (no push_back happens during backward).
  Node& n = nodes_[id];
  const NumArray& g = n.grad;
  auto needs = [&](std::size_t k) { return nodes_[n.inputs[k]].requires_grad; };
  auto input = [&](std::size_t k) -> const NumArray& { return nodes_[n.inputs[k]].value; };
  auto target = [&](std::size_t k) -> NumArray& { return grad_of(n.inputs[k]); };

  switch (n.op) {
    case Op::kConstant:
    case Op::kParameter:
      break;
    case Op::kMatmul: {
      if (needs(0) && input(0).cols() > 0) view(target(0)).noalias() += view(g) * view(input(1)).transpose();
      if (needs(1) && input(0).cols() > 0) view(target(1)).noalias() += view(input(0)).transpose() * view(g);
      break;
    }
    case Op::kAdd:
    case Op::kSubtract: {
      const double sign = n.op == Op::kAdd ? 1.0 : -1.0;
      if (needs(0)) {
        auto& t = target(0);
        for (std::size_t i = 0; i < g.size(); ++i) t[i] += g[i];
      }
      if (needs(1)) {
        auto& t = target(1);
        if (input(1).same_shape(g)) {
          for (std::size_t i = 0; i < g.size(); ++i) t[i] += sign * g[i];
        } else {
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) t(0, c) += sign * g(r, c);
        }
      }
      break;
    }
    case Op::kMultiply: {
      if (needs(0)) {
        auto& t = target(0);
        const auto& b = input(1);
        for (std::size_t i = 0; i < g.size(); ++i) t[i] += g[i] * b[i];
      }
      if (needs(1)) {
        auto& t = target(1);
        const auto& a = input(0);
        for (std::size_t i = 0; i < g.size(); ++i) t[i] += g[i] * a[i];
      }
      break;
    }
    case Op::kScale: {
      auto& t = target(0);
      for (std::size_t i = 0; i < g.size(); ++i) t[i] += n.attrs.scalar * g[i];
      break;
    }
    case Op::kAddScalar: {
      auto& t = target(0);
      for (std::size_t i = 0; i < g.size(); ++i) t[i] += g[i];
      break;
    }
    case Op::kRelu: {
      auto& t = target(0);
      const auto& a = input(0);
      for (std::size_t i = 0; i < g.size(); ++i) t[i] += a[i] > 0.0 ? g[i] : 0.0;
      break;
    }
    case Op::kSigmoid: {
      auto& t = target(0);
      for (std::size_t i = 0; i < g.size(); ++i) t[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
      break;
    }
    case Op::kTanh: {
      auto& t = target(0);
      for (std::size_t i = 0; i < g.size(); ++i) t[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      break;
    }
    case Op::kExp: {
      auto& t = target(0);
      for (std::size_t i = 0; i < g.size(); ++i) t[i] += g[i] * n.value[i];
      break;
    }
    case Op::kLog: {
      auto& t = target(0);
      const auto& a = input(0);
      for (std::size_t i = 0; i < g.size(); ++i) t[i] += g[i] / a[i];
      break;
    }
    case Op::kSum:
    case Op::kMean: {
      auto& t = target(0);
      const double w = n.op == Op::kMean ? g[0] / static_cast<double>(t.size()) : g[0];
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += w;
      break;
    }
    case Op::kRowSum: {
      auto& t = target(0);
      for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) t(r, c) += g(r, 0);
      break;
    }
    case Op::kColSum: {
      auto& t = target(0);
      for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) t(r, c) += g(0, c);
      break;
    }
    case Op::kConcatCols: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t cols = input(k).cols();
        if (needs(k)) {
          auto& t = target(k);
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < cols; ++c) t(r, c) += g(r, off + c);
        }
        off += cols;
      }
      break;
    }
    case Op::kConcatRows: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t count = input(k).size();
        if (needs(k)) {
          auto& t = target(k);
          for (std::size_t i = 0; i < count; ++i) t[i] += g[off + i];
        }
        off += count;
      }
      break;
    }
    case Op::kSliceCols: {
      auto& t = target(0);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) t(r, c + n.attrs.begin) += g(r, c);
      break;
    }
    case Op::kSliceRows: {
      auto& t = target(0);
      const std::size_t off = n.attrs.begin * t.cols();
      for (std::size_t i = 0; i < g.size(); ++i) t[off + i] += g[i];
      break;
    }
    case Op::kSegmentSum: {
      auto& t = target(0);
      for (std::size_t k = 0; k < t.rows(); ++k)
        for (std::size_t c = 0; c < t.cols(); ++c) t(k, c) += g(n.attrs.index[k], c);
      break;
    }
    case Op::kGatherRows: {
      auto& t = target(0);
      for (std::size_t k = 0; k < n.attrs.index.size(); ++k)
        for (std::size_t c = 0; c < t.cols(); ++c) t(n.attrs.index[k], c) += g(k, c);
      break;
    }
    case Op::kSquaredL2: {
      auto& t = target(0);
      const auto& a = input(0);
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) t(r, c) += 2.0 * a(r, c) * g(r, 0);
      break;
    }
    case Op::kTranspose: {
      auto& t = target(0);
      for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) t(r, c) += g(c, r);
      break;
    }
    case Op::kReshape: {
      auto& t = target(0);
      for (std::size_t i = 0; i < g.size(); ++i) t[i] += g[i];
      break;
    }
    case Op::kClamp: {
      auto& t = target(0);
      const auto& a = input(0);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a[i] >= n.attrs.lo && a[i] <= n.attrs.hi) t[i] += g[i];
      break;
    }
    case Op::kMinReduce: {
      target(0)[n.attrs.index[0]] += g[0];
      break;
    }
    case Op::kPairwiseSqDist: {
      auto& t = target(0);
      const auto& a = input(0);
      const std::size_t k = a.rows();
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          if (i == j) continue;
          const double w = 2.0 * (g(i, j) + g(j, i));
          for (std::size_t c = 0; c < a.cols(); ++c) t(i, c) += w * (a(i, c) - a(j, c));
        }
      break;
    }
    case Op::kSpdInverseTrace: {
      // d tr(B^-1) = -tr(B^-1 dL B^-1)  =>  grad = -B^-2 (B symmetric).
      auto& t = target(0);
      const auto& inv = n.aux;
      view(t).noalias() -= g[0] * (view(inv) * view(inv));
      break;
    }
  }
}

GradientMap Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss from another tape");
  if (nodes_[loss.id_].value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(nodes_[loss.id_].value));
  }
  if (backward_done_) {
    for (auto& n : nodes_) n.grad = NumArray();
  }
  backward_done_ = true;
  grad_of(loss.id_)[0] = 1.0;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0 || n.inputs.empty()) continue;
    backprop_node(id);
  }
  GradientMap out;
  for (const auto& [name, id] : param_ids_) {
    const Node& n = nodes_[id];
    if (!n.requires_grad) continue;
    out[name] = n.grad.same_shape(n.value) && n.grad.size() == n.value.size()
                    ? n.grad
                    : NumArray(n.value.rows(), n.value.cols());
  }
  return out;
}

GradientMap Tape::backward(Var loss, const ParamStore& store) {
  GradientMap out = backward(loss);
  for (const auto& [name, e] : store.entries()) {
    if (store.trainable(name) && !out.count(name)) out[name] = NumArray(e.value.rows(), e.value.cols());
  }
  return out;
}

NumArray Tape::gradient(Var v) const {
  const Node& n = nodes_[v.id_];
  if (n.grad.size() == n.value.size() && n.grad.same_shape(n.value)) return n.grad;
  return NumArray(n.value.rows(), n.value.cols());
}

namespace {

Var unary(Op op, Var a, OpAttrs attrs = {}) {
  const Var operands[] = {a};
  return a.tape()->apply(op, operands, std::move(attrs));
}

Var binary(Op op, Var a, Var b) {
  const Var operands[] = {a, b};
  return a.tape()->apply(op, operands);
}

}  // namespace

Var matmul(Var a, Var b) { return binary(Op::kMatmul, a, b); }
Var add(Var a, Var b) { return binary(Op::kAdd, a, b); }
Var subtract(Var a, Var b) { return binary(Op::kSubtract, a, b); }
Var multiply(Var a, Var b) { return binary(Op::kMultiply, a, b); }
Var scale(Var a, double s) { return unary(Op::kScale, a, OpAttrs{.scalar = s}); }
Var add_scalar(Var a, double s) { return unary(Op::kAddScalar, a, OpAttrs{.scalar = s}); }
Var relu(Var a) { return unary(Op::kRelu, a); }
Var sigmoid(Var a) { return unary(Op::kSigmoid, a); }
Var tanh(Var a) { return unary(Op::kTanh, a); }
Var exp(Var a) { return unary(Op::kExp, a); }
Var log(Var a) { return unary(Op::kLog, a); }
Var sum(Var a) { return unary(Op::kSum, a); }
Var mean(Var a) { return unary(Op::kMean, a); }
Var row_sum(Var a) { return unary(Op::kRowSum, a); }
Var col_sum(Var a) { return unary(Op::kColSum, a); }

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  return parts.front().tape()->apply(Op::kConcatCols, parts);
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  return parts.front().tape()->apply(Op::kConcatRows, parts);
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  return unary(Op::kSliceCols, a, OpAttrs{.begin = begin, .end = end});
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  return unary(Op::kSliceRows, a, OpAttrs{.begin = begin, .end = end});
}

Var segment_sum(Var src, std::vector<std::size_t> index, std::size_t segments) {
  OpAttrs attrs;
  attrs.rows = segments;
  attrs.index = std::move(index);
  return unary(Op::kSegmentSum, src, std::move(attrs));
}

Var gather_rows(Var src, std::vector<std::size_t> index) {
  OpAttrs attrs;
  attrs.index = std::move(index);
  return unary(Op::kGatherRows, src, std::move(attrs));
}

Var squared_l2(Var a) { return unary(Op::kSquaredL2, a); }
Var transpose(Var a) { return unary(Op::kTranspose, a); }
Var reshape(Var a, std::size_t rows, std::size_t cols) {
  return unary(Op::kReshape, a, OpAttrs{.rows = rows, .cols = cols});
}
Var clamp(Var a, double lo, double hi) { return unary(Op::kClamp, a, OpAttrs{.lo = lo, .hi = hi}); }
Var min_reduce(Var a) { return unary(Op::kMinReduce, a); }
Var pairwise_sq_dist(Var a) { return unary(Op::kPairwiseSqDist, a); }
Var spd_inverse_trace(Var a) { return unary(Op::kSpdInverseTrace, a); }

}  // namespace ptp
