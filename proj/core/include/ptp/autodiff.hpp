#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ptp/params.hpp"
#include "ptp/tensor.hpp"

namespace ptp {

enum class Op {
  kConstant,
  kParameter,
  kMatmul,
  kAdd,          // same shape, or rhs 1xC broadcast over rows
  kSubtract,     // same shape, or rhs 1xC broadcast over rows
  kMultiply,     // elementwise, same shape
  kScale,        // times attrs.scalar
  kAddScalar,    // plus attrs.scalar
  kRelu,
  kSigmoid,
  kTanh,
  kExp,
  kLog,
  kSum,          // all entries -> 1x1
  kMean,         // all entries -> 1x1
  kRowSum,       // RxC -> Rx1
  kColSum,       // RxC -> 1xC
  kConcatCols,
  kConcatRows,
  kSliceCols,    // [begin, end)
  kSliceRows,    // [begin, end)
  kSegmentSum,   // out[index[k]] += src[k]
  kGatherRows,   // out[k] = src[index[k]]
  kSquaredL2,    // row-wise squared norm, RxC -> Rx1
  kTranspose,
  kReshape,      // row-major reinterpretation
  kClamp,        // clamp to [lo, hi]; gradient zero where clamped
  kMinReduce,    // smallest entry -> 1x1; gradient to the first argmin
  kPairwiseSqDist,   // KxD -> KxK squared distances between rows
  kSpdInverseTrace,  // KxK symmetric L -> tr((L + I)^-1), via Cholesky
};

const char* op_name(Op op);

struct OpAttrs {
  double scalar = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> index = {};
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const NumArray& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run computation graph with reverse-mode differentiation.
class Tape {
 public:
  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(NumArray value);
  // Leaf bound to a stored parameter. Repeated calls return the same node.
  // Frozen parameters (not trainable in the store) become constants.
  Var parameter(const ParamStore& store, const std::string& name);

  // Computes the value, checks it is finite and records the node.
  Var apply(Op op, std::span<const Var> operands, OpAttrs attrs = {});

  // Reverse sweep from a 1x1 loss. Returns the gradient of every trainable
  // parameter node reached; with a store, unreached trainable parameters are
  // filled with zeros.
  GradientMap backward(Var loss);
  GradientMap backward(Var loss, const ParamStore& store);

  // Valid after backward; zeros for nodes the loss does not depend on.
  NumArray gradient(Var v) const;

  const NumArray& value(const Var& v) const { return nodes_[v.id_].value; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::kConstant;
    std::vector<std::size_t> inputs;
    OpAttrs attrs;
    NumArray value;
    NumArray grad;
    NumArray aux;  // cached (L+I)^-1 for kSpdInverseTrace
    bool requires_grad = false;
    std::string param_name;
  };

  void backprop_node(std::size_t id);
  NumArray& grad_of(std::size_t id);

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::size_t>> param_ids_;
  bool backward_done_ = false;
};

// Named wrappers over Tape::apply.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var multiply(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);
Var col_sum(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var segment_sum(Var src, std::vector<std::size_t> index, std::size_t segments);
Var gather_rows(Var src, std::vector<std::size_t> index);
Var squared_l2(Var a);
Var transpose(Var a);
Var reshape(Var a, std::size_t rows, std::size_t cols);
Var clamp(Var a, double lo, double hi);
Var min_reduce(Var a);
Var pairwise_sq_dist(Var a);
Var spd_inverse_trace(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return subtract(a, b); }
inline Var operator*(Var a, Var b) { return multiply(a, b); }

// Square-root-free Cholesky (L D L^T) of a symmetric positive-definite matrix.
// Unit-lower L below the diagonal, D on it. False when a pivot is not positive.
bool ldlt(const NumArray& spd, NumArray& factor);
// Inverse of an SPD matrix from its L D L^T factor.
NumArray ldlt_inverse(const NumArray& factor);

}  // namespace ptp
