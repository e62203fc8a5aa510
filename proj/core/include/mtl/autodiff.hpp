#pragma once

// Reverse-mode automatic differentiation over small dense matrices.
//
// A Tape records every operation of one forward pass. Calling backward() on a
// 1x1 result walks the tape in reverse and accumulates gradients into the
// Parameter objects that were bound with Tape::parameter(). Tapes are cheap
// and meant to be built per step and discarded.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtl/matrix.hpp"
#include "mtl/random.hpp"

namespace mtl {

// A named trainable tensor with its accumulated gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix value)
      : name(std::move(name)), value(std::move(value)),
        grad(this->value.rows(), this->value.cols()) {}

  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

namespace ad {

enum class Precision { kDouble, kSingle };

Precision parse_precision(std::string_view text);
const char* to_string(Precision precision);

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;
  Tape& tape() const { return *tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  explicit Tape(bool record_gradients = true, Precision precision = Precision::kDouble);

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  Precision precision() const { return precision_; }

  // Dropout is active only after this call; without it dropout() is identity.
  void enable_dropout(std::uint64_t seed) { dropout_rng_.emplace(seed); }
  Rng* dropout_rng() { return dropout_rng_ ? &*dropout_rng_ : nullptr; }

  Var constant(Matrix value);
  // A leaf whose gradient can be read back with grad() after backward().
  Var input(Matrix value);
  // Binds a parameter; repeated binds of the same parameter share one node.
  Var parameter(Parameter& param);

  // Seeds d(loss)/d(loss) = 1 and accumulates into bound parameters' grad.
  void backward(Var loss);

  // Gradient of the last backward() w.r.t. node v; zero matrix if unreached.
  Matrix grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

  // Low-level node construction used by the op library.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;
  Var push(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var push(Matrix value, std::span<const Var> inputs, BackwardFn backward);
  const Matrix& value_of(std::size_t index) const { return nodes_[index].current(); }
  const Matrix& grad_of(std::size_t index) const { return nodes_[index].grad; }
  bool needs_grad(std::size_t index) const { return nodes_[index].needs_grad; }
  // Gradient buffer of an input node, allocated on first use.
  Matrix& grad_buffer(std::size_t index);

 private:
  struct Node {
    Matrix value;
    const Matrix* borrowed = nullptr;  // parameter storage, read in place
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;

    const Matrix& current() const { return borrowed != nullptr ? *borrowed : value; }
  };

  Var make_leaf(Matrix value, bool needs_grad, Parameter* param);
  void round_if_single(Matrix& m) const;

  bool recording_;
  Precision precision_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
  std::optional<Rng> dropout_rng_;
};

// ---- operations -----------------------------------------------------------

Var matmul(Var a, Var b);                 // [m,k] x [k,n]
Var matmul_transposed(Var a, Var b);      // [m,k] x [n,k]^T
Var add(Var a, Var b);                    // same shape
Var add_row(Var a, Var row);              // [m,n] + [1,n] broadcast
Var scale(Var a, double factor);
Var mul_scalar(Var a, Var factor);        // factor is 1x1
Var relu(Var a);
Var gelu(Var a);                          // exact erf form
Var layer_norm(Var x, Var gamma, Var beta, double eps);
Var softmax_rows(Var x);
// Row softmax where columns with key_mask[j] == 0 get probability exactly 0.
Var masked_softmax_rows(Var scores, std::span<const int> key_mask);
Var dropout(Var a, double rate);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(Var table, std::span<const int> ids);
Var element(Var a, std::size_t r, std::size_t c);
// -log softmax(logits)[label] for a 1 x k row of logits.
Var cross_entropy(Var logits, int label);
Var mean(std::span<const Var> scalars);

}  // namespace ad
}  // namespace mtl
