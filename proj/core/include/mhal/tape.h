#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mhal/tensor.h"

namespace mhal {

class Tape;

// A named trainable tensor. Gradients accumulate additively into
// `value.grad` across every backward() run on tapes that reference the
// parameter; the optimizer owns zeroing them between updates.
struct Parameter {
  std::string name;
  Tensor value;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    value.ensure_grad();
  }
};

// Handle to one recorded value on a Tape. Cheap to copy; valid only for the
// lifetime of the tape that produced it.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
};

// Define-by-run record of a computation. Nodes are appended in execution
// order, which is by construction a topological order; backward() replays
// them once in reverse. A tape is single-shot: build, backward, discard.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // --- leaves -------------------------------------------------------------
  Var input(Tensor t);                 // constant, receives no gradient
  Var scalar(double v) { return input(Tensor::scalar(v)); }
  // Trainable leaf holding the whole tensor. Repeated calls for the same
  // Parameter on one tape share a single node.
  Var parameter(Parameter& p);
  // Gathers table rows [ids.size() x cols]; backward scatter-adds into the
  // table's grad, touching only the gathered rows.
  Var lookup(Parameter& table, const std::vector<int>& row_ids);

  // --- structure ----------------------------------------------------------
  Var transpose(Var a);                          // [m x n] -> [n x m]
  Var concat(const std::vector<Var>& parts);     // rank-1 concatenation
  Var stack_rows(const std::vector<Var>& rows);  // k vectors [n] -> [k x n]
  Var stack_cols(const std::vector<Var>& cols);  // k vectors [m] -> [m x k]
  Var hconcat(Var a, Var b);                     // [m x p],[m x q] -> [m x (p+q)]
  Var row(Var a, int i);                         // [m x n] -> [n]
  Var column(Var a, int j);                      // [m x n] -> [m]
  Var rows_range(Var a, int first, int count);   // [m x n] -> [count x n]
  Var gather(Var a, std::vector<int> ids);       // rank-1 index select

  // --- arithmetic ---------------------------------------------------------
  // matmul accepts [m x k]*[k x n] -> [m x n], [m x k]*[k] -> [m] and
  // [k]*[k x n] -> [n]; a shape mismatch reports both operand shapes.
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);          // same shape
  Var add_rowwise(Var m, Var v);  // [r x c] + [c] broadcast over rows
  Var sub(Var a, Var b);
  Var cmult(Var a, Var b);        // elementwise product
  Var colwise_div(Var m, Var v);  // out[i][j] = m[i][j] / v[j]
  Var scale(Var a, double k);
  Var add_const(Var a, double c);
  Var square(Var a);

  // --- nonlinearities -----------------------------------------------------
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  // Max-subtracted softmax. axis -1 means the last axis; rank-1 tensors
  // normalize over their single axis, rank-2 over rows (axis 1) or columns
  // (axis 0).
  Var softmax(Var a, int axis = -1);

  // --- reductions ---------------------------------------------------------
  Var reduce_sum(Var a);           // all entries -> scalar
  Var reduce_mean(Var a);          // all entries -> scalar
  Var reduce_sum(Var a, int axis); // rank-2, axis 0 -> [cols], axis 1 -> [rows]
  Var reduce_mean(Var a, int axis);
  Var reduce_max(Var a);           // all entries -> scalar; grad to first argmax

  // --- stochastic ---------------------------------------------------------
  // Inverted dropout; rate 0 is the identity and draws nothing from rng.
  Var dropout(Var a, double rate, Rng& rng);

  // --- fused compound ops ---------------------------------------------------
  // Unidirectional LSTM over the rows of x [N x in]; returns every hidden
  // state as [N x hidden]. Gate blocks in wx/wh/b are ordered [i f o g].
  // With reversed=true rows are processed right to left, so the state at
  // row i summarizes rows i..N-1.
  Var lstm_sequence(Var x, Var wx, Var wh, Var b, bool reversed);

  // Cosine similarity of two equal-length vectors, with norms floored at
  // `norm_floor` to keep zero vectors from dividing by zero.
  Var cosine_similarity(Var a, Var b, double norm_floor = 1e-12);

  // Cross entropy of softmax(scores) against the smoothed one-hot target
  // (1-eps)*onehot(gold) + eps/K, computed through log-sum-exp.
  Var smoothed_cross_entropy(Var scores, int gold, double eps);
  // Row-wise sum of the same; rows whose target id is negative are skipped.
  Var smoothed_cross_entropy_rows(Var scores, const std::vector<int>& golds, double eps);

  // --- execution ------------------------------------------------------------
  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse, accumulating
  // into every node's grad and additively into referenced Parameter grads.
  // Requires a scalar loss; runs at most once per tape.
  void backward(Var loss);

  // References stay valid for the tape's lifetime (nodes are never moved).
  const Tensor& value(Var v) const;
  const std::vector<double>& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::function<void(Tape&)> backprop;  // null for constants
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
  bool backward_done_ = false;

  Var emplace(Tensor value, std::function<void(Tape&)> backprop);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  void check_mine(Var v, const char* op) const;
  Var unary_ew(Var a, double (*fwd)(double), double (*dfdy)(double x, double y));
};

// Expression-style free functions; all operands must live on one tape.
inline Var matmul(Var a, Var b) { return a.tape->matmul(a, b); }
inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(double k, Var a) { return a.tape->scale(a, k); }
inline Var tanh(Var a) { return a.tape->tanh(a); }
inline Var sigmoid(Var a) { return a.tape->sigmoid(a); }
inline Var exp(Var a) { return a.tape->exp(a); }
inline Var softmax(Var a, int axis = -1) { return a.tape->softmax(a, axis); }
inline Var cmult(Var a, Var b) { return a.tape->cmult(a, b); }

}  // namespace mhal
