#pragma once

// Minimal reverse-mode tape over dense matrices. Ops are fused at the level a
// transformer needs (linear, layer norm, multi-head attention, softmax
// cross-entropy) so a forward pass records a few dozen nodes.

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace genrank::ad {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
  int id = -1;
};

class Graph {
 public:
  /// With record=false no backward closures are kept (inference).
  explicit Graph(bool record = true) : record_(record) {}

  /// Leaf bound to external storage. Gradients are accumulated into
  /// `grad_slot` when it is non-null.
  Var param(const Mat& value, Mat* grad_slot = nullptr);
  Var constant(Mat value);

  const Mat& value(Var v) const;
  bool recording() const { return record_; }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and runs the tape backwards.
  void backward(Var root);

  // Used by op implementations.
  Var push(Mat value, std::function<void(Graph&, const Mat& grad)> backward);
  /// Gradient accumulator of `v`, zero-initialised on first use.
  Mat& grad(Var v);

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;
    Mat grad;
    Mat* grad_slot = nullptr;
    bool has_grad = false;
    std::function<void(Graph&, const Mat&)> backward;
  };
  std::vector<Node> nodes_;
  bool record_;
};

Var add(Graph& g, Var a, Var b);
Var add_constant(Graph& g, Var x, const Mat& c);
Var scale(Graph& g, Var x, double s);
/// x W + b, with b a 1 x out row broadcast over rows.
Var linear(Graph& g, Var x, Var w, Var b);
Var layer_norm(Graph& g, Var x, Var gamma, Var beta, double eps = 1e-5);
Var relu(Graph& g, Var x);
Var tanh(Graph& g, Var x);
/// Rows of `table` selected by ids.
Var gather_rows(Graph& g, Var table, std::span<const int> ids);
Var row(Graph& g, Var x, int index);
/// Multi-head scaled dot-product attention over already projected q, k, v.
/// With `causal`, query i only sees keys 0..i (requires equal lengths).
Var attention(Graph& g, Var q, Var k, Var v, int heads, bool causal);
/// Sum over rows of -log softmax(logits)[row, target]. Returns 1x1.
Var softmax_cross_entropy(Graph& g, Var logits, std::span<const int> targets);

/// Row-wise softmax, numerically stabilised.
Mat softmax_rows(const Mat& logits);
Mat sinusoidal_positions(int length, int dim);

}  // namespace genrank::ad
