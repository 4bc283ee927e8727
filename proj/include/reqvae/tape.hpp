// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Graph is a tape of nodes created in topological order; backward() walks
// it in reverse and accumulates exact gradients. Values are matrices whose
// columns usually index minibatch elements; scalars are 1x1. The scalar type
// is a template parameter: training runs in float, gradient verification in
// double.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "reqvae/errors.hpp"

namespace reqvae {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Handle into a Graph. Only valid for the graph that created it.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Side outputs of a cross-entropy node, for metrics and diagnostics. These
// are plain values, not differentiable outputs.
template <typename S>
struct XentStats {
  std::vector<S> per_target_nll;  // aligned with the targets vector; 0 if masked
  std::vector<int> argmax;        // per column
  long token_count = 0;           // unmasked targets
  long correct = 0;               // argmax equals target
  Mat<S>* probs_out = nullptr;    // set before the call to receive softmax probs
};

template <typename S>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  std::size_t size() const { return nodes_.size(); }

  const Mat<S>& value(Var v) const { return node(v).value; }

  // Zero until backward() has run. Requesting the gradient of a value that
  // does not influence the loss yields zeros, not an error.
  const Mat<S>& grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.size() == 0) {
      const_cast<Node&>(n).grad = Mat<S>::Zero(n.value.rows(), n.value.cols());
    }
    return n.grad;
  }

  // Leaf that does not need a gradient.
  Var input(Mat<S> value) { return push(std::move(value), false, {}); }

  // Leaf that accumulates a gradient (a model parameter).
  Var leaf(Mat<S> value) { return push(std::move(value), true, {}); }

  Var matmul(Var a, Var b) {
    const Mat<S>&A = value(a, "matmul lhs"), &B = value(b, "matmul rhs");
    if (A.cols() != B.rows()) {
      throw DimensionError("matmul: " + shape(A) + " x " + shape(B));
    }
    Var out = push(A * B, needs(a) || needs(b), [a, b](Graph& g, const Node& n) {
      if (g.needs(a)) g.node(a).grad.noalias() += n.grad * g.node(b).value.transpose();
      if (g.needs(b)) g.node(b).grad.noalias() += g.node(a).value.transpose() * n.grad;
    });
    return out;
  }

  Var add(Var a, Var b) {
    const Mat<S>&A = value(a, "add lhs"), &B = value(b, "add rhs");
    if (A.rows() != B.rows() || A.cols() != B.cols()) {
      throw DimensionError("add: " + shape(A) + " vs " + shape(B));
    }
    return push(A + B, needs(a) || needs(b), [a, b](Graph& g, const Node& n) {
      if (g.needs(a)) g.node(a).grad += n.grad;
      if (g.needs(b)) g.node(b).grad += n.grad;
    });
  }

  // m + col, with col broadcast across the columns of m (bias add).
  Var add_col(Var m, Var col) {
    const Mat<S>&M = value(m, "add_col lhs"), &C = value(col, "add_col rhs");
    if (C.cols() != 1 || M.rows() != C.rows()) {
      throw DimensionError("add_col: " + shape(M) + " vs " + shape(C));
    }
    return push(M.colwise() + C.col(0), needs(m) || needs(col),
                [m, col](Graph& g, const Node& n) {
                  if (g.needs(m)) g.node(m).grad += n.grad;
                  if (g.needs(col)) g.node(col).grad += n.grad.rowwise().sum();
                });
  }

  // Hadamard product. a == b is fine; the two accumulations produce 2*a*grad.
  Var cmul(Var a, Var b) {
    const Mat<S>&A = value(a, "cmul lhs"), &B = value(b, "cmul rhs");
    if (A.rows() != B.rows() || A.cols() != B.cols()) {
      throw DimensionError("cmul: " + shape(A) + " vs " + shape(B));
    }
    return push(A.cwiseProduct(B), needs(a) || needs(b),
                [a, b](Graph& g, const Node& n) {
                  if (g.needs(a)) g.node(a).grad += n.grad.cwiseProduct(g.node(b).value);
                  if (g.needs(b)) g.node(b).grad += n.grad.cwiseProduct(g.node(a).value);
                });
  }

  // Scale column j by the constant factors[j]. Used for sequence masking.
  Var scale_cols(Var a, Eigen::Matrix<S, 1, Eigen::Dynamic> factors) {
    const Mat<S>& A = value(a, "scale_cols");
    if (factors.cols() != A.cols()) {
      throw DimensionError("scale_cols: " + shape(A) + " with " +
                           std::to_string(factors.cols()) + " factors");
    }
    auto f = std::make_shared<Eigen::Matrix<S, 1, Eigen::Dynamic>>(std::move(factors));
    Mat<S> out = (A.array().rowwise() * f->array()).matrix();
    return push(std::move(out), needs(a), [a, f](Graph& g, const Node& n) {
      if (g.needs(a)) g.node(a).grad += (n.grad.array().rowwise() * f->array()).matrix();
    });
  }

  Var scale(Var a, S k) {
    return push(value(a, "scale") * k, needs(a), [a, k](Graph& g, const Node& n) {
      if (g.needs(a)) g.node(a).grad += n.grad * k;
    });
  }

  Var add_const(Var a, S k) {
    return push((value(a, "add_const").array() + k).matrix(), needs(a),
                [a](Graph& g, const Node& n) {
                  if (g.needs(a)) g.node(a).grad += n.grad;
                });
  }

  Var sigmoid(Var a) {
    Mat<S> y = value(a, "sigmoid").unaryExpr([](S x) {
      return x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                       : std::exp(x) / (S(1) + std::exp(x));
    });
    return push(std::move(y), needs(a), [a](Graph& g, const Node& n) {
      if (g.needs(a)) {
        g.node(a).grad.array() +=
            n.grad.array() * n.value.array() * (S(1) - n.value.array());
      }
    });
  }

  Var tanh(Var a) {
    Mat<S> y = value(a, "tanh").array().tanh().matrix();
    return push(std::move(y), needs(a), [a](Graph& g, const Node& n) {
      if (g.needs(a)) {
        g.node(a).grad.array() +=
            n.grad.array() * (S(1) - n.value.array().square());
      }
    });
  }

  Var exp(Var a) {
    Mat<S> y = value(a, "exp").array().exp().matrix();
    return push(std::move(y), needs(a), [a](Graph& g, const Node& n) {
      if (g.needs(a)) g.node(a).grad.array() += n.grad.array() * n.value.array();
    });
  }

  // Vertical concatenation [top; bottom].
  Var vcat(Var top, Var bottom) {
    const Mat<S>&T = value(top, "vcat top"), &B = value(bottom, "vcat bottom");
    if (T.cols() != B.cols()) {
      throw DimensionError("vcat: " + shape(T) + " over " + shape(B));
    }
    Mat<S> out(T.rows() + B.rows(), T.cols());
    out.topRows(T.rows()) = T;
    out.bottomRows(B.rows()) = B;
    const Eigen::Index tr = T.rows(), br = B.rows();
    return push(std::move(out), needs(top) || needs(bottom),
                [top, bottom, tr, br](Graph& g, const Node& n) {
                  if (g.needs(top)) g.node(top).grad += n.grad.topRows(tr);
                  if (g.needs(bottom)) g.node(bottom).grad += n.grad.bottomRows(br);
                });
  }

  Var rows(Var a, Eigen::Index first, Eigen::Index count) {
    const Mat<S>& A = value(a, "rows");
    if (first < 0 || count < 0 || first + count > A.rows()) {
      throw DimensionError("rows: [" + std::to_string(first) + ", " +
                           std::to_string(first + count) + ") of " + shape(A));
    }
    return push(A.middleRows(first, count), needs(a),
                [a, first, count](Graph& g, const Node& n) {
                  if (g.needs(a)) g.node(a).grad.middleRows(first, count) += n.grad;
                });
  }

  // Sum of all entries, as a 1x1 matrix.
  Var sum(Var a) {
    Mat<S> out(1, 1);
    out(0, 0) = value(a, "sum").sum();
    return push(std::move(out), needs(a), [a](Graph& g, const Node& n) {
      if (g.needs(a)) g.node(a).grad.array() += n.grad(0, 0);
    });
  }

  // Embedding lookup: table is (V x e); the result column j is row ids[j] of
  // the table, transposed, giving an (e x n) matrix. The backward pass
  // scatter-adds into the table gradient.
  Var lookup(Var table, std::vector<int> ids) {
    const Mat<S>& T = value(table, "lookup table");
    auto idx = std::make_shared<std::vector<int>>(std::move(ids));
    for (int id : *idx) {
      if (id < 0 || id >= T.rows()) {
        throw DimensionError("lookup: index " + std::to_string(id) +
                             " out of range for " + shape(T));
      }
    }
    Mat<S> out(T.cols(), static_cast<Eigen::Index>(idx->size()));
    for (std::size_t j = 0; j < idx->size(); ++j) {
      out.col(static_cast<Eigen::Index>(j)) = T.row((*idx)[j]).transpose();
    }
    return push(std::move(out), needs(table),
                [table, idx](Graph& g, const Node& n) {
                  if (!g.needs(table)) return;
                  Mat<S>& tg = g.node(table).grad;
                  for (std::size_t j = 0; j < idx->size(); ++j) {
                    tg.row((*idx)[j]) +=
                        n.grad.col(static_cast<Eigen::Index>(j)).transpose();
                  }
                });
  }

  // Fused softmax + negative log-likelihood, summed over columns. Target -1
  // marks a masked column that contributes nothing. Softmax uses
  // max-subtraction; probabilities are kept for the backward pass.
  Var xent(Var logits, const std::vector<int>& targets,
           XentStats<S>* stats = nullptr) {
    const Mat<S>& L = value(logits, "xent logits");
    if (static_cast<Eigen::Index>(targets.size()) != L.cols()) {
      throw DimensionError("xent: " + std::to_string(targets.size()) +
                           " targets for " + shape(L));
    }
    const Eigen::Index V = L.rows();
    for (int t : targets) {
      if (t >= V || t < -1) {
        throw DimensionError("xent: target " + std::to_string(t) +
                             " out of range for " + std::to_string(V) +
                             " classes");
      }
    }
    auto probs = std::make_shared<Mat<S>>(V, L.cols());
    auto tgts = std::make_shared<std::vector<int>>(targets);
    S total = 0;
    if (stats != nullptr) {
      stats->per_target_nll.assign(targets.size(), S(0));
      stats->argmax.assign(targets.size(), 0);
    }
    for (Eigen::Index j = 0; j < L.cols(); ++j) {
      S mx = L.col(j).maxCoeff();
      Vec<S> e = (L.col(j).array() - mx).exp().matrix();
      S z = e.sum();
      probs->col(j) = e / z;
      int target = (*tgts)[static_cast<std::size_t>(j)];
      S nll = 0;
      if (target >= 0) {
        nll = std::log(z) + mx - L(target, j);
        total += nll;
      }
      if (stats != nullptr) {
        Eigen::Index am = 0;
        for (Eigen::Index r = 1; r < V; ++r) {
          if (L(r, j) > L(am, j)) am = r;  // first maximum wins
        }
        stats->argmax[static_cast<std::size_t>(j)] = static_cast<int>(am);
        if (target >= 0) {
          stats->per_target_nll[static_cast<std::size_t>(j)] = nll;
          ++stats->token_count;
          if (static_cast<int>(am) == target) ++stats->correct;
        }
      }
    }
    if (stats != nullptr && stats->probs_out != nullptr) {
      *stats->probs_out = *probs;
    }
    Mat<S> out(1, 1);
    out(0, 0) = total;
    return push(std::move(out), needs(logits),
                [logits, probs, tgts](Graph& g, const Node& n) {
                  if (!g.needs(logits)) return;
                  Mat<S>& lg = g.node(logits).grad;
                  const S up = n.grad(0, 0);
                  for (Eigen::Index j = 0; j < probs->cols(); ++j) {
                    int target = (*tgts)[static_cast<std::size_t>(j)];
                    if (target < 0) continue;
                    lg.col(j) += up * probs->col(j);
                    lg(target, j) -= up;
                  }
                });
  }

  // Reverse accumulation from a scalar loss. Gradients of earlier backward
  // calls on the same graph are cleared first.
  void backward(Var loss) {
    const Mat<S>& L = value(loss, "backward loss");
    if (L.rows() != 1 || L.cols() != 1) {
      throw DimensionError("backward: loss must be 1x1, got " + shape(L));
    }
    for (Node& n : nodes_) {
      if (n.requires_grad) n.grad.setZero(n.value.rows(), n.value.cols());
    }
    if (!node(loss).requires_grad) return;
    node(loss).grad(0, 0) = S(1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.back) n.back(*this, n);
    }
  }

 private:
  struct Node {
    Mat<S> value;
    Mat<S> grad;
    bool requires_grad = false;
    std::function<void(Graph&, const Node&)> back;
  };

  static std::string shape(const Mat<S>& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
  }

  Node& node(Var v) {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw DimensionError("invalid graph variable");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& node(Var v) const {
    return const_cast<Graph*>(this)->node(v);
  }

  const Mat<S>& value(Var v, const char* what) {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw DimensionError(std::string(what) + ": invalid graph variable");
    }
    return nodes_[static_cast<std::size_t>(v.id)].value;
  }

  bool needs(Var v) { return node(v).requires_grad; }

  Var push(Mat<S> value, bool requires_grad,
           std::function<void(Graph&, const Node&)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
};

}  // namespace reqvae
