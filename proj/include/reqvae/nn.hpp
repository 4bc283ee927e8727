// Neural-network building blocks on top of the autodiff tape: LSTM cell and
// sequence, dense layers, Adam, gradient clipping, and a finite-difference
// gradient checker.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "reqvae/errors.hpp"
#include "reqvae/rng.hpp"
#include "reqvae/tape.hpp"

namespace reqvae {

// Named reference to a parameter matrix, the unit of optimizer state,
// checkpointing, and gradient checking.
template <typename S>
struct ParamRef {
  std::string name;
  Mat<S>* value = nullptr;
};

// Fill in column-major storage order so initialization is reproducible for a
// given seed regardless of how the matrix is later used.
template <typename S>
void fill_uniform(Mat<S>& m, Rng& rng, double bound) {
  S* data = m.data();
  const Eigen::Index n = m.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    data[i] = static_cast<S>(rng.uniform(-bound, bound));
  }
}

// ---------------------------------------------------------------------------
// LSTM

// Stacked gate parameters; rows hold the four gates in order
// [input, forget, cell, output], each block of `hidden` rows.
template <typename S>
struct LstmParams {
  Mat<S> W;  // 4h x input_dim
  Mat<S> U;  // 4h x h
  Mat<S> b;  // 4h x 1

  Eigen::Index hidden() const { return U.cols(); }
  Eigen::Index input_dim() const { return W.cols(); }
};

// Weights U(-k, k) with k = 1/sqrt(hidden); zero biases.
template <typename S>
LstmParams<S> init_lstm(Eigen::Index input_dim, Eigen::Index hidden, Rng& rng) {
  if (input_dim <= 0 || hidden <= 0) {
    throw DimensionError("init_lstm: dims must be positive");
  }
  LstmParams<S> p;
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.W.resize(4 * hidden, input_dim);
  p.U.resize(4 * hidden, hidden);
  p.b = Mat<S>::Zero(4 * hidden, 1);
  fill_uniform(p.W, rng, k);
  fill_uniform(p.U, rng, k);
  return p;
}

// Tape handles for one LSTM's parameters.
struct LstmVars {
  Var W, U, b;
};

template <typename S>
LstmVars bind_lstm(Graph<S>& g, const LstmParams<S>& p) {
  return LstmVars{g.leaf(p.W), g.leaf(p.U), g.leaf(p.b)};
}

// One step's differentiable outputs.
struct LstmStep {
  Var h, c;
};

// Single cell update for a batch: x is (input_dim x B), h_prev/c_prev are
// (hidden x B).
template <typename S>
LstmStep lstm_cell(Graph<S>& g, const LstmVars& p, Var x, Var h_prev,
                   Var c_prev) {
  const Eigen::Index hidden = g.value(p.U).cols();
  Var gates = g.add_col(g.add(g.matmul(p.W, x), g.matmul(p.U, h_prev)), p.b);
  Var i = g.sigmoid(g.rows(gates, 0, hidden));
  Var f = g.sigmoid(g.rows(gates, hidden, hidden));
  Var c_hat = g.tanh(g.rows(gates, 2 * hidden, hidden));
  Var o = g.sigmoid(g.rows(gates, 3 * hidden, hidden));
  Var c = g.add(g.cmul(f, c_prev), g.cmul(i, c_hat));
  Var h = g.cmul(o, g.tanh(c));
  return LstmStep{h, c};
}

// Runs an LSTM over a time-major sequence of inputs, each (input_dim x B).
// The result is aligned with input positions even when `reverse` is set.
//
// `masks` (optional, one row vector of 0/1 per step, 1 x B) freezes the state
// of finished sequences: position t of a padded batch keeps the previous h/c
// where mask is 0, so padding never contaminates the final state. An empty
// mask list means all positions are live.
//
// `h0`/`c0` (optional) give the initial state, (hidden x B); zeros otherwise.
template <typename S>
std::vector<LstmStep> lstm_sequence(
    Graph<S>& g, const LstmVars& p, const std::vector<Var>& xs,
    const std::vector<Eigen::Matrix<S, 1, Eigen::Dynamic>>& masks = {},
    bool reverse = false, Var h0 = Var{}, Var c0 = Var{}) {
  if (xs.empty()) {
    throw DimensionError("lstm_sequence: empty input sequence");
  }
  if (!masks.empty() && masks.size() != xs.size()) {
    throw DimensionError("lstm_sequence: " + std::to_string(masks.size()) +
                         " masks for " + std::to_string(xs.size()) + " steps");
  }
  const Eigen::Index hidden = g.value(p.U).cols();
  const Eigen::Index batch = g.value(xs.front()).cols();
  Var h = h0.valid() ? h0 : g.input(Mat<S>::Zero(hidden, batch));
  Var c = c0.valid() ? c0 : g.input(Mat<S>::Zero(hidden, batch));

  std::vector<LstmStep> steps(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const std::size_t t = reverse ? xs.size() - 1 - k : k;
    LstmStep next = lstm_cell(g, p, xs[t], h, c);
    if (!masks.empty()) {
      Eigen::Matrix<S, 1, Eigen::Dynamic> keep =
          (Eigen::Matrix<S, 1, Eigen::Dynamic>::Ones(1, batch) - masks[t]);
      next.h = g.add(g.scale_cols(next.h, masks[t]), g.scale_cols(h, keep));
      next.c = g.add(g.scale_cols(next.c, masks[t]), g.scale_cols(c, keep));
    }
    h = next.h;
    c = next.c;
    steps[t] = next;
  }
  return steps;
}

// ---------------------------------------------------------------------------
// Dense layer

template <typename S>
struct DenseParams {
  Mat<S> W;  // out x in
  Mat<S> b;  // out x 1
};

// Weights U(-k, k) with k = 1/sqrt(fan_in); zero biases.
template <typename S>
DenseParams<S> init_dense(Eigen::Index in, Eigen::Index out, Rng& rng) {
  if (in <= 0 || out <= 0) {
    throw DimensionError("init_dense: dims must be positive");
  }
  DenseParams<S> p;
  const double k = 1.0 / std::sqrt(static_cast<double>(in));
  p.W.resize(out, in);
  p.b = Mat<S>::Zero(out, 1);
  fill_uniform(p.W, rng, k);
  return p;
}

struct DenseVars {
  Var W, b;
};

template <typename S>
DenseVars bind_dense(Graph<S>& g, const DenseParams<S>& p) {
  return DenseVars{g.leaf(p.W), g.leaf(p.b)};
}

template <typename S>
Var dense(Graph<S>& g, const DenseVars& p, Var x) {
  return g.add_col(g.matmul(p.W, x), p.b);
}

// ---------------------------------------------------------------------------
// Optimization

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates, aligned index-for-index with the parameter
// list they were initialized from.
template <typename S>
struct AdamState {
  long step = 0;
  std::vector<Mat<S>> m;
  std::vector<Mat<S>> v;

  void init_like(const std::vector<ParamRef<S>>& params) {
    step = 0;
    m.clear();
    v.clear();
    m.reserve(params.size());
    v.reserve(params.size());
    for (const ParamRef<S>& p : params) {
      m.push_back(Mat<S>::Zero(p.value->rows(), p.value->cols()));
      v.push_back(Mat<S>::Zero(p.value->rows(), p.value->cols()));
    }
  }
};

// Rescales all gradients in place so their global L2 norm is at most
// max_norm; returns the norm before clipping.
template <typename S>
double clip_global_norm(std::vector<Mat<S>>& grads, double max_norm) {
  double sq = 0;
  for (const Mat<S>& g : grads) {
    sq += static_cast<double>(g.template cast<double>().squaredNorm());
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const S scale = static_cast<S>(max_norm / norm);
    for (Mat<S>& g : grads) g *= scale;
  }
  return norm;
}

// One Adam update with bias correction. Throws NumericError naming the
// offending parameter if its gradient is not finite.
template <typename S>
void adam_step(const std::vector<ParamRef<S>>& params,
               const std::vector<Mat<S>>& grads, AdamState<S>& state,
               const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw DimensionError("adam_step: parameter/gradient/state count mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  const S eps = static_cast<S>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Mat<S>& g = grads[i];
    if (!g.allFinite()) {
      throw NumericError("non-finite gradient for parameter '" +
                         params[i].name + "'");
    }
    Mat<S>& m = state.m[i];
    Mat<S>& v = state.v[i];
    m = b1 * m + (S(1) - b1) * g;
    v.array() = b2 * v.array() + (S(1) - b2) * g.array().square();
    const S lr1 = static_cast<S>(cfg.lr / bc1);
    const S inv_bc2 = static_cast<S>(1.0 / bc2);
    params[i].value->array() -=
        lr1 * m.array() / ((v.array() * inv_bc2).sqrt() + eps);
  }
}

// ---------------------------------------------------------------------------
// Gradient verification

struct GradCheckReport {
  double max_rel_error = 0;
  long coords_checked = 0;
  bool pass = false;
  std::string worst_coord;  // "name[i]" of the worst coordinate
};

// Compares analytic gradients against central finite differences of
// `loss_fn`, which must recompute the loss from the parameters' current
// values. At most `max_coords` coordinates are checked, chosen without
// replacement; relative error uses max(|analytic|, |numeric|, 1e-8) in the
// denominator.
template <typename S>
GradCheckReport grad_check(const std::vector<ParamRef<S>>& params,
                           const std::vector<Mat<S>>& analytic,
                           const std::function<double()>& loss_fn,
                           double step = 1e-5, long max_coords = 500,
                           double tolerance = 1e-4, std::uint64_t seed = 0) {
  if (analytic.size() != params.size()) {
    throw DimensionError("grad_check: gradient count mismatch");
  }
  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (Eigen::Index j = 0; j < params[i].value->size(); ++j) {
      coords.emplace_back(i, j);
    }
  }
  Rng rng(seed);
  if (static_cast<long>(coords.size()) > max_coords) {
    // Partial Fisher-Yates: the first max_coords entries become a uniform
    // sample without replacement.
    for (long k = 0; k < max_coords; ++k) {
      const std::size_t pick =
          static_cast<std::size_t>(k) +
          static_cast<std::size_t>(rng.below(coords.size() - k));
      std::swap(coords[static_cast<std::size_t>(k)], coords[pick]);
    }
    coords.resize(static_cast<std::size_t>(max_coords));
  }

  GradCheckReport report;
  for (const auto& [pi, offset] : coords) {
    S* slot = params[pi].value->data() + offset;
    const S original = *slot;
    *slot = original + static_cast<S>(step);
    const double plus = loss_fn();
    *slot = original - static_cast<S>(step);
    const double minus = loss_fn();
    *slot = original;
    const double numeric = (plus - minus) / (2.0 * step);
    const double exact = static_cast<double>(analytic[pi].data()[offset]);
    const double denom =
        std::max({std::abs(exact), std::abs(numeric), 1e-8});
    const double rel = std::abs(exact - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_coord =
          params[pi].name + "[" + std::to_string(offset) + "]";
    }
    ++report.coords_checked;
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

}  // namespace reqvae
