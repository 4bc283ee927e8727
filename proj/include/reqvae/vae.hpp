// The sentence variational autoencoder: a bidirectional LSTM encoder mapping
// a token sequence to a diagonal Gaussian posterior, and an LSTM decoder that
// receives the latent code as part of its input at every step.
//
// All forward computation is expressed on the autodiff tape; inference paths
// simply never call backward(). Scalar type S is float for training and
// double for gradient verification.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reqvae/errors.hpp"
#include "reqvae/nn.hpp"
#include "reqvae/rng.hpp"
#include "reqvae/tape.hpp"
#include "reqvae/tokenizer.hpp"

namespace reqvae {

struct ModelDims {
  Eigen::Index vocab = 0;      // V, including the four specials
  Eigen::Index embedding = 0;  // word-vector width e
  Eigen::Index hidden = 0;     // LSTM state width h (per direction)
  Eigen::Index latent = 0;     // z_dim
};

// Inference-network parameters: phi of q_phi(z|x).
template <typename S>
struct EncoderParams {
  LstmParams<S> fwd;            // input e
  LstmParams<S> bwd;            // input e
  DenseParams<S> mean_head;     // z_dim x 2h
  DenseParams<S> logvar_head;   // z_dim x 2h
};

// Generative-network parameters: theta of p_theta(x|z).
template <typename S>
struct DecoderParams {
  DenseParams<S> init_h;  // h x z_dim, through tanh
  DenseParams<S> init_c;  // h x z_dim, through tanh
  LstmParams<S> cell;     // input e + z_dim
  DenseParams<S> out;     // V x h
};

template <typename S>
struct ModelParams {
  Mat<S> embedding;  // V x e, row per token id; row 0 (PAD) stays zero
  bool embedding_trainable = true;
  EncoderParams<S> encoder;
  DecoderParams<S> decoder;

  ModelDims dims() const {
    ModelDims d;
    d.vocab = embedding.rows();
    d.embedding = embedding.cols();
    d.hidden = encoder.fwd.hidden();
    d.latent = decoder.init_h.W.cols();
    return d;
  }

  // Fresh parameters: embedding rows U(-0.05, 0.05) except PAD, LSTM weights
  // U(-1/sqrt(h), 1/sqrt(h)), dense weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
  // zero biases. The draw order is fixed so a seed pins every weight. A
  // pretrained embedding matrix may be assigned over `embedding` afterwards.
  static ModelParams init(const ModelDims& d, std::uint64_t seed) {
    if (d.vocab <= 0 || d.embedding <= 0 || d.hidden <= 0 || d.latent <= 0) {
      throw DimensionError("ModelParams::init: all dims must be positive");
    }
    Rng rng(seed);
    ModelParams p;
    p.embedding = Mat<S>::Zero(d.vocab, d.embedding);
    for (Eigen::Index r = 1; r < d.vocab; ++r) {
      for (Eigen::Index c = 0; c < d.embedding; ++c) {
        p.embedding(r, c) = static_cast<S>(rng.uniform(-0.05, 0.05));
      }
    }
    p.encoder.fwd = init_lstm<S>(d.embedding, d.hidden, rng);
    p.encoder.bwd = init_lstm<S>(d.embedding, d.hidden, rng);
    p.encoder.mean_head = init_dense<S>(2 * d.hidden, d.latent, rng);
    p.encoder.logvar_head = init_dense<S>(2 * d.hidden, d.latent, rng);
    p.decoder.init_h = init_dense<S>(d.latent, d.hidden, rng);
    p.decoder.init_c = init_dense<S>(d.latent, d.hidden, rng);
    p.decoder.cell = init_lstm<S>(d.embedding + d.latent, d.hidden, rng);
    p.decoder.out = init_dense<S>(d.hidden, d.vocab, rng);
    return p;
  }

  // Every parameter matrix in a fixed order; the order defines checkpoint
  // layout and optimizer-state alignment.
  std::vector<ParamRef<S>> visit() {
    return {
        {"embedding", &embedding},
        {"enc_fwd.W", &encoder.fwd.W},
        {"enc_fwd.U", &encoder.fwd.U},
        {"enc_fwd.b", &encoder.fwd.b},
        {"enc_bwd.W", &encoder.bwd.W},
        {"enc_bwd.U", &encoder.bwd.U},
        {"enc_bwd.b", &encoder.bwd.b},
        {"mean_head.W", &encoder.mean_head.W},
        {"mean_head.b", &encoder.mean_head.b},
        {"logvar_head.W", &encoder.logvar_head.W},
        {"logvar_head.b", &encoder.logvar_head.b},
        {"init_h.W", &decoder.init_h.W},
        {"init_h.b", &decoder.init_h.b},
        {"init_c.W", &decoder.init_c.W},
        {"init_c.b", &decoder.init_c.b},
        {"dec.W", &decoder.cell.W},
        {"dec.U", &decoder.cell.U},
        {"dec.b", &decoder.cell.b},
        {"out.W", &decoder.out.W},
        {"out.b", &decoder.out.b},
    };
  }

  // The matrices the optimizer updates: visit() minus a frozen embedding.
  std::vector<ParamRef<S>> trainable() {
    std::vector<ParamRef<S>> all = visit();
    if (!embedding_trainable) {
      all.erase(all.begin());
    }
    return all;
  }
};

// Lossless-where-possible conversion between scalar types, preserving the
// trainable flag; used to move between training precision and the 32-bit
// checkpoint representation.
template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& p) {
  ModelParams<To> out;
  out.embedding = p.embedding.template cast<To>();
  out.embedding_trainable = p.embedding_trainable;
  auto lstm = [](const LstmParams<From>& l) {
    return LstmParams<To>{l.W.template cast<To>(), l.U.template cast<To>(),
                          l.b.template cast<To>()};
  };
  auto dense = [](const DenseParams<From>& d) {
    return DenseParams<To>{d.W.template cast<To>(), d.b.template cast<To>()};
  };
  out.encoder.fwd = lstm(p.encoder.fwd);
  out.encoder.bwd = lstm(p.encoder.bwd);
  out.encoder.mean_head = dense(p.encoder.mean_head);
  out.encoder.logvar_head = dense(p.encoder.logvar_head);
  out.decoder.init_h = dense(p.decoder.init_h);
  out.decoder.init_c = dense(p.decoder.init_c);
  out.decoder.cell = lstm(p.decoder.cell);
  out.decoder.out = dense(p.decoder.out);
  return out;
}

// Tape handles for one forward pass over one graph.
struct ModelVars {
  Var embedding;
  LstmVars enc_fwd, enc_bwd;
  DenseVars mean_head, logvar_head, init_h, init_c;
  LstmVars dec;
  DenseVars out;
};

template <typename S>
ModelVars bind_model(Graph<S>& g, const ModelParams<S>& p) {
  ModelVars m;
  m.embedding = p.embedding_trainable ? g.leaf(p.embedding) : g.input(p.embedding);
  m.enc_fwd = bind_lstm(g, p.encoder.fwd);
  m.enc_bwd = bind_lstm(g, p.encoder.bwd);
  m.mean_head = bind_dense(g, p.encoder.mean_head);
  m.logvar_head = bind_dense(g, p.encoder.logvar_head);
  m.init_h = bind_dense(g, p.decoder.init_h);
  m.init_c = bind_dense(g, p.decoder.init_c);
  m.dec = bind_lstm(g, p.decoder.cell);
  m.out = bind_dense(g, p.decoder.out);
  return m;
}

// Gradients after backward(), aligned index-for-index with
// params.trainable().
template <typename S>
std::vector<Mat<S>> collect_grads(Graph<S>& g, const ModelVars& m,
                                  const ModelParams<S>& p) {
  std::vector<Mat<S>> out;
  if (p.embedding_trainable) out.push_back(g.grad(m.embedding));
  for (Var v : {m.enc_fwd.W, m.enc_fwd.U, m.enc_fwd.b,      //
                m.enc_bwd.W, m.enc_bwd.U, m.enc_bwd.b,      //
                m.mean_head.W, m.mean_head.b,               //
                m.logvar_head.W, m.logvar_head.b,           //
                m.init_h.W, m.init_h.b, m.init_c.W, m.init_c.b,
                m.dec.W, m.dec.U, m.dec.b, m.out.W, m.out.b}) {
    out.push_back(g.grad(v));
  }
  return out;
}

// A model input must be a [SOS ... EOS] sequence with in-range token ids.
inline void check_model_input(const TokenSequence& x, Eigen::Index vocab) {
  if (x.size() < 2 || x.front() != Vocabulary::kSos || x.back() != Vocabulary::kEos) {
    throw DimensionError(
        "model input must begin with <sos> and end with <eos>");
  }
  for (int id : x) {
    if (id < 0 || id >= vocab) {
      throw DimensionError("token id " + std::to_string(id) +
                           " out of range for vocabulary of " +
                           std::to_string(vocab));
    }
  }
}

template <typename S>
struct PosteriorVars {
  Var mu;      // z_dim x B
  Var logvar;  // z_dim x B
};

// Batched encoder. Sequences may have different lengths; shorter ones are
// advanced with PAD inputs whose state updates are masked out, so every
// column's posterior equals what an unbatched encode would produce.
template <typename S>
PosteriorVars<S> encode(Graph<S>& g, const ModelVars& m,
                        const std::vector<TokenSequence>& seqs) {
  if (seqs.empty()) {
    throw DimensionError("encode: empty batch");
  }
  const Eigen::Index vocab = g.value(m.embedding).rows();
  std::size_t max_len = 0;
  for (const TokenSequence& s : seqs) {
    check_model_input(s, vocab);
    max_len = std::max(max_len, s.size());
  }
  const Eigen::Index batch = static_cast<Eigen::Index>(seqs.size());

  bool ragged = false;
  for (const TokenSequence& s : seqs) ragged |= s.size() < max_len;

  std::vector<Var> xs(max_len);
  std::vector<Eigen::Matrix<S, 1, Eigen::Dynamic>> masks;
  if (ragged) masks.resize(max_len);
  std::vector<int> ids(seqs.size());
  for (std::size_t t = 0; t < max_len; ++t) {
    Eigen::Matrix<S, 1, Eigen::Dynamic> live(1, batch);
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      const bool in_range = t < seqs[b].size();
      ids[b] = in_range ? seqs[b][t] : Vocabulary::kPad;
      live(0, static_cast<Eigen::Index>(b)) = in_range ? S(1) : S(0);
    }
    xs[t] = g.lookup(m.embedding, ids);
    if (ragged) masks[t] = live;
  }

  std::vector<LstmStep> fwd = lstm_sequence(g, m.enc_fwd, xs, masks, false);
  std::vector<LstmStep> bwd = lstm_sequence(g, m.enc_bwd, xs, masks, true);
  Var final_states = g.vcat(fwd.back().h, bwd.front().h);  // 2h x B
  return PosteriorVars<S>{dense(g, m.mean_head, final_states),
                          dense(g, m.logvar_head, final_states)};
}

// z = mu + exp(0.5 * logvar) (.) eps
template <typename S>
Var reparameterize(Graph<S>& g, Var mu, Var logvar, Mat<S> eps) {
  Var sd = g.exp(g.scale(logvar, S(0.5)));
  return g.add(mu, g.cmul(sd, g.input(std::move(eps))));
}

template <typename S>
Vec<S> reparameterize(const Vec<S>& mu, const Vec<S>& logvar,
                      const Vec<S>& eps) {
  if (mu.size() != logvar.size() || mu.size() != eps.size()) {
    throw DimensionError("reparameterize: shape mismatch");
  }
  return mu.array() + (0.5 * logvar.array()).exp() * eps.array();
}

// KL(q || N(0, I)) in closed form, summed over every entry of the batch:
// -1/2 sum(1 + logvar - mu^2 - exp(logvar)).
template <typename S>
Var kl_divergence(Graph<S>& g, Var mu, Var logvar) {
  Var inner = g.add(g.add_const(logvar, S(1)),
                    g.scale(g.add(g.cmul(mu, mu), g.exp(logvar)), S(-1)));
  return g.scale(g.sum(inner), S(-0.5));
}

template <typename S>
S kl_divergence(const Vec<S>& mu, const Vec<S>& logvar) {
  if (mu.size() != logvar.size()) {
    throw DimensionError("kl_divergence: shape mismatch");
  }
  return S(-0.5) * (1 + logvar.array() - mu.array().square() -
                    logvar.array().exp())
                       .sum();
}

// Noise and word-dropout decisions for one Monte-Carlo sample of a batch.
// Column b is drawn from its own stream Rng(seq_seeds[b] + l): first the
// z_dim normal draws for eps, then one Bernoulli per non-SOS input position.
// This makes a sequence's draws independent of batch composition, and makes
// an L-sample evaluation the exact average of L single-sample evaluations
// with seeds seq_seed, seq_seed + 1, ...
template <typename S>
struct SampleDraws {
  Mat<S> eps;                          // z_dim x B
  std::vector<std::vector<char>> drop; // [b][t]: replace input t by UNK
};

template <typename S>
SampleDraws<S> draw_sample(const std::vector<TokenSequence>& seqs,
                           Eigen::Index z_dim,
                           const std::vector<std::uint64_t>& seq_seeds, int l,
                           double word_dropout) {
  if (seq_seeds.size() != seqs.size()) {
    throw DimensionError("draw_sample: seed count mismatch");
  }
  SampleDraws<S> d;
  d.eps.resize(z_dim, static_cast<Eigen::Index>(seqs.size()));
  d.drop.resize(seqs.size());
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    Rng rng(seq_seeds[b] + static_cast<std::uint64_t>(l));
    for (Eigen::Index j = 0; j < z_dim; ++j) {
      d.eps(j, static_cast<Eigen::Index>(b)) = static_cast<S>(rng.normal());
    }
    const std::size_t inputs = seqs[b].size() - 1;  // x[0 .. len-2]
    d.drop[b].assign(inputs, 0);
    for (std::size_t t = 1; t < inputs; ++t) {
      d.drop[b][t] = rng.bernoulli(word_dropout) ? 1 : 0;
    }
  }
  return d;
}

// Zero noise and no dropout: the deterministic evaluation path (z = mu).
template <typename S>
SampleDraws<S> zero_draws(const std::vector<TokenSequence>& seqs,
                          Eigen::Index z_dim) {
  SampleDraws<S> d;
  d.eps = Mat<S>::Zero(z_dim, static_cast<Eigen::Index>(seqs.size()));
  d.drop.resize(seqs.size());
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    d.drop[b].assign(seqs[b].size() - 1, 0);
  }
  return d;
}

// Side outputs of one teacher-forced decode pass.
template <typename S>
struct DecodeStats {
  std::vector<S> per_seq_nll;  // summed over each sequence's real targets
  long token_count = 0;
  long correct = 0;
};

// Teacher-forced decoder pass: step t consumes [embedding(x_t or UNK) ; z]
// and predicts x_{t+1}; returns the 1x1 NLL summed over every real target in
// the batch. Positions past a sequence's end carry target -1 and contribute
// nothing to loss or gradients. If `logits_out` is given, it receives each
// step's logits values (V x B, one entry per step).
template <typename S>
Var decode_teacher(Graph<S>& g, const ModelVars& m,
                   const std::vector<TokenSequence>& seqs, Var z,
                   const std::vector<std::vector<char>>& drop,
                   DecodeStats<S>* stats = nullptr,
                   std::vector<Mat<S>>* logits_out = nullptr) {
  if (drop.size() != seqs.size()) {
    throw DimensionError("decode_teacher: dropout plan count mismatch");
  }
  std::size_t max_inputs = 0;
  for (const TokenSequence& s : seqs) {
    max_inputs = std::max(max_inputs, s.size() - 1);
  }
  if (stats != nullptr) {
    stats->per_seq_nll.assign(seqs.size(), S(0));
    stats->token_count = 0;
    stats->correct = 0;
  }

  Var h = g.tanh(dense(g, m.init_h, z));
  Var c = g.tanh(dense(g, m.init_c, z));
  Var total{};
  std::vector<int> ids(seqs.size());
  std::vector<int> targets(seqs.size());
  for (std::size_t t = 0; t < max_inputs; ++t) {
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      const bool live = t < seqs[b].size() - 1;
      if (live) {
        ids[b] = drop[b][t] ? Vocabulary::kUnk : seqs[b][t];
        targets[b] = seqs[b][t + 1];
      } else {
        ids[b] = Vocabulary::kPad;
        targets[b] = -1;
      }
    }
    Var x = g.vcat(g.lookup(m.embedding, ids), z);
    LstmStep step = lstm_cell(g, m.dec, x, h, c);
    h = step.h;
    c = step.c;
    Var logits = dense(g, m.out, h);
    if (logits_out != nullptr) {
      logits_out->push_back(g.value(logits));
    }
    XentStats<S> st;
    Var nll = g.xent(logits, targets, stats != nullptr ? &st : nullptr);
    if (stats != nullptr) {
      for (std::size_t b = 0; b < seqs.size(); ++b) {
        stats->per_seq_nll[b] += st.per_target_nll[b];
      }
      stats->token_count += st.token_count;
      stats->correct += st.correct;
    }
    total = total.valid() ? g.add(total, nll) : nll;
  }
  return total;
}

// The paper's objective for one minibatch, on the tape:
//   loss = (1/B) sum_b [ (1/L) sum_l NLL(x_b | z_{b,l}) + kl_weight * KL_b ]
// with the side metrics computed from plain values.
template <typename S>
struct BatchElbo {
  Var loss;                  // 1x1, mean over the batch
  double recon_nll_sum = 0;  // sum over sequences of mean-over-L token NLL
  double kl_sum = 0;         // sum over sequences of closed-form KL
  double correct = 0;        // mean over L of correctly predicted tokens
  long token_count = 0;      // real (non-PAD) targets in the batch
};

template <typename S>
BatchElbo<S> batch_elbo(Graph<S>& g, const ModelVars& m,
                        const std::vector<TokenSequence>& seqs,
                        double kl_weight, int mc_samples,
                        const std::vector<std::uint64_t>& seq_seeds,
                        double word_dropout, bool deterministic = false) {
  if (mc_samples < 1) {
    throw DimensionError("batch_elbo: mc_samples must be >= 1");
  }
  const Eigen::Index batch = static_cast<Eigen::Index>(seqs.size());
  PosteriorVars<S> q = encode(g, m, seqs);
  const Eigen::Index z_dim = g.value(q.mu).rows();

  Var kl = kl_divergence(g, q.mu, q.logvar);
  BatchElbo<S> result;
  for (Eigen::Index b = 0; b < batch; ++b) {
    result.kl_sum += static_cast<double>(kl_divergence<S>(
        g.value(q.mu).col(b), g.value(q.logvar).col(b)));
  }

  Var recon{};
  for (int l = 0; l < mc_samples; ++l) {
    SampleDraws<S> draws =
        deterministic ? zero_draws<S>(seqs, z_dim)
                      : draw_sample<S>(seqs, z_dim, seq_seeds, l, word_dropout);
    Var z = reparameterize(g, q.mu, q.logvar, std::move(draws.eps));
    DecodeStats<S> stats;
    Var nll = decode_teacher(g, m, seqs, z, draws.drop, &stats);
    recon = recon.valid() ? g.add(recon, nll) : nll;
    for (S v : stats.per_seq_nll) {
      result.recon_nll_sum += static_cast<double>(v) / mc_samples;
    }
    result.correct += static_cast<double>(stats.correct) / mc_samples;
    if (l == 0) result.token_count = stats.token_count;
  }
  recon = g.scale(recon, S(1.0 / mc_samples));

  Var total = g.add(recon, g.scale(kl, static_cast<S>(kl_weight)));
  result.loss = g.scale(total, S(1) / static_cast<S>(batch));
  return result;
}

// Per-sentence loss decomposition (nats).
struct LossBreakdown {
  double reconstruction_nll = 0;  // summed over tokens, mean over L samples
  double kl = 0;
  double kl_weight = 1;
  double total = 0;  // reconstruction_nll + kl_weight * kl
};

// The objective for a single sentence; sample l draws from Rng(seed + l).
template <typename S>
LossBreakdown elbo_loss(const ModelParams<S>& params, const TokenSequence& x,
                        double kl_weight, int mc_samples, std::uint64_t seed,
                        double word_dropout) {
  Graph<S> g;
  ModelVars m = bind_model(g, params);
  BatchElbo<S> r = batch_elbo(g, m, {x}, kl_weight, mc_samples, {seed},
                              word_dropout);
  LossBreakdown out;
  out.reconstruction_nll = r.recon_nll_sum;
  out.kl = r.kl_sum;
  out.kl_weight = kl_weight;
  out.total = out.reconstruction_nll + kl_weight * out.kl;
  return out;
}

// Posterior parameters of a single sentence as plain vectors.
template <typename S>
std::pair<Vec<S>, Vec<S>> posterior(const ModelParams<S>& params,
                                    const TokenSequence& x) {
  Graph<S> g;
  ModelVars m = bind_model(g, params);
  PosteriorVars<S> q = encode(g, m, {x});
  return {g.value(q.mu).col(0), g.value(q.logvar).col(0)};
}

// Teacher-forced per-step logits for one sentence (V x (|x|-1)); the seed
// drives only the word-dropout draws (one stream, positions 1..|x|-2).
template <typename S>
Mat<S> decode_logits(const ModelParams<S>& params, const TokenSequence& x,
                     const Vec<S>& z, double word_dropout,
                     std::uint64_t seed) {
  const ModelParams<S>& p = params;
  check_model_input(x, p.embedding.rows());
  if (z.size() != p.decoder.init_h.W.cols()) {
    throw DimensionError("decode_logits: latent size mismatch");
  }
  Graph<S> g;
  ModelVars m = bind_model(g, p);
  Rng rng(seed);
  std::vector<std::vector<char>> drop(1);
  drop[0].assign(x.size() - 1, 0);
  for (std::size_t t = 1; t + 1 < x.size(); ++t) {
    drop[0][t] = rng.bernoulli(word_dropout) ? 1 : 0;
  }
  Var zv = g.input(z);
  std::vector<Mat<S>> per_step;
  decode_teacher<S>(g, m, {x}, zv, drop, nullptr, &per_step);
  Mat<S> logits(p.embedding.rows(), static_cast<Eigen::Index>(per_step.size()));
  for (std::size_t t = 0; t < per_step.size(); ++t) {
    logits.col(static_cast<Eigen::Index>(t)) = per_step[t].col(0);
  }
  return logits;
}

}  // namespace reqvae
