// Text generation from trained parameters: greedy or temperature-sampled
// decoding from a latent code, prior sampling, posterior-mean
// reconstruction, and linear latent-space interpolation.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "reqvae/errors.hpp"
#include "reqvae/rng.hpp"
#include "reqvae/tokenizer.hpp"
#include "reqvae/vae.hpp"

namespace reqvae {

enum class GenerationMode { kSample, kReconstruct, kInterpolate };

struct GenerationRequest {
  GenerationMode mode = GenerationMode::kSample;
  double temperature = 0;  // 0 = greedy argmax
  long max_len = 25;       // generated tokens per sentence
  long steps = 8;          // interpolation points, endpoints included
  std::uint64_t seed = 0;

  void validate() const {
    if (!(temperature >= 0)) {
      throw ConfigError("temperature must be >= 0");
    }
    if (max_len < 1) {
      throw ConfigError("max_len must be >= 1");
    }
    if (mode == GenerationMode::kInterpolate && steps < 2) {
      throw ConfigError("interpolation needs at least 2 steps");
    }
  }
};

// Autoregressive decoding from a latent code, starting at SOS; every step
// consumes [embedding(previous token) ; z]. Temperature 0 takes the argmax
// (ties to the lowest index); otherwise tokens are sampled from
// softmax(logits / temperature) using the seeded stream. PAD is never
// emitted. Decoding stops after EOS or after max_len generated tokens; the
// returned sequence includes the leading SOS (and EOS when reached).
template <typename S>
TokenSequence greedy_decode(const ModelParams<S>& params, const Vec<S>& z,
                            long max_len, double temperature = 0,
                            std::uint64_t seed = 0) {
  if (max_len < 1) {
    throw ConfigError("max_len must be >= 1");
  }
  if (z.size() != params.decoder.init_h.W.cols()) {
    throw DimensionError("latent code has size " + std::to_string(z.size()) +
                         ", model expects " +
                         std::to_string(params.decoder.init_h.W.cols()));
  }
  const Eigen::Index vocab = params.embedding.rows();
  Graph<S> g;
  ModelVars m = bind_model(g, params);
  Var zv = g.input(z);
  Var h = g.tanh(dense(g, m.init_h, zv));
  Var c = g.tanh(dense(g, m.init_c, zv));
  Rng rng(seed);

  TokenSequence out{Vocabulary::kSos};
  int prev = Vocabulary::kSos;
  for (long t = 0; t < max_len; ++t) {
    Var x = g.vcat(g.lookup(m.embedding, {prev}), zv);
    LstmStep step = lstm_cell(g, m.dec, x, h, c);
    h = step.h;
    c = step.c;
    const Mat<S>& logits = g.value(dense(g, m.out, h));

    int pick = -1;
    if (temperature == 0) {
      for (Eigen::Index r = 0; r < vocab; ++r) {
        if (r == Vocabulary::kPad) continue;
        if (pick < 0 || logits(r, 0) > logits(pick, 0)) {
          pick = static_cast<int>(r);
        }
      }
    } else {
      S mx = 0;
      bool first = true;
      for (Eigen::Index r = 0; r < vocab; ++r) {
        if (r == Vocabulary::kPad) continue;
        const S scaled = logits(r, 0) / static_cast<S>(temperature);
        if (first || scaled > mx) mx = scaled;
        first = false;
      }
      Vec<S> probs = Vec<S>::Zero(vocab);
      S norm = 0;
      for (Eigen::Index r = 0; r < vocab; ++r) {
        if (r == Vocabulary::kPad) continue;
        probs(r) = std::exp(logits(r, 0) / static_cast<S>(temperature) - mx);
        norm += probs(r);
      }
      const double u = rng.uniform() * static_cast<double>(norm);
      double cumulative = 0;
      for (Eigen::Index r = 0; r < vocab; ++r) {
        if (r == Vocabulary::kPad) continue;
        cumulative += static_cast<double>(probs(r));
        pick = static_cast<int>(r);  // rounding fallback: keep the last one
        if (u < cumulative) break;
      }
    }
    out.push_back(pick);
    if (pick == Vocabulary::kEos) break;
    prev = pick;
  }
  return out;
}

// n independent draws z ~ N(0, I), each decoded to text. Draw i uses
// derived seeds, so the list is reproducible and order-independent.
template <typename S>
std::vector<std::string> sample_prior(const ModelParams<S>& params,
                                      const Vocabulary& vocab, long n,
                                      double temperature, std::uint64_t seed,
                                      long max_len) {
  const Eigen::Index z_dim = params.decoder.init_h.W.cols();
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    Rng zr(mix_seed(seed, 2 * static_cast<std::uint64_t>(i)));
    Vec<S> z(z_dim);
    for (Eigen::Index j = 0; j < z_dim; ++j) {
      z(j) = static_cast<S>(zr.normal());
    }
    TokenSequence seq =
        greedy_decode(params, z, max_len, temperature,
                      mix_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1));
    out.push_back(decode(vocab, seq));
  }
  return out;
}

// Round trip through the latent space: encode, take z = posterior mean,
// decode greedily. An empty sentence reconstructs from the code of
// [SOS, EOS].
template <typename S>
std::string reconstruct(const ModelParams<S>& params, const Vocabulary& vocab,
                        const std::string& sentence, long max_len) {
  Vec<S> mu = posterior(params, encode(vocab, sentence)).first;
  return decode(vocab, greedy_decode(params, mu, max_len));
}

// Linear interpolation between the posterior means of two sentences:
// z_k = (1 - alpha_k) z_a + alpha_k z_b with alpha_k = k / (steps - 1),
// each decoded greedily. The endpoints decode z_a and z_b exactly.
template <typename S>
std::vector<std::pair<double, std::string>> interpolate(
    const ModelParams<S>& params, const Vocabulary& vocab,
    const std::string& sentence_a, const std::string& sentence_b, long steps,
    long max_len) {
  if (steps < 2) {
    throw ConfigError("interpolation needs at least 2 steps");
  }
  Vec<S> mu_a = posterior(params, encode(vocab, sentence_a)).first;
  Vec<S> mu_b = posterior(params, encode(vocab, sentence_b)).first;
  std::vector<std::pair<double, std::string>> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (long k = 0; k < steps; ++k) {
    const double alpha =
        static_cast<double>(k) / static_cast<double>(steps - 1);
    Vec<S> z = mu_a * static_cast<S>(1.0 - alpha) + mu_b * static_cast<S>(alpha);
    out.emplace_back(alpha, decode(vocab, greedy_decode(params, z, max_len)));
  }
  return out;
}

}  // namespace reqvae
