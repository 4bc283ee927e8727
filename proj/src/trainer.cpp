#include "reqvae/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <utility>

#include "json.hpp"
#include "reqvae/corpus.hpp"
#include "reqvae/errors.hpp"
#include "reqvae/rng.hpp"

namespace reqvae {
namespace {

// Purpose tags for deriving independent RNG streams from the run seed.
constexpr std::uint64_t kSeedParams = 0xA1;
constexpr std::uint64_t kSeedEmbedding = 0xA2;
constexpr std::uint64_t kSeedBatches = 0xA3;
constexpr std::uint64_t kSeedSequence = 0xA4;
constexpr std::uint64_t kSeedHoldout = 0xA5;

long get_long(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw ConfigError("config key '" + key + "' must be an integer");
  }
  return v.get<long>();
}

double get_double(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) {
    throw ConfigError("config key '" + key + "' must be a number");
  }
  return v.get<double>();
}

bool get_bool(const nlohmann::json& v, const std::string& key) {
  if (!v.is_boolean()) {
    throw ConfigError("config key '" + key + "' must be a boolean");
  }
  return v.get<bool>();
}

std::string get_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) {
    throw ConfigError("config key '" + key + "' must be a string");
  }
  return v.get<std::string>();
}

double get_field(const nlohmann::json& row, const char* key) {
  if (!row.contains(key) || !row[key].is_number()) {
    throw FormatError(std::string("metrics record missing numeric field '") +
                      key + "'");
  }
  return row[key].get<double>();
}

}  // namespace

void TrainingConfig::validate() const {
  auto positive = [](long v, const char* name) {
    if (v < 1) {
      throw ConfigError(std::string(name) + " must be >= 1, got " +
                        std::to_string(v));
    }
  };
  positive(epochs, "epochs");
  positive(batch_size, "batch_size");
  positive(z_dim, "z_dim");
  positive(hidden_size, "hidden_size");
  positive(embedding_dim, "embedding_dim");
  positive(max_tokens, "max_tokens");
  positive(mc_samples, "mc_samples");
  if (num_words < 2) {
    throw ConfigError("num_words must be >= 2, got " +
                      std::to_string(num_words));
  }
  if (!(lr > 0)) {
    throw ConfigError("lr must be positive");
  }
  if (kl_warmup_steps < 0) {
    throw ConfigError("kl_warmup_steps must be >= 0");
  }
  if (!(word_dropout >= 0 && word_dropout <= 1)) {
    throw ConfigError("word_dropout must be in [0, 1]");
  }
  if (precision != "float" && precision != "double") {
    throw ConfigError("precision must be \"float\" or \"double\", got \"" +
                      precision + "\"");
  }
  if (!(grad_clip_norm >= 0)) {
    throw ConfigError("grad_clip_norm must be >= 0");
  }
  if (!(holdout_fraction >= 0 && holdout_fraction < 1)) {
    throw ConfigError("holdout_fraction must be in [0, 1)");
  }
  if (checkpoint_every < 0) {
    throw ConfigError("checkpoint_every must be >= 0");
  }
}

TrainingConfig config_from_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw ConfigError("config must be a JSON object");
  }
  TrainingConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    if (key == "epochs") {
      cfg.epochs = get_long(value, key);
    } else if (key == "batch_size") {
      cfg.batch_size = get_long(value, key);
    } else if (key == "lr") {
      cfg.lr = get_double(value, key);
    } else if (key == "z_dim") {
      cfg.z_dim = get_long(value, key);
    } else if (key == "hidden_size") {
      cfg.hidden_size = get_long(value, key);
    } else if (key == "embedding_dim") {
      cfg.embedding_dim = get_long(value, key);
    } else if (key == "num_words") {
      cfg.num_words = get_long(value, key);
    } else if (key == "max_tokens") {
      cfg.max_tokens = get_long(value, key);
    } else if (key == "kl_warmup_steps") {
      cfg.kl_warmup_steps = get_long(value, key);
    } else if (key == "word_dropout") {
      cfg.word_dropout = get_double(value, key);
    } else if (key == "mc_samples") {
      cfg.mc_samples = get_long(value, key);
    } else if (key == "seed") {
      if (!value.is_number_integer() && !value.is_number_unsigned()) {
        throw ConfigError("config key 'seed' must be an integer");
      }
      cfg.seed = value.get<std::uint64_t>();
    } else if (key == "precision") {
      cfg.precision = get_string(value, key);
    } else if (key == "grad_clip_norm") {
      cfg.grad_clip_norm = get_double(value, key);
    } else if (key == "freeze_embeddings") {
      cfg.freeze_embeddings = get_bool(value, key);
    } else if (key == "holdout_fraction") {
      cfg.holdout_fraction = get_double(value, key);
    } else if (key == "checkpoint_every") {
      cfg.checkpoint_every = get_long(value, key);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  return cfg;
}

std::string config_to_json_text(const TrainingConfig& cfg) {
  nlohmann::ordered_json doc;
  doc["epochs"] = cfg.epochs;
  doc["batch_size"] = cfg.batch_size;
  doc["lr"] = cfg.lr;
  doc["z_dim"] = cfg.z_dim;
  doc["hidden_size"] = cfg.hidden_size;
  doc["embedding_dim"] = cfg.embedding_dim;
  doc["num_words"] = cfg.num_words;
  doc["max_tokens"] = cfg.max_tokens;
  doc["kl_warmup_steps"] = cfg.kl_warmup_steps;
  doc["word_dropout"] = cfg.word_dropout;
  doc["mc_samples"] = cfg.mc_samples;
  doc["seed"] = cfg.seed;
  doc["precision"] = cfg.precision;
  doc["grad_clip_norm"] = cfg.grad_clip_norm;
  doc["freeze_embeddings"] = cfg.freeze_embeddings;
  doc["holdout_fraction"] = cfg.holdout_fraction;
  doc["checkpoint_every"] = cfg.checkpoint_every;
  return doc.dump();
}

std::string metrics_to_json_line(const EpochMetrics& row) {
  nlohmann::ordered_json doc;
  doc["epoch"] = row.epoch;
  doc["step"] = row.step;
  doc["total"] = row.metrics.total;
  doc["recon"] = row.metrics.recon;
  doc["kl"] = row.metrics.kl;
  doc["kl_weight"] = row.metrics.kl_weight;
  doc["accuracy"] = row.metrics.accuracy;
  doc["perplexity"] = row.metrics.perplexity;
  doc["wall_time_s"] = row.wall_time_s;
  return doc.dump();
}

EpochMetrics metrics_from_json_line(const std::string& line) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics record is not valid JSON: ") +
                      e.what());
  }
  EpochMetrics row;
  row.epoch = static_cast<long>(get_field(doc, "epoch"));
  row.step = static_cast<long>(get_field(doc, "step"));
  row.metrics.total = get_field(doc, "total");
  row.metrics.recon = get_field(doc, "recon");
  row.metrics.kl = get_field(doc, "kl");
  row.metrics.kl_weight = get_field(doc, "kl_weight");
  row.metrics.accuracy = get_field(doc, "accuracy");
  row.metrics.perplexity = get_field(doc, "perplexity");
  row.wall_time_s = get_field(doc, "wall_time_s");
  return row;
}

double kl_weight_at(long step, long warmup) {
  if (warmup <= 0) return 1.0;
  if (step >= warmup) return 1.0;
  return static_cast<double>(step) / static_cast<double>(warmup);
}

std::vector<std::vector<std::size_t>> batch_order(std::size_t count,
                                                  std::size_t batch_size,
                                                  std::uint64_t seed,
                                                  long epoch) {
  if (count == 0 || batch_size == 0) {
    throw ConfigError("batch_order: empty dataset or zero batch size");
  }
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, kSeedBatches, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::pair<std::vector<std::string>, std::vector<std::string>> holdout_split(
    const std::vector<std::string>& sentences, double fraction,
    std::uint64_t seed) {
  if (fraction <= 0 || sentences.size() < 2) {
    return {sentences, {}};
  }
  std::size_t held = static_cast<std::size_t>(
      fraction * static_cast<double>(sentences.size()));
  held = std::min(held, sentences.size() - 1);
  std::vector<std::size_t> order(sentences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, kSeedHoldout));
  rng.shuffle(order);
  std::vector<bool> is_held(sentences.size(), false);
  for (std::size_t i = 0; i < held; ++i) is_held[order[i]] = true;
  std::pair<std::vector<std::string>, std::vector<std::string>> split;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    (is_held[i] ? split.second : split.first).push_back(sentences[i]);
  }
  return split;
}

namespace {

// Sentences encoded against a vocabulary, skipping any that exceed the
// length limit (limit counts words; encoded form adds SOS and EOS).
std::vector<TokenSequence> encode_corpus(const Vocabulary& vocab,
                                         const std::vector<std::string>& text,
                                         long max_tokens) {
  std::vector<TokenSequence> out;
  out.reserve(text.size());
  for (const std::string& sentence : text) {
    TokenSequence seq = encode(vocab, sentence);
    if (static_cast<long>(seq.size()) <= max_tokens + 2) {
      out.push_back(std::move(seq));
    }
  }
  return out;
}

template <typename S>
AdamState<float> cast_adam(const AdamState<S>& a) {
  AdamState<float> out;
  out.step = a.step;
  for (const Mat<S>& m : a.m) out.m.push_back(m.template cast<float>());
  for (const Mat<S>& v : a.v) out.v.push_back(v.template cast<float>());
  return out;
}

template <typename S>
AdamState<S> uncast_adam(const AdamState<float>& a) {
  AdamState<S> out;
  out.step = a.step;
  for (const Mat<float>& m : a.m) out.m.push_back(m.template cast<S>());
  for (const Mat<float>& v : a.v) out.v.push_back(v.template cast<S>());
  return out;
}

template <typename S>
Checkpoint make_checkpoint(const TrainingConfig& cfg, const Vocabulary& vocab,
                           const ModelParams<S>& params,
                           const AdamState<S>& adam, long global_step,
                           long epoch, std::vector<EpochMetrics> history) {
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.vocab = vocab;
  ckpt.params = cast_params<float>(params);
  ckpt.adam = cast_adam(adam);
  ckpt.global_step = global_step;
  ckpt.epoch = epoch;
  ckpt.history = std::move(history);
  return ckpt;
}

template <typename S>
Checkpoint run_training(const TrainContext& ctx, const TrainingConfig& cfg,
                        const Vocabulary& vocab,
                        const std::vector<TokenSequence>& data,
                        ModelParams<S> params, AdamState<S> adam,
                        long start_epoch, long total_epochs, long global_step,
                        std::vector<EpochMetrics> history) {
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  const auto t0 = std::chrono::steady_clock::now();
  const double n = static_cast<double>(data.size());

  for (long epoch = start_epoch; epoch < total_epochs; ++epoch) {
    const std::vector<std::vector<std::size_t>> batches = batch_order(
        data.size(), static_cast<std::size_t>(cfg.batch_size), cfg.seed, epoch);
    const std::uint64_t epoch_seed =
        mix_seed(cfg.seed, kSeedSequence, static_cast<std::uint64_t>(epoch));

    double total_sum = 0, recon_sum = 0, kl_sum = 0, correct = 0;
    long tokens = 0;
    double weight = kl_weight_at(global_step, cfg.kl_warmup_steps);
    std::size_t position = 0;  // index into the epoch's shuffled order

    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      std::vector<TokenSequence> seqs;
      std::vector<std::uint64_t> seq_seeds;
      seqs.reserve(batches[bi].size());
      seq_seeds.reserve(batches[bi].size());
      for (std::size_t idx : batches[bi]) {
        seqs.push_back(data[idx]);
        seq_seeds.push_back(mix_seed(epoch_seed, position++));
      }

      weight = kl_weight_at(global_step, cfg.kl_warmup_steps);
      Graph<S> g;
      ModelVars m = bind_model(g, params);
      BatchElbo<S> r =
          batch_elbo(g, m, seqs, weight, static_cast<int>(cfg.mc_samples),
                     seq_seeds, cfg.word_dropout);
      const double loss = static_cast<double>(g.value(r.loss)(0, 0));
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss (epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(bi) + ", step " +
                           std::to_string(global_step) + ")");
      }
      g.backward(r.loss);
      std::vector<Mat<S>> grads = collect_grads(g, m, params);
      clip_global_norm(grads, cfg.grad_clip_norm);
      adam_step(params.trainable(), grads, adam, adam_cfg);
      ++global_step;

      total_sum += loss * static_cast<double>(seqs.size());
      recon_sum += r.recon_nll_sum;
      kl_sum += r.kl_sum;
      correct += r.correct;
      tokens += r.token_count;
    }

    EpochMetrics row;
    row.epoch = epoch;
    row.step = global_step;
    row.metrics.total = total_sum / n;
    row.metrics.recon = recon_sum / n;
    row.metrics.kl = kl_sum / n;
    row.metrics.kl_weight = weight;
    row.metrics.accuracy = tokens > 0 ? correct / static_cast<double>(tokens) : 0;
    row.metrics.perplexity =
        tokens > 0 ? std::exp(recon_sum / static_cast<double>(tokens)) : 1;
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    history.push_back(row);
    if (ctx.metrics_out != nullptr) {
      (*ctx.metrics_out) << metrics_to_json_line(row) << "\n" << std::flush;
    }
    if (ctx.progress != nullptr) {
      (*ctx.progress) << "epoch " << epoch << "/" << total_epochs
                      << "  total " << row.metrics.total << "  recon "
                      << row.metrics.recon << "  kl " << row.metrics.kl
                      << "  acc " << row.metrics.accuracy << "\n"
                      << std::flush;
    }

    const bool last = epoch + 1 >= total_epochs;
    if (!last && cfg.checkpoint_every > 0 && !ctx.checkpoint_path.empty() &&
        (epoch + 1 - start_epoch) % cfg.checkpoint_every == 0) {
      save_checkpoint(make_checkpoint(cfg, vocab, params, adam, global_step,
                                      epoch + 1, history),
                      ctx.checkpoint_path);
    }
  }
  return make_checkpoint(cfg, vocab, params, adam, global_step, total_epochs,
                         std::move(history));
}

template <typename S>
Checkpoint train_with(const TrainContext& ctx, const TrainingConfig& cfg,
                      const Vocabulary& vocab,
                      const std::vector<TokenSequence>& data) {
  ModelDims dims;
  dims.vocab = vocab.size();
  dims.embedding = cfg.embedding_dim;
  dims.hidden = cfg.hidden_size;
  dims.latent = cfg.z_dim;
  ModelParams<S> params =
      ModelParams<S>::init(dims, mix_seed(cfg.seed, kSeedParams));
  if (ctx.pretrained != nullptr) {
    if (static_cast<long>(ctx.pretrained->dim) != cfg.embedding_dim) {
      throw ConfigError("pretrained embeddings have dimension " +
                        std::to_string(ctx.pretrained->dim) +
                        ", config expects " +
                        std::to_string(cfg.embedding_dim));
    }
    EmbeddingMatrix matrix = build_embedding_matrix(
        vocab, *ctx.pretrained, mix_seed(cfg.seed, kSeedEmbedding));
    params.embedding = matrix.rows.template cast<S>();
  }
  params.embedding_trainable = !cfg.freeze_embeddings;
  AdamState<S> adam;
  adam.init_like(params.trainable());
  return run_training<S>(ctx, cfg, vocab, data, std::move(params),
                         std::move(adam), 0, cfg.epochs, 0, {});
}

}  // namespace

Checkpoint train(const TrainContext& ctx, const TrainingConfig& cfg) {
  cfg.validate();
  if (ctx.sentences.empty()) {
    throw ConfigError("training corpus is empty");
  }
  auto [train_sents, holdout] =
      holdout_split(ctx.sentences, cfg.holdout_fraction, cfg.seed);
  RequirementsCorpus corpus;
  corpus.entries = train_sents;
  Vocabulary vocab = build_vocab(corpus, static_cast<int>(cfg.num_words));
  std::vector<TokenSequence> data =
      encode_corpus(vocab, train_sents, cfg.max_tokens);
  if (data.empty()) {
    throw ConfigError("no training sentences within the length limit");
  }
  if (cfg.precision == "double") {
    return train_with<double>(ctx, cfg, vocab, data);
  }
  return train_with<float>(ctx, cfg, vocab, data);
}

Checkpoint resume_training(Checkpoint start, const TrainContext& ctx,
                           long total_epochs) {
  TrainingConfig cfg = start.config;
  cfg.epochs = total_epochs;
  cfg.validate();
  if (total_epochs <= start.epoch) {
    start.config = cfg;
    return start;
  }
  auto [train_sents, holdout] =
      holdout_split(ctx.sentences, cfg.holdout_fraction, cfg.seed);
  std::vector<TokenSequence> data =
      encode_corpus(start.vocab, train_sents, cfg.max_tokens);
  if (data.empty()) {
    throw ConfigError("no training sentences within the length limit");
  }
  if (cfg.precision == "double") {
    return run_training<double>(ctx, cfg, start.vocab, data,
                                cast_params<double>(start.params),
                                uncast_adam<double>(start.adam), start.epoch,
                                total_epochs, start.global_step,
                                std::move(start.history));
  }
  return run_training<float>(ctx, cfg, start.vocab, data,
                             std::move(start.params), std::move(start.adam),
                             start.epoch, total_epochs, start.global_step,
                             std::move(start.history));
}

Metrics evaluate(const Checkpoint& ckpt,
                 const std::vector<std::string>& sentences) {
  std::vector<TokenSequence> data =
      encode_corpus(ckpt.vocab, sentences, ckpt.config.max_tokens);
  if (data.empty()) {
    throw ConfigError("no sentences to evaluate within the length limit");
  }
  const std::size_t batch_size =
      static_cast<std::size_t>(ckpt.config.batch_size);

  double total_sum = 0, recon_sum = 0, kl_sum = 0, correct = 0;
  long tokens = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    std::vector<TokenSequence> seqs(data.begin() + static_cast<std::ptrdiff_t>(start),
                                    data.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<std::uint64_t> seq_seeds(seqs.size(), 0);
    Graph<float> g;
    ModelVars m = bind_model(g, ckpt.params);
    BatchElbo<float> r = batch_elbo(g, m, seqs, /*kl_weight=*/1.0,
                                    /*mc_samples=*/1, seq_seeds,
                                    /*word_dropout=*/0.0,
                                    /*deterministic=*/true);
    total_sum += static_cast<double>(g.value(r.loss)(0, 0)) *
                 static_cast<double>(seqs.size());
    recon_sum += r.recon_nll_sum;
    kl_sum += r.kl_sum;
    correct += r.correct;
    tokens += r.token_count;
  }

  const double n = static_cast<double>(data.size());
  Metrics m;
  m.total = total_sum / n;
  m.recon = recon_sum / n;
  m.kl = kl_sum / n;
  m.kl_weight = 1.0;
  m.accuracy = tokens > 0 ? correct / static_cast<double>(tokens) : 0;
  m.perplexity =
      tokens > 0 ? std::exp(recon_sum / static_cast<double>(tokens)) : 1;
  return m;
}

}  // namespace reqvae
