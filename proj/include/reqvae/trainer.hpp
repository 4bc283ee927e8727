// Minibatch training with KL-weight annealing and word dropout, epoch
// metrics, and self-contained binary checkpoints.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "reqvae/embeddings.hpp"
#include "reqvae/nn.hpp"
#include "reqvae/tokenizer.hpp"
#include "reqvae/vae.hpp"

namespace reqvae {

// Hyperparameters and reproducibility knobs. Everything that affects the
// numbers lives here; paths and I/O wiring stay with the caller.
struct TrainingConfig {
  long epochs = 100;
  long batch_size = 32;
  double lr = 1e-3;
  long z_dim = 16;
  long hidden_size = 128;
  long embedding_dim = 100;
  long num_words = 4000;      // vocabulary budget including specials
  long max_tokens = 60;       // corpus cleaning limit, in words
  long kl_warmup_steps = 2000;  // 0 disables annealing (weight fixed at 1)
  double word_dropout = 0.25;
  long mc_samples = 1;        // L in the objective's 1/L sum
  std::uint64_t seed = 0;
  std::string precision = "float";  // or "double"
  double grad_clip_norm = 5.0;      // 0 disables clipping
  bool freeze_embeddings = false;
  double holdout_fraction = 0.0;  // excluded from training, for eval
  long checkpoint_every = 0;      // epochs between periodic saves; 0 = off

  void validate() const;
};

// Strict flat-JSON codec: unknown keys are rejected by name, types checked.
TrainingConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const TrainingConfig& cfg);

// Loss/quality summary over a set of sentences. Loss values are per
// sentence (token NLL summed within a sentence, averaged across sentences);
// perplexity is per token.
struct Metrics {
  double total = 0;
  double recon = 0;
  double kl = 0;
  double kl_weight = 1;
  double accuracy = 0;
  double perplexity = 1;
};

struct EpochMetrics {
  long epoch = 0;  // 0-based
  long step = 0;   // optimizer steps completed at epoch end
  Metrics metrics;
  double wall_time_s = 0;  // since training start
};

// One line-delimited JSON record per epoch, fields epoch, step, total,
// recon, kl, kl_weight, accuracy, perplexity, wall_time_s.
std::string metrics_to_json_line(const EpochMetrics& row);
EpochMetrics metrics_from_json_line(const std::string& line);

// Linear KL annealing: min(1, step / warmup); warmup <= 0 disables the ramp.
double kl_weight_at(long step, long warmup);

// Shuffled index batches for one epoch, keyed by (seed, epoch). The last
// batch may be short.
std::vector<std::vector<std::size_t>> batch_order(std::size_t count,
                                                  std::size_t batch_size,
                                                  std::uint64_t seed,
                                                  long epoch);

// Full training state: enough to evaluate, generate, and resume exactly.
struct Checkpoint {
  std::uint32_t version = 1;
  TrainingConfig config;
  Vocabulary vocab;
  ModelParams<float> params;
  AdamState<float> adam;
  long global_step = 0;
  long epoch = 0;  // completed epochs
  std::vector<EpochMetrics> history;
};

// Versioned single-file binary format; parameters as little-endian 32-bit
// floats. Writes are atomic (temp file + rename). Truncated or
// version-mismatched files raise CheckpointError.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Training inputs besides the config: the cleaned corpus, optional
// pretrained word vectors, and optional output wiring.
struct TrainContext {
  std::vector<std::string> sentences;
  const EmbeddingTable* pretrained = nullptr;   // may be null
  std::ostream* metrics_out = nullptr;          // epoch JSON lines
  std::string checkpoint_path;                  // target of periodic saves
  std::ostream* progress = nullptr;             // human-readable epoch lines
};

// Trains from scratch: builds the vocabulary, initializes parameters from
// config.seed, and runs config.epochs epochs. Deterministic given (corpus,
// config). Non-finite losses abort with NumericError naming epoch, batch,
// and step.
Checkpoint train(const TrainContext& ctx, const TrainingConfig& cfg);

// Continues a run to total_epochs using the checkpoint's config, vocabulary,
// parameters, and optimizer state. With the same corpus, the loss sequence
// continues exactly as if the original run had never stopped.
Checkpoint resume_training(Checkpoint start, const TrainContext& ctx,
                           long total_epochs);

// Deterministic metrics (z = posterior mean, no dropout, kl_weight = 1) over
// the given sentences; parameters are not mutated. Sentences that encode
// beyond the config's length limit are skipped, like in training.
Metrics evaluate(const Checkpoint& ckpt,
                 const std::vector<std::string>& sentences);

// The training subset of a corpus under the config's holdout split: element
// `first` is the training partition, `second` the holdout.
std::pair<std::vector<std::string>, std::vector<std::string>> holdout_split(
    const std::vector<std::string>& sentences, double fraction,
    std::uint64_t seed);

}  // namespace reqvae
