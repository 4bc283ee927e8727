// Command-line front end: prepare -> train -> generate / reconstruct /
// interpolate / eval / inspect.
//
// Exit codes: 0 success, 1 usage/config/IO error, 2 numeric failure. All
// diagnostics go to standard error; data goes to standard output or files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "reqvae/corpus.hpp"
#include "reqvae/embeddings.hpp"
#include "reqvae/errors.hpp"
#include "reqvae/generator.hpp"
#include "reqvae/tokenizer.hpp"
#include "reqvae/trainer.hpp"

namespace {

using namespace reqvae;

void require_readable(const std::string& path, const std::string& flag) {
  if (!std::filesystem::exists(path)) {
    throw IoError(flag + ": no such file '" + path + "'");
  }
}

void require_writable_dir(const std::string& path, const std::string& flag) {
  const std::filesystem::path parent =
      std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw IoError(flag + ": directory '" + parent.string() +
                  "' does not exist");
  }
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw IoError("cannot open '" + path + "'");
  }
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

std::string format_alpha(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", alpha);
  return buf;
}

// Training flags are staged next to their CLI::Option handles so that
// explicitly-passed flags override config-file values while untouched flags
// keep the file's (or the built-in) defaults.
struct TrainFlags {
  TrainingConfig staged;
  CLI::Option* epochs = nullptr;
  CLI::Option* batch_size = nullptr;
  CLI::Option* lr = nullptr;
  CLI::Option* z_dim = nullptr;
  CLI::Option* hidden_size = nullptr;
  CLI::Option* embedding_dim = nullptr;
  CLI::Option* num_words = nullptr;
  CLI::Option* max_tokens = nullptr;
  CLI::Option* kl_warmup_steps = nullptr;
  CLI::Option* word_dropout = nullptr;
  CLI::Option* mc_samples = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* precision = nullptr;
  CLI::Option* grad_clip_norm = nullptr;
  CLI::Option* freeze_embeddings = nullptr;
  CLI::Option* holdout_fraction = nullptr;
  CLI::Option* checkpoint_every = nullptr;

  void attach(CLI::App& cmd) {
    epochs = cmd.add_option("--epochs", staged.epochs, "Training epochs")
                 ->capture_default_str();
    batch_size =
        cmd.add_option("--batch-size", staged.batch_size, "Minibatch size")
            ->capture_default_str();
    lr = cmd.add_option("--lr", staged.lr, "Adam learning rate")
             ->capture_default_str();
    z_dim = cmd.add_option("--z-dim", staged.z_dim, "Latent dimension")
                ->capture_default_str();
    hidden_size =
        cmd.add_option("--hidden-size", staged.hidden_size, "LSTM state size")
            ->capture_default_str();
    embedding_dim = cmd.add_option("--embedding-dim", staged.embedding_dim,
                                   "Word-vector width")
                        ->capture_default_str();
    num_words = cmd.add_option("--num-words", staged.num_words,
                               "Vocabulary budget including specials")
                    ->capture_default_str();
    max_tokens = cmd.add_option("--max-tokens", staged.max_tokens,
                                "Longest sentence kept, in words")
                     ->capture_default_str();
    kl_warmup_steps =
        cmd.add_option("--kl-warmup-steps", staged.kl_warmup_steps,
                       "Linear KL annealing horizon; 0 disables")
            ->capture_default_str();
    word_dropout = cmd.add_option("--word-dropout", staged.word_dropout,
                                  "Decoder input UNK-replacement probability")
                       ->capture_default_str();
    mc_samples = cmd.add_option("--mc-samples", staged.mc_samples,
                                "Monte-Carlo samples per sentence (L)")
                     ->capture_default_str();
    seed = cmd.add_option("--seed", staged.seed, "Run seed")
               ->capture_default_str();
    precision = cmd.add_option("--precision", staged.precision,
                               "Training scalar type: float or double")
                    ->capture_default_str();
    grad_clip_norm =
        cmd.add_option("--grad-clip-norm", staged.grad_clip_norm,
                       "Global gradient-norm limit; 0 disables")
            ->capture_default_str();
    freeze_embeddings =
        cmd.add_flag("--freeze-embeddings", staged.freeze_embeddings,
                     "Keep the embedding matrix fixed during training");
    holdout_fraction =
        cmd.add_option("--holdout-fraction", staged.holdout_fraction,
                       "Fraction of the corpus excluded from training")
            ->capture_default_str();
    checkpoint_every =
        cmd.add_option("--checkpoint-every", staged.checkpoint_every,
                       "Epochs between periodic checkpoint saves; 0 disables")
            ->capture_default_str();
  }

  TrainingConfig merge(const std::optional<std::string>& config_path) const {
    TrainingConfig cfg;
    if (config_path) {
      cfg = config_from_json_text(read_file(*config_path));
    }
    if (epochs->count() > 0) cfg.epochs = staged.epochs;
    if (batch_size->count() > 0) cfg.batch_size = staged.batch_size;
    if (lr->count() > 0) cfg.lr = staged.lr;
    if (z_dim->count() > 0) cfg.z_dim = staged.z_dim;
    if (hidden_size->count() > 0) cfg.hidden_size = staged.hidden_size;
    if (embedding_dim->count() > 0) cfg.embedding_dim = staged.embedding_dim;
    if (num_words->count() > 0) cfg.num_words = staged.num_words;
    if (max_tokens->count() > 0) cfg.max_tokens = staged.max_tokens;
    if (kl_warmup_steps->count() > 0) {
      cfg.kl_warmup_steps = staged.kl_warmup_steps;
    }
    if (word_dropout->count() > 0) cfg.word_dropout = staged.word_dropout;
    if (mc_samples->count() > 0) cfg.mc_samples = staged.mc_samples;
    if (seed->count() > 0) cfg.seed = staged.seed;
    if (precision->count() > 0) cfg.precision = staged.precision;
    if (grad_clip_norm->count() > 0) {
      cfg.grad_clip_norm = staged.grad_clip_norm;
    }
    if (freeze_embeddings->count() > 0) {
      cfg.freeze_embeddings = staged.freeze_embeddings;
    }
    if (holdout_fraction->count() > 0) {
      cfg.holdout_fraction = staged.holdout_fraction;
    }
    if (checkpoint_every->count() > 0) {
      cfg.checkpoint_every = staged.checkpoint_every;
    }
    return cfg;
  }
};

int cmd_prepare(const std::string& in, const std::string& out,
                long max_tokens) {
  require_readable(in, "--in");
  require_writable_dir(out, "--out");
  RequirementsCorpus corpus = load_corpus(in);
  RequirementsCorpus cleaned = clean_corpus(corpus, max_tokens);
  save_corpus(cleaned, out);
  const CorpusStats stats = corpus_stats(cleaned);
  std::cout << "{\"entries\":" << stats.entry_count
            << ",\"mean_tokens\":" << stats.mean_token_length
            << ",\"max_tokens\":" << stats.max_token_length
            << ",\"distinct_words\":" << stats.distinct_word_count << "}\n";
  return 0;
}

int cmd_train(const TrainFlags& flags,
              const std::optional<std::string>& config_path,
              const std::string& corpus_path,
              const std::optional<std::string>& embeddings_path,
              const std::string& checkpoint_path,
              const std::optional<std::string>& metrics_path,
              const std::optional<std::string>& resume_path, bool quiet) {
  require_readable(corpus_path, "--corpus");
  if (config_path) require_readable(*config_path, "--config");
  if (embeddings_path) require_readable(*embeddings_path, "--embeddings");
  if (resume_path) require_readable(*resume_path, "--resume");
  require_writable_dir(checkpoint_path, "--checkpoint");
  if (metrics_path) require_writable_dir(*metrics_path, "--metrics");

  TrainingConfig cfg = flags.merge(config_path);
  cfg.validate();

  RequirementsCorpus corpus = load_corpus(corpus_path);
  EmbeddingTable table;
  TrainContext ctx;
  ctx.sentences = corpus.entries;
  if (embeddings_path) {
    table = load_embeddings(*embeddings_path, cfg.embedding_dim);
    ctx.pretrained = &table;
  }
  std::ofstream metrics_file;
  if (metrics_path) {
    metrics_file.open(*metrics_path, std::ios::trunc);
    if (!metrics_file) {
      throw IoError("--metrics: cannot write '" + *metrics_path + "'");
    }
    ctx.metrics_out = &metrics_file;
  }
  if (!quiet) ctx.progress = &std::cerr;
  ctx.checkpoint_path = checkpoint_path;

  std::cerr << "seed: " << cfg.seed << "\n";
  Checkpoint ckpt;
  if (resume_path) {
    Checkpoint start = load_checkpoint(*resume_path);
    ckpt = resume_training(std::move(start), ctx, cfg.epochs);
  } else {
    ckpt = train(ctx, cfg);
  }
  save_checkpoint(ckpt, checkpoint_path);
  std::cerr << "checkpoint written to " << checkpoint_path << "\n";
  return 0;
}

int cmd_generate(const std::string& checkpoint_path, long n,
                 double temperature, long max_len, std::uint64_t seed) {
  require_readable(checkpoint_path, "--checkpoint");
  GenerationRequest req;
  req.mode = GenerationMode::kSample;
  req.temperature = temperature;
  req.max_len = max_len;
  req.seed = seed;
  req.validate();
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  std::cerr << "seed: " << seed << "\n";
  for (const std::string& line :
       sample_prior(ckpt.params, ckpt.vocab, n, temperature, seed, max_len)) {
    std::cout << line << "\n";
  }
  return 0;
}

int cmd_reconstruct(const std::string& checkpoint_path,
                    const std::optional<std::string>& sentence,
                    const std::optional<std::string>& in_path, long max_len) {
  require_readable(checkpoint_path, "--checkpoint");
  if (!sentence && !in_path) {
    throw ConfigError("reconstruct needs --sentence or --in");
  }
  if (in_path) require_readable(*in_path, "--in");
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  std::vector<std::string> inputs;
  if (sentence) inputs.push_back(*sentence);
  if (in_path) {
    RequirementsCorpus corpus = load_corpus(*in_path);
    inputs.insert(inputs.end(), corpus.entries.begin(), corpus.entries.end());
  }
  for (const std::string& s : inputs) {
    std::cout << reconstruct(ckpt.params, ckpt.vocab, s, max_len) << "\n";
  }
  return 0;
}

int cmd_interpolate(const std::string& checkpoint_path, const std::string& a,
                    const std::string& b, long steps, long max_len) {
  require_readable(checkpoint_path, "--checkpoint");
  GenerationRequest req;
  req.mode = GenerationMode::kInterpolate;
  req.steps = steps;
  req.max_len = max_len;
  req.validate();
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  for (const auto& [alpha, line] :
       interpolate(ckpt.params, ckpt.vocab, a, b, steps, max_len)) {
    std::cout << "alpha=" << format_alpha(alpha) << "\t" << line << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint_path,
             const std::string& corpus_path) {
  require_readable(checkpoint_path, "--checkpoint");
  require_readable(corpus_path, "--corpus");
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  RequirementsCorpus corpus = load_corpus(corpus_path);
  const Metrics m = evaluate(ckpt, corpus.entries);
  EpochMetrics row;
  row.epoch = ckpt.epoch;
  row.step = ckpt.global_step;
  row.metrics = m;
  std::cout << metrics_to_json_line(row) << "\n";
  return 0;
}

int cmd_inspect(const std::string& checkpoint_path, bool dump_vocab) {
  require_readable(checkpoint_path, "--checkpoint");
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  std::cout << "version: " << ckpt.version << "\n"
            << "epoch: " << ckpt.epoch << "\n"
            << "step: " << ckpt.global_step << "\n"
            << "vocabulary: " << ckpt.vocab.size() << " entries ("
            << ckpt.vocab.kept_words() << " corpus words)\n"
            << "config: " << config_to_json_text(ckpt.config) << "\n"
            << "history: " << ckpt.history.size() << " epoch records\n";
  if (!ckpt.history.empty()) {
    std::cout << "last: " << metrics_to_json_line(ckpt.history.back()) << "\n";
  }
  if (dump_vocab) {
    std::cout << vocab_to_string(ckpt.vocab);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sentence variational autoencoder for requirements text"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand(
      "prepare", "Clean a raw requirements corpus for training");
  std::string prep_in, prep_out;
  long prep_max_tokens = kDefaultMaxTokens;
  prepare->add_option("--in", prep_in, "Raw corpus, one entry per line")
      ->required();
  prepare->add_option("--out", prep_out, "Cleaned corpus output path")
      ->required();
  prepare
      ->add_option("--max-tokens", prep_max_tokens,
                   "Drop sentences longer than this many words")
      ->capture_default_str();

  // train
  auto* train_cmd =
      app.add_subcommand("train", "Train a model on a prepared corpus");
  std::string train_corpus, train_checkpoint;
  std::optional<std::string> train_config, train_embeddings, train_metrics,
      train_resume;
  bool train_quiet = false;
  train_cmd->add_option("--corpus", train_corpus, "Prepared corpus path")
      ->required();
  train_cmd
      ->add_option("--checkpoint", train_checkpoint, "Checkpoint output path")
      ->required();
  train_cmd->add_option("--config", train_config,
                        "JSON config file; flags override its values");
  train_cmd->add_option("--embeddings", train_embeddings,
                        "Pretrained word vectors (text or .gz)");
  train_cmd->add_option("--metrics", train_metrics,
                        "Epoch metrics log output path (JSON lines)");
  train_cmd->add_option("--resume", train_resume,
                        "Continue training from this checkpoint");
  train_cmd->add_flag("--quiet", train_quiet, "Suppress progress lines");
  TrainFlags flags;
  flags.attach(*train_cmd);

  // generate
  auto* generate =
      app.add_subcommand("generate", "Sample sentences from the prior");
  std::string gen_checkpoint;
  long gen_n = 10, gen_max_len = 25;
  double gen_temperature = 0;
  std::uint64_t gen_seed = 0;
  generate->add_option("--checkpoint", gen_checkpoint, "Trained checkpoint")
      ->required();
  generate->add_option("--n", gen_n, "Number of samples")
      ->capture_default_str();
  generate
      ->add_option("--temperature", gen_temperature,
                   "Sampling temperature; 0 = greedy")
      ->capture_default_str();
  generate->add_option("--max-len", gen_max_len, "Longest generated sentence")
      ->capture_default_str();
  generate->add_option("--seed", gen_seed, "Sampling seed")
      ->capture_default_str();

  // reconstruct
  auto* reconstruct_cmd = app.add_subcommand(
      "reconstruct", "Encode sentences and decode their posterior means");
  std::string rec_checkpoint;
  std::optional<std::string> rec_sentence, rec_in;
  long rec_max_len = 25;
  reconstruct_cmd
      ->add_option("--checkpoint", rec_checkpoint, "Trained checkpoint")
      ->required();
  reconstruct_cmd->add_option("--sentence", rec_sentence,
                              "Single sentence to round-trip");
  reconstruct_cmd->add_option("--in", rec_in,
                              "File of sentences, one per line");
  reconstruct_cmd
      ->add_option("--max-len", rec_max_len, "Longest generated sentence")
      ->capture_default_str();

  // interpolate
  auto* interpolate_cmd = app.add_subcommand(
      "interpolate", "Decode points between two sentences' latent codes");
  std::string int_checkpoint, int_a, int_b;
  long int_steps = 8, int_max_len = 25;
  interpolate_cmd
      ->add_option("--checkpoint", int_checkpoint, "Trained checkpoint")
      ->required();
  interpolate_cmd->add_option("--a", int_a, "First sentence")->required();
  interpolate_cmd->add_option("--b", int_b, "Second sentence")->required();
  interpolate_cmd
      ->add_option("--steps", int_steps, "Interpolation points incl. endpoints")
      ->capture_default_str();
  interpolate_cmd
      ->add_option("--max-len", int_max_len, "Longest generated sentence")
      ->capture_default_str();

  // eval
  auto* eval_cmd =
      app.add_subcommand("eval", "Deterministic metrics over a corpus");
  std::string eval_checkpoint, eval_corpus;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Trained checkpoint")
      ->required();
  eval_cmd->add_option("--corpus", eval_corpus, "Corpus to evaluate")
      ->required();

  // inspect
  auto* inspect =
      app.add_subcommand("inspect", "Print checkpoint metadata");
  std::string ins_checkpoint;
  bool ins_vocab = false;
  inspect->add_option("--checkpoint", ins_checkpoint, "Checkpoint to inspect")
      ->required();
  inspect->add_flag("--vocab", ins_vocab, "Also dump the vocabulary table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) {
      return cmd_prepare(prep_in, prep_out, prep_max_tokens);
    }
    if (train_cmd->parsed()) {
      return cmd_train(flags, train_config, train_corpus, train_embeddings,
                       train_checkpoint, train_metrics, train_resume,
                       train_quiet);
    }
    if (generate->parsed()) {
      return cmd_generate(gen_checkpoint, gen_n, gen_temperature, gen_max_len,
                          gen_seed);
    }
    if (reconstruct_cmd->parsed()) {
      return cmd_reconstruct(rec_checkpoint, rec_sentence, rec_in,
                             rec_max_len);
    }
    if (interpolate_cmd->parsed()) {
      return cmd_interpolate(int_checkpoint, int_a, int_b, int_steps,
                             int_max_len);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(eval_checkpoint, eval_corpus);
    }
    if (inspect->parsed()) {
      return cmd_inspect(ins_checkpoint, ins_vocab);
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
