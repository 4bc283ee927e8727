// GloVe text-format embedding loading and embedding-matrix assembly.
//
// Input format: one line per word, "word v1 v2 ... v_dim", space-separated
// decimals. Paths ending in ".gz" are decompressed transparently.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace reqvae {

class Vocabulary;

struct EmbeddingTable {
  int dim = 0;
  std::unordered_map<std::string, std::vector<float>> vectors;
};

// Row layout: vocab_size x dim, one row per vocabulary index. Row 0 (PAD)
// is all zeros; rows of words found in the table are exact copies; rows for
// SOS/EOS/UNK and out-of-table words are seeded uniform draws in
// [-0.05, 0.05].
struct EmbeddingMatrix {
  Eigen::MatrixXf rows;
  bool trainable = true;
  int matched_words = 0;  // vocabulary words found in the table

  double coverage(int vocab_words) const {
    return vocab_words > 0
               ? static_cast<double>(matched_words) / vocab_words
               : 0.0;
  }
};

// Throws FormatError (naming the line) on a wrong component count or a
// non-numeric / non-finite component; IoError if the file cannot be read.
// Duplicate words keep the first occurrence.
EmbeddingTable load_embeddings(const std::filesystem::path& path, int dim);

EmbeddingTable parse_embeddings(const std::string& text, int dim,
                                const std::string& source_name = "<memory>");

EmbeddingMatrix build_embedding_matrix(const Vocabulary& vocab,
                                       const EmbeddingTable& table,
                                       std::uint64_t seed);

}  // namespace reqvae
