// Plain-text requirements corpus: loading, cleaning, statistics.
//
// A corpus file is UTF-8 text with one requirement per line (LF or CRLF).
// Cleaning splits multi-sentence entries, removes duplicates under
// normalization, and drops over-long entries; it is idempotent.
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace reqvae {

struct RequirementsCorpus {
  std::vector<std::string> entries;  // non-blank, trimmed
  std::string source_path;
};

struct CorpusStats {
  std::size_t entry_count = 0;
  double mean_token_length = 0.0;  // whitespace-split words per entry
  std::size_t distinct_word_count = 0;
  std::size_t max_token_length = 0;
};

inline constexpr int kDefaultMaxTokens = 60;

// Throws IoError if the file cannot be read and EncodingError (with the
// byte offset) if it is not valid UTF-8.
RequirementsCorpus load_corpus(const std::filesystem::path& path);

RequirementsCorpus corpus_from_string(std::string_view text,
                                      std::string source_name = "<memory>");

// Split an entry at sentence boundaries: a period followed by whitespace and
// an uppercase ASCII letter. The period stays with the left fragment.
std::vector<std::string> split_sentences(const std::string& entry);

// Split multi-sentence entries, drop duplicates (first occurrence wins,
// equality under normalize()), drop entries with more than max_tokens
// whitespace-separated tokens. Order is otherwise preserved.
RequirementsCorpus clean_corpus(const RequirementsCorpus& corpus,
                                int max_tokens = kDefaultMaxTokens);

CorpusStats corpus_stats(const RequirementsCorpus& corpus);

// One entry per line; written atomically (temp file + rename).
void save_corpus(const RequirementsCorpus& corpus,
                 const std::filesystem::path& path);

}  // namespace reqvae
