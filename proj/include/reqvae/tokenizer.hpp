// Frequency-ranked vocabulary and sentence <-> integer-sequence conversion.
//
// Indices 0..3 are reserved: PAD=0, SOS=1, EOS=2, UNK=3. Corpus words occupy
// indices 4.. in descending frequency order (ties broken by first occurrence
// in the corpus) and at most (num_words - 1) of them are kept. Words that
// fall outside the kept set map to UNK at encode time.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace reqvae {

struct RequirementsCorpus;

// One sentence as token indices. Sequences produced by encode() begin with
// SOS and end with EOS; PAD appears only as trailing padding added by
// batching.
using TokenSequence = std::vector<int>;

// Characters replaced by a space during normalization: ASCII punctuation
// except the apostrophe, plus tab and newline.
inline constexpr std::string_view kDefaultFilter =
    "!\"#$%&()*+,-./:;<=>?@[\\]^_`{|}~\t\n";

// Lowercase, strip filtered characters, collapse whitespace runs, trim.
std::string normalize(std::string_view text,
                      std::string_view filter_set = kDefaultFilter);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecials = 4;

  Vocabulary();

  // Total number of indices (specials + kept corpus words).
  int size() const { return static_cast<int>(index_to_word_.size()); }
  int kept_words() const { return size() - kNumSpecials; }
  int num_words() const { return num_words_; }

  // Index of a word, or UNK if it is not in the kept set.
  int index_of(std::string_view word) const;
  const std::string& word_at(int index) const;
  std::int64_t count_at(int index) const { return counts_[index]; }
  bool contains(std::string_view word) const;

  // Corpus words in index order (excludes specials).
  std::vector<std::string> words() const;

  friend Vocabulary build_vocab(const RequirementsCorpus& corpus,
                                int num_words);
  friend Vocabulary parse_vocab(std::istream& in);

 private:
  std::unordered_map<std::string, int> word_to_index_;
  std::vector<std::string> index_to_word_;
  std::vector<std::int64_t> counts_;
  int num_words_ = 0;
};

// Count words over normalized entries and keep the (num_words - 1) most
// frequent. Throws ConfigError if num_words < 2 or the corpus is empty.
Vocabulary build_vocab(const RequirementsCorpus& corpus, int num_words);

// normalize, split on spaces, map words to indices (UNK for unknown),
// wrap in SOS/EOS.
TokenSequence encode(const Vocabulary& vocab, std::string_view sentence);

// Inverse of encode: words joined by single spaces, SOS/EOS/PAD omitted,
// UNK rendered as "<unk>". Throws FormatError on an out-of-range index.
std::string decode(const Vocabulary& vocab, const TokenSequence& seq);

// Serialization: one "index<TAB>word<TAB>count" line per entry, specials
// first. This format is part of the checkpoint contract.
void save_vocab(const Vocabulary& vocab, std::ostream& out);
Vocabulary parse_vocab(std::istream& in);
std::string vocab_to_string(const Vocabulary& vocab);
Vocabulary vocab_from_string(const std::string& text);

}  // namespace reqvae
