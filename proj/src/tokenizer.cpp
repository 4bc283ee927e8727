#include "reqvae/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <istream>
#include <ostream>
#include <sstream>

#include "reqvae/corpus.hpp"
#include "reqvae/errors.hpp"

namespace reqvae {

namespace {

const std::array<std::string, Vocabulary::kNumSpecials> kSpecialNames = {
    "<pad>", "<sos>", "<eos>", "<unk>"};

bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
         c == '\f';
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t start = i;
    while (i < text.size() && text[i] != ' ') ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

}  // namespace

std::string normalize(std::string_view text, std::string_view filter_set) {
  std::array<bool, 256> filtered{};
  for (unsigned char c : filter_set) filtered[c] = true;

  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (c < 0x80 && std::isupper(c)) c = static_cast<unsigned char>(std::tolower(c));
    if (filtered[c] || is_space_byte(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(c));
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const auto& name : kSpecialNames) {
    index_to_word_.push_back(name);
    counts_.push_back(0);
  }
}

int Vocabulary::index_of(std::string_view word) const {
  auto it = word_to_index_.find(std::string(word));
  return it == word_to_index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view word) const {
  return word_to_index_.contains(std::string(word));
}

const std::string& Vocabulary::word_at(int index) const {
  if (index < 0 || index >= size()) {
    throw FormatError("vocabulary index " + std::to_string(index) +
                      " out of range [0, " + std::to_string(size()) + ")");
  }
  return index_to_word_[static_cast<std::size_t>(index)];
}

std::vector<std::string> Vocabulary::words() const {
  return {index_to_word_.begin() + kNumSpecials, index_to_word_.end()};
}

Vocabulary build_vocab(const RequirementsCorpus& corpus, int num_words) {
  if (num_words < 2) {
    throw ConfigError("num_words must be >= 2, got " +
                      std::to_string(num_words));
  }
  if (corpus.entries.empty()) {
    throw ConfigError("cannot build a vocabulary from an empty corpus");
  }

  struct WordInfo {
    std::int64_t count = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, WordInfo> infos;
  std::size_t order = 0;
  for (const auto& entry : corpus.entries) {
    for (auto& word : split_words(normalize(entry))) {
      auto [it, inserted] = infos.try_emplace(std::move(word));
      if (inserted) it->second.first_seen = order++;
      ++it->second.count;
    }
  }

  std::vector<std::pair<std::string, WordInfo>> ranked(infos.begin(),
                                                       infos.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.first_seen < b.second.first_seen;
  });

  std::size_t keep = std::min(ranked.size(),
                              static_cast<std::size_t>(num_words - 1));
  Vocabulary vocab;
  vocab.num_words_ = num_words;
  for (std::size_t i = 0; i < keep; ++i) {
    int index = vocab.size();
    vocab.word_to_index_.emplace(ranked[i].first, index);
    vocab.index_to_word_.push_back(ranked[i].first);
    vocab.counts_.push_back(ranked[i].second.count);
  }
  return vocab;
}

TokenSequence encode(const Vocabulary& vocab, std::string_view sentence) {
  TokenSequence seq;
  std::string norm = normalize(sentence);
  seq.push_back(Vocabulary::kSos);
  for (const auto& word : split_words(norm)) {
    seq.push_back(vocab.index_of(word));
  }
  seq.push_back(Vocabulary::kEos);
  return seq;
}

std::string decode(const Vocabulary& vocab, const TokenSequence& seq) {
  std::string out;
  for (int index : seq) {
    if (index < 0 || index >= vocab.size()) {
      throw FormatError("cannot decode index " + std::to_string(index) +
                        ": out of range [0, " + std::to_string(vocab.size()) +
                        ")");
    }
    if (index == Vocabulary::kPad || index == Vocabulary::kSos ||
        index == Vocabulary::kEos) {
      continue;
    }
    if (!out.empty()) out.push_back(' ');
    out += vocab.word_at(index);
  }
  return out;
}

void save_vocab(const Vocabulary& vocab, std::ostream& out) {
  for (int i = 0; i < vocab.size(); ++i) {
    out << i << '\t' << vocab.word_at(i) << '\t' << vocab.count_at(i) << '\n';
  }
}

Vocabulary parse_vocab(std::istream& in) {
  Vocabulary vocab;
  std::string line;
  int line_no = 0;
  int expected_index = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string::npos ? std::string::npos
                                             : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      throw FormatError("vocabulary line " + std::to_string(line_no) +
                        ": expected index<TAB>word<TAB>count");
    }
    int index = 0;
    std::int64_t count = 0;
    try {
      index = std::stoi(line.substr(0, t1));
      count = std::stoll(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw FormatError("vocabulary line " + std::to_string(line_no) +
                        ": non-numeric index or count");
    }
    std::string word = line.substr(t1 + 1, t2 - t1 - 1);
    if (index != expected_index++) {
      throw FormatError("vocabulary line " + std::to_string(line_no) +
                        ": index " + std::to_string(index) +
                        " out of order");
    }
    if (index < Vocabulary::kNumSpecials) {
      if (word != kSpecialNames[static_cast<std::size_t>(index)]) {
        throw FormatError("vocabulary line " + std::to_string(line_no) +
                          ": expected special token " +
                          kSpecialNames[static_cast<std::size_t>(index)]);
      }
      continue;
    }
    vocab.word_to_index_.emplace(word, index);
    vocab.index_to_word_.push_back(std::move(word));
    vocab.counts_.push_back(count);
  }
  // The capacity cap is not stored in the text format; restore the tightest
  // value consistent with the kept words.
  vocab.num_words_ = vocab.kept_words() + 1;
  return vocab;
}

std::string vocab_to_string(const Vocabulary& vocab) {
  std::ostringstream out;
  save_vocab(vocab, out);
  return out.str();
}

Vocabulary vocab_from_string(const std::string& text) {
  std::istringstream in(text);
  return parse_vocab(in);
}

}  // namespace reqvae
