#include "reqvae/corpus.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "reqvae/errors.hpp"
#include "reqvae/tokenizer.hpp"

namespace reqvae {

namespace {

// Returns the byte offset of the first invalid UTF-8 byte, or npos.
std::size_t find_invalid_utf8(std::string_view text) {
  std::size_t i = 0;
  const auto bad = [&](std::size_t at) { return at; };
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (c < 0x80) {
      ++i;
      continue;
    }
    int extra;
    std::uint32_t cp;
    if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1Fu;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0Fu;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07u;
    } else {
      return bad(i);
    }
    if (i + static_cast<std::size_t>(extra) >= text.size()) return bad(i);
    for (int k = 1; k <= extra; ++k) {
      unsigned char cc = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
      if ((cc & 0xC0) != 0x80) return bad(i);
      cp = (cp << 6) | (cc & 0x3Fu);
    }
    // Overlong encodings, surrogates, out-of-range code points.
    static constexpr std::uint32_t kMin[4] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      return bad(i);
    }
    i += static_cast<std::size_t>(extra) + 1;
  }
  return std::string::npos;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::size_t count_tokens(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char ch : s) {
    bool space = std::isspace(static_cast<unsigned char>(ch)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

}  // namespace

RequirementsCorpus corpus_from_string(std::string_view text,
                                      std::string source_name) {
  if (std::size_t off = find_invalid_utf8(text); off != std::string::npos) {
    throw EncodingError(source_name + ": invalid UTF-8 at byte offset " +
                            std::to_string(off),
                        off);
  }
  RequirementsCorpus corpus;
  corpus.source_path = std::move(source_name);
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    std::string_view line = end == std::string::npos
                                ? text.substr(start)
                                : text.substr(start, end - start);
    if (start == text.size() && end == std::string::npos) break;
    std::string entry = trim(line);
    if (!entry.empty()) corpus.entries.push_back(std::move(entry));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return corpus;
}

RequirementsCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("error reading corpus file: " + path.string());
  return corpus_from_string(buf.str(), path.string());
}

std::vector<std::string> split_sentences(const std::string& entry) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < entry.size()) {
    if (entry[i] == '.') {
      std::size_t j = i + 1;
      while (j < entry.size() &&
             std::isspace(static_cast<unsigned char>(entry[j]))) {
        ++j;
      }
      if (j > i + 1 && j < entry.size() &&
          std::isupper(static_cast<unsigned char>(entry[j]))) {
        parts.push_back(entry.substr(start, i + 1 - start));
        start = j;
        i = j;
        continue;
      }
    }
    ++i;
  }
  std::string tail = trim(std::string_view(entry).substr(start));
  if (!tail.empty()) parts.push_back(std::move(tail));
  return parts;
}

RequirementsCorpus clean_corpus(const RequirementsCorpus& corpus,
                                int max_tokens) {
  RequirementsCorpus out;
  out.source_path = corpus.source_path;
  std::unordered_set<std::string> seen;
  for (const auto& entry : corpus.entries) {
    for (auto& part : split_sentences(entry)) {
      if (count_tokens(part) > static_cast<std::size_t>(max_tokens)) continue;
      if (!seen.insert(normalize(part)).second) continue;
      out.entries.push_back(std::move(part));
    }
  }
  return out;
}

CorpusStats corpus_stats(const RequirementsCorpus& corpus) {
  CorpusStats stats;
  stats.entry_count = corpus.entries.size();
  if (stats.entry_count == 0) return stats;
  std::size_t total = 0;
  std::unordered_set<std::string> distinct;
  for (const auto& entry : corpus.entries) {
    std::size_t n = count_tokens(entry);
    total += n;
    stats.max_token_length = std::max(stats.max_token_length, n);
    std::istringstream words(normalize(entry));
    std::string w;
    while (words >> w) distinct.insert(w);
  }
  stats.mean_token_length =
      static_cast<double>(total) / static_cast<double>(stats.entry_count);
  stats.distinct_word_count = distinct.size();
  return stats;
}

void save_corpus(const RequirementsCorpus& corpus,
                 const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write corpus file: " + tmp.string());
    for (const auto& entry : corpus.entries) out << entry << '\n';
    out.flush();
    if (!out) throw IoError("error writing corpus file: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace reqvae
