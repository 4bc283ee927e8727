#include "reqvae/embeddings.hpp"

#include <zlib.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "reqvae/errors.hpp"
#include "reqvae/rng.hpp"
#include "reqvae/tokenizer.hpp"

namespace reqvae {

namespace {

std::string read_plain(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("error reading embedding file: " + path.string());
  return buf.str();
}

std::string read_gzip(const std::filesystem::path& path) {
  gzFile gz = gzopen(path.string().c_str(), "rb");
  if (gz == nullptr) {
    throw IoError("cannot open gzip embedding file: " + path.string());
  }
  std::string out;
  char buf[1 << 16];
  int n;
  while ((n = gzread(gz, buf, sizeof(buf))) > 0) {
    out.append(buf, static_cast<std::size_t>(n));
  }
  bool ok = n == 0;
  gzclose(gz);
  if (!ok) throw IoError("error decompressing embedding file: " + path.string());
  return out;
}

}  // namespace

EmbeddingTable parse_embeddings(const std::string& text, int dim,
                                const std::string& source_name) {
  if (dim <= 0) throw ConfigError("embedding dimension must be positive");
  EmbeddingTable table;
  table.dim = dim;

  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::size_t space = line.find(' ');
    if (space == std::string_view::npos || space == 0) {
      throw FormatError(source_name + ":" + std::to_string(line_no) +
                        ": expected \"word v1 ... v" + std::to_string(dim) +
                        "\"");
    }
    std::string word(line.substr(0, space));

    std::vector<float> vec;
    vec.reserve(static_cast<std::size_t>(dim));
    std::size_t i = space;
    while (i < line.size()) {
      while (i < line.size() && line[i] == ' ') ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ') ++j;
      float value = 0.0f;
      auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + j, value);
      if (ec != std::errc{} || ptr != line.data() + j || !std::isfinite(value)) {
        throw FormatError(source_name + ":" + std::to_string(line_no) +
                          ": non-numeric component \"" +
                          std::string(line.substr(i, j - i)) + "\"");
      }
      vec.push_back(value);
      i = j;
    }
    if (vec.size() != static_cast<std::size_t>(dim)) {
      throw FormatError(source_name + ":" + std::to_string(line_no) + ": " +
                        std::to_string(vec.size()) + " components, expected " +
                        std::to_string(dim));
    }
    table.vectors.try_emplace(std::move(word), std::move(vec));
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, int dim) {
  std::string text = path.extension() == ".gz" ? read_gzip(path)
                                               : read_plain(path);
  return parse_embeddings(text, dim, path.string());
}

EmbeddingMatrix build_embedding_matrix(const Vocabulary& vocab,
                                       const EmbeddingTable& table,
                                       std::uint64_t seed) {
  const int dim = table.dim;
  const int size = vocab.size();
  EmbeddingMatrix matrix;
  matrix.rows = Eigen::MatrixXf::Zero(size, dim);

  Rng rng(seed);
  // Row order is fixed so that equal seeds give equal matrices. Row 0 (PAD)
  // stays zero and consumes no draws.
  for (int i = 1; i < size; ++i) {
    const std::vector<float>* vec = nullptr;
    if (i >= Vocabulary::kNumSpecials) {
      auto it = table.vectors.find(vocab.word_at(i));
      if (it != table.vectors.end()) vec = &it->second;
    }
    if (vec != nullptr) {
      for (int d = 0; d < dim; ++d) matrix.rows(i, d) = (*vec)[static_cast<std::size_t>(d)];
      ++matrix.matched_words;
    } else {
      for (int d = 0; d < dim; ++d) {
        matrix.rows(i, d) = static_cast<float>(rng.uniform(-0.05, 0.05));
      }
    }
  }
  return matrix;
}

}  // namespace reqvae
