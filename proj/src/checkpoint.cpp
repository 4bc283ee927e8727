// Checkpoint binary format (version 1), little-endian throughout:
//
//   "RVCK"  u32 version
//   u64 len, config JSON          u64 len, vocabulary text
//   u32 count, then per parameter:
//       u64 len, name   u32 rows  u32 cols   rows*cols f32 (column-major)
//   u64 adam step counter
//   u32 count, then per trainable parameter: m block, v block (same layout)
//   i64 global_step   i64 epoch
//   u64 len, history JSON (array of epoch records)
//   "KCVR"
//
// Loads validate both magics, the version, and every name/shape against the
// model layout implied by the embedded config, so a truncated or mismatched
// file fails loudly instead of producing a half-initialized model.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "reqvae/errors.hpp"
#include "reqvae/trainer.hpp"

namespace reqvae {
namespace {

constexpr char kMagic[4] = {'R', 'V', 'C', 'K'};
constexpr char kTrailer[4] = {'K', 'C', 'V', 'R'};

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffull));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f32(std::string& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

void put_bytes(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out.append(s);
}

void put_block(std::string& out, const std::string& name,
               const Mat<float>& m) {
  put_bytes(out, name);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  const float* data = m.data();  // Eigen default storage is column-major
  for (Eigen::Index i = 0; i < m.size(); ++i) put_f32(out, data[i]);
}

class Reader {
 public:
  Reader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | static_cast<std::uint8_t>(data_[pos_ + i]);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }

  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }

  std::string bytes() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void magic(const char (&expect)[4], const char* where) {
    need(4);
    if (data_.compare(pos_, 4, expect, 4) != 0) {
      throw CheckpointError(path_ + ": bad " + where + " marker");
    }
    pos_ += 4;
  }

  Mat<float> block(const std::string& expect_name) {
    const std::string name = bytes();
    if (name != expect_name) {
      throw CheckpointError(path_ + ": parameter '" + name +
                            "' where '" + expect_name + "' was expected");
    }
    const std::uint32_t rows = u32();
    const std::uint32_t cols = u32();
    Mat<float> m(rows, cols);
    need(std::uint64_t{4} * rows * cols);
    float* data = m.data();
    for (Eigen::Index i = 0; i < m.size(); ++i) data[i] = f32();
    return m;
  }

  void done() {
    if (pos_ != data_.size()) {
      throw CheckpointError(path_ + ": trailing bytes after checkpoint");
    }
  }

 private:
  void need(std::uint64_t n) {
    if (pos_ + n > data_.size()) {
      throw CheckpointError(path_ + ": truncated checkpoint");
    }
  }

  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string history_to_json(const std::vector<EpochMetrics>& history) {
  nlohmann::json arr = nlohmann::json::array();
  for (const EpochMetrics& row : history) {
    arr.push_back(nlohmann::json::parse(metrics_to_json_line(row)));
  }
  return arr.dump();
}

std::vector<EpochMetrics> history_from_json(const std::string& text,
                                            const std::string& path) {
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path + ": bad history block: " + e.what());
  }
  if (!arr.is_array()) {
    throw CheckpointError(path + ": history block is not an array");
  }
  std::vector<EpochMetrics> history;
  history.reserve(arr.size());
  for (const nlohmann::json& row : arr) {
    history.push_back(metrics_from_json_line(row.dump()));
  }
  return history;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  Checkpoint& mut = const_cast<Checkpoint&>(ckpt);  // visit() is non-const
  std::vector<ParamRef<float>> all = mut.params.visit();
  std::vector<ParamRef<float>> trainable = mut.params.trainable();
  if (ckpt.adam.m.size() != trainable.size() ||
      ckpt.adam.v.size() != trainable.size()) {
    throw CheckpointError("optimizer state does not match parameter layout");
  }

  std::string out;
  out.append(kMagic, 4);
  put_u32(out, ckpt.version);
  put_bytes(out, config_to_json_text(ckpt.config));
  put_bytes(out, vocab_to_string(ckpt.vocab));

  put_u32(out, static_cast<std::uint32_t>(all.size()));
  for (const ParamRef<float>& p : all) put_block(out, p.name, *p.value);

  put_u64(out, static_cast<std::uint64_t>(ckpt.adam.step));
  put_u32(out, static_cast<std::uint32_t>(trainable.size()));
  for (std::size_t i = 0; i < trainable.size(); ++i) {
    put_block(out, trainable[i].name, ckpt.adam.m[i]);
    put_block(out, trainable[i].name, ckpt.adam.v[i]);
  }

  put_u64(out, static_cast<std::uint64_t>(ckpt.global_step));
  put_u64(out, static_cast<std::uint64_t>(ckpt.epoch));
  put_bytes(out, history_to_json(ckpt.history));
  out.append(kTrailer, 4);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) {
      throw IoError("cannot write checkpoint to '" + tmp + "'");
    }
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    if (!f) {
      std::remove(tmp.c_str());
      throw IoError("failed writing checkpoint to '" + tmp + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw IoError("cannot move checkpoint into place at '" + path +
                  "': " + ec.message());
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw IoError("cannot open checkpoint '" + path + "'");
  }
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);

  r.magic(kMagic, "leading");
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != 1) {
    throw CheckpointError(path + ": unsupported checkpoint version " +
                          std::to_string(ckpt.version));
  }
  ckpt.config = config_from_json_text(r.bytes());
  ckpt.vocab = vocab_from_string(r.bytes());

  // Allocate the parameter layout the config describes, then overwrite every
  // matrix; block() checks names so misordered files are caught.
  ModelDims dims;
  dims.vocab = ckpt.vocab.size();
  dims.embedding = ckpt.config.embedding_dim;
  dims.hidden = ckpt.config.hidden_size;
  dims.latent = ckpt.config.z_dim;
  ckpt.params = ModelParams<float>::init(dims, 0);
  ckpt.params.embedding_trainable = !ckpt.config.freeze_embeddings;

  std::vector<ParamRef<float>> all = ckpt.params.visit();
  const std::uint32_t count = r.u32();
  if (count != all.size()) {
    throw CheckpointError(path + ": expected " + std::to_string(all.size()) +
                          " parameters, file has " + std::to_string(count));
  }
  for (ParamRef<float>& p : all) {
    Mat<float> m = r.block(p.name);
    if (m.rows() != p.value->rows() || m.cols() != p.value->cols()) {
      throw CheckpointError(path + ": parameter '" + p.name +
                            "' has shape " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()) + ", expected " +
                            std::to_string(p.value->rows()) + "x" +
                            std::to_string(p.value->cols()));
    }
    *p.value = std::move(m);
  }

  ckpt.adam.step = static_cast<long>(r.u64());
  std::vector<ParamRef<float>> trainable = ckpt.params.trainable();
  const std::uint32_t opt_count = r.u32();
  if (opt_count != trainable.size()) {
    throw CheckpointError(path + ": optimizer state covers " +
                          std::to_string(opt_count) + " parameters, expected " +
                          std::to_string(trainable.size()));
  }
  ckpt.adam.m.clear();
  ckpt.adam.v.clear();
  for (const ParamRef<float>& p : trainable) {
    ckpt.adam.m.push_back(r.block(p.name));
    ckpt.adam.v.push_back(r.block(p.name));
  }

  ckpt.global_step = static_cast<long>(r.i64());
  ckpt.epoch = static_cast<long>(r.i64());
  ckpt.history = history_from_json(r.bytes(), path);
  r.magic(kTrailer, "trailing");
  r.done();
  return ckpt;
}

}  // namespace reqvae
