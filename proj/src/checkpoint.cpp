// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/checkpoint.hpp"

#include "json.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace melssl::train {

namespace {

constexpr char kMagic[8] = {'M', 'E', 'L', 'S', 'S', 'L', 'C', 'K'};

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t len) : data_(data), len_(len) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

  const unsigned char* raw(std::size_t n) {
    need(n);
    const unsigned char* p = data_ + pos_;
    pos_ += n;
    return p;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > len_) throw DataError("checkpoint: truncated archive");
  }
  const unsigned char* data_;
  std::size_t len_;
  std::size_t pos_ = 0;
};

const std::array<std::uint32_t, 256>& crc_table() {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t len,
                    std::uint32_t seed) {
  std::uint32_t c = seed ^ 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i)
    c = crc_table()[(c ^ data[i]) & 0xff] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json manifest;
  manifest["format_version"] = ckpt.manifest.format_version;
  manifest["config_hash"] = ckpt.manifest.config_hash;
  manifest["step"] = ckpt.manifest.step;
  manifest["epoch"] = ckpt.manifest.epoch;
  manifest["seed"] = ckpt.manifest.seed;
  manifest["rng_scheme"] = ckpt.manifest.rng_scheme;
  manifest["tensor_count"] = ckpt.tensors.size();
  const std::string mbytes = manifest.dump();

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, ckpt.manifest.format_version);
  put_u64(out, mbytes.size());
  out += mbytes;
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out.push_back(0);  // dtype 0 = float64
    put_u32(out, 2);
    put_u64(out, static_cast<std::uint64_t>(tensor.rows()));
    put_u64(out, static_cast<std::uint64_t>(tensor.cols()));
    // row-major to keep the on-disk layout independent of Eigen defaults
    for (Eigen::Index r = 0; r < tensor.rows(); ++r)
      for (Eigen::Index c = 0; c < tensor.cols(); ++c) {
        std::uint64_t bits;
        const double v = tensor(r, c);
        std::memcpy(&bits, &v, 8);
        put_u64(out, bits);
      }
  }
  put_u32(out, crc32(reinterpret_cast<const unsigned char*>(out.data()),
                     out.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw DataError("save_checkpoint: cannot write " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("save_checkpoint: short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("save_checkpoint: cannot move archive into place: " + path);
}

Checkpoint load_checkpoint(const std::string& path,
                           const std::string& expected_config_hash) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("load_checkpoint: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + 16)
    throw DataError("load_checkpoint: archive too small: " + path);
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError("load_checkpoint: bad magic: " + path);

  const std::uint32_t stored_crc =
      crc32(bytes.data(), bytes.size() - 4) ;
  std::uint32_t trailer = 0;
  for (int i = 0; i < 4; ++i)
    trailer |= static_cast<std::uint32_t>(bytes[bytes.size() - 4 + static_cast<std::size_t>(i)]) << (8 * i);
  if (stored_crc != trailer)
    throw DataError("load_checkpoint: CRC mismatch (corrupted archive): " +
                    path);

  Reader r(bytes.data(), bytes.size() - 4);
  r.raw(sizeof(kMagic));
  Checkpoint ckpt;
  ckpt.manifest.format_version = r.u32();
  if (ckpt.manifest.format_version != 1)
    throw DataError("load_checkpoint: unsupported format version " +
                    std::to_string(ckpt.manifest.format_version));
  const auto mlen = static_cast<std::size_t>(r.u64());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(r.bytes(mlen));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("load_checkpoint: bad manifest: ") + e.what());
  }
  ckpt.manifest.config_hash = manifest.at("config_hash").get<std::string>();
  ckpt.manifest.step = manifest.at("step").get<std::int64_t>();
  ckpt.manifest.epoch = manifest.at("epoch").get<std::int64_t>();
  ckpt.manifest.seed = manifest.at("seed").get<std::uint64_t>();
  ckpt.manifest.rng_scheme = manifest.at("rng_scheme").get<std::string>();

  if (!expected_config_hash.empty() &&
      ckpt.manifest.config_hash != expected_config_hash)
    throw DataError("load_checkpoint: config hash mismatch (archive " +
                    ckpt.manifest.config_hash + ", expected " +
                    expected_config_hash + ")");

  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const auto name_len = static_cast<std::size_t>(r.u32());
    const std::string name = r.bytes(name_len);
    const unsigned char dtype = *r.raw(1);
    if (dtype != 0)
      throw DataError("load_checkpoint: unsupported dtype in " + name);
    const std::uint32_t ndim = r.u32();
    if (ndim != 2)
      throw DataError("load_checkpoint: unsupported rank in " + name);
    const auto rows = static_cast<Eigen::Index>(r.u64());
    const auto cols = static_cast<Eigen::Index>(r.u64());
    Matrix t(rows, cols);
    for (Eigen::Index rr = 0; rr < rows; ++rr)
      for (Eigen::Index cc = 0; cc < cols; ++cc) {
        const std::uint64_t bits = r.u64();
        double v;
        std::memcpy(&v, &bits, 8);
        t(rr, cc) = v;
      }
    ckpt.tensors.emplace(name, std::move(t));
  }
  return ckpt;
}

}  // namespace melssl::train
