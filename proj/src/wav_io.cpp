// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/wav_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace melssl::dsp {

namespace {

// RIFF helpers; WAV is little-endian throughout.
std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

WaveClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("read_wav: not a RIFF/WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_len = read_u32(&bytes[pos + 4]);
    if (pos + 8 + chunk_len > bytes.size())
      throw DataError("read_wav: truncated chunk in " + path);
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      if (chunk_len < 16) throw DataError("read_wav: bad fmt chunk in " + path);
      format = read_u16(&bytes[pos + 8]);
      channels = read_u16(&bytes[pos + 10]);
      rate = read_u32(&bytes[pos + 12]);
      bits = read_u16(&bytes[pos + 22]);
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      data = &bytes[pos + 8];
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (data == nullptr) throw DataError("read_wav: no data chunk in " + path);
  if (channels != 1)
    throw DataError("read_wav: only mono supported, got " +
                    std::to_string(channels) + " channels: " + path);

  WaveClip clip;
  clip.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    const std::size_t n = data_len / 2;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = static_cast<std::int16_t>(
          static_cast<std::uint16_t>(data[2 * i] | (data[2 * i + 1] << 8)));
      clip.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t n = data_len / 4;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = read_u32(&data[4 * i]);
      float f;
      std::memcpy(&f, &u, 4);
      clip.samples[i] = static_cast<double>(f);
    }
  } else {
    throw DataError("read_wav: unsupported format (want 16-bit PCM or "
                    "32-bit float): " + path);
  }
  if (clip.samples.empty()) throw DataError("read_wav: empty clip: " + path);
  return clip;
}

void write_wav(const std::string& path, const WaveClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (double s : clip.samples) {
    const double clamped = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("write_wav: cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write_wav: short write to " + path);
}

}  // namespace melssl::dsp
