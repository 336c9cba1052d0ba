// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/common.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace melssl::train {

/**
 * Single-file archive: magic, format version, a JSON manifest, then named
 * float64 tensors (shape header + row-major little-endian data), ending in
 * a CRC32 of everything before it. Loads refuse mismatched versions,
 * config hashes, or corrupted payloads.
 */
struct CheckpointManifest {
  std::uint32_t format_version = 1;
  std::string config_hash;
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::uint64_t seed = 0;
  std::string rng_scheme = "stateless-v1";  // streams derived from (seed, epoch, index)
};

struct Checkpoint {
  CheckpointManifest manifest;
  std::map<std::string, Matrix> tensors;  // ordered by name
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);

/** expected_config_hash empty skips the hash check (inspection tools). */
Checkpoint load_checkpoint(const std::string& path,
                           const std::string& expected_config_hash = "");

/** CRC32 (IEEE), used by the archive trailer. */
std::uint32_t crc32(const unsigned char* data, std::size_t len,
                    std::uint32_t seed = 0);

}  // namespace melssl::train
