// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "melssl/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace melssl::data {

/** One dataset clip: path plus labels and split bookkeeping. */
struct ManifestEntry {
  std::string path;
  std::optional<int> label;               // single-label tasks
  std::vector<int> labels;                // multi-label tasks
  std::optional<int> fold;
  std::string split;                      // "train" | "valid" | "test" | ""
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::string header_json;  // optional leading header record, verbatim
};

/**
 * JSON-lines manifest: an optional {"type":"header",...} first record,
 * then one {"path":..., "label"/"labels":..., "fold":..., "split":...}
 * record per clip. Relative paths are resolved against the manifest dir.
 */
Manifest read_manifest(const std::string& path);

void write_manifest(const Manifest& manifest, const std::string& path);

}  // namespace melssl::data
