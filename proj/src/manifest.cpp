// Copyright 2026 the melssl authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "melssl/manifest.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>

namespace melssl::data {

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_manifest: cannot open " + path);

  const auto base = std::filesystem::path(path).parent_path();
  Manifest manifest;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("read_manifest: bad JSON at " + path + ":" +
                      std::to_string(line_no) + ": " + e.what());
    }
    if (j.contains("type") && j["type"] == "header") {
      manifest.header_json = line;
      continue;
    }
    ManifestEntry entry;
    if (!j.contains("path"))
      throw DataError("read_manifest: record without path at " + path + ":" +
                      std::to_string(line_no));
    std::filesystem::path p = j.at("path").get<std::string>();
    entry.path = p.is_absolute() ? p.string() : (base / p).string();
    if (j.contains("label")) entry.label = j.at("label").get<int>();
    if (j.contains("labels"))
      entry.labels = j.at("labels").get<std::vector<int>>();
    if (j.contains("fold")) entry.fold = j.at("fold").get<int>();
    if (j.contains("split")) entry.split = j.at("split").get<std::string>();
    manifest.entries.push_back(std::move(entry));
  }
  if (manifest.entries.empty())
    throw DataError("read_manifest: no clip records in " + path);
  return manifest;
}

void write_manifest(const Manifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_manifest: cannot write " + path);
  if (!manifest.header_json.empty()) out << manifest.header_json << "\n";
  for (const auto& entry : manifest.entries) {
    nlohmann::json j;
    j["path"] = entry.path;
    if (entry.label) j["label"] = *entry.label;
    if (!entry.labels.empty()) j["labels"] = entry.labels;
    if (entry.fold) j["fold"] = *entry.fold;
    if (!entry.split.empty()) j["split"] = entry.split;
    out << j.dump() << "\n";
  }
}

}  // namespace melssl::data
