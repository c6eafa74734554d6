#pragma once

// JSON-lines manifests. One object per line:
//   {"utt_id": ..., "audio": ..., "image"?: ..., "visual_embedding"?: ...,
//    "features"?: ..., "text": ...}
// Relative paths resolve against the workspace root.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mmasr {

struct ManifestEntry {
  std::string utt_id;
  std::string audio;
  std::string image;             // empty when absent
  std::string visual_embedding;  // empty when absent
  std::string features;          // empty when absent
  std::string text;
};

std::filesystem::path resolve_path(const std::filesystem::path& root, const std::string& p);

// Throws DataError naming the file and line for malformed lines, duplicate
// ids, or (when check_files) referenced files that do not exist.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& file, const std::filesystem::path& root,
                                         bool check_files = true);
void write_manifest(const std::filesystem::path& file, std::span<const ManifestEntry> entries);

}  // namespace mmasr
