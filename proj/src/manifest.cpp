#include "mmasr/manifest.hpp"

#include <fstream>
#include <set>

#include "json.hpp"
#include "mmasr/errors.hpp"

namespace mmasr {

std::filesystem::path resolve_path(const std::filesystem::path& root, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || root.empty() ? path : root / path;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& file, const std::filesystem::path& root,
                                         bool check_files) {
  std::ifstream in(file);
  if (!in) throw DataError(file.string() + ": cannot open manifest");
  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = file.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": invalid JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw DataError(where + ": expected a JSON object");
    auto field = [&](const char* key, bool required) -> std::string {
      auto it = j.find(key);
      if (it == j.end()) {
        if (required) throw DataError(where + ": missing key '" + key + "'");
        return {};
      }
      if (!it->is_string()) throw DataError(where + ": key '" + key + "' must be a string");
      return it->get<std::string>();
    };
    ManifestEntry e;
    e.utt_id = field("utt_id", true);
    e.audio = field("audio", true);
    e.image = field("image", false);
    e.visual_embedding = field("visual_embedding", false);
    e.features = field("features", false);
    e.text = field("text", true);
    if (e.utt_id.empty()) throw DataError(where + ": empty utt_id");
    if (!seen.insert(e.utt_id).second) throw DataError(where + ": duplicate utt_id '" + e.utt_id + "'");
    if (check_files) {
      for (const auto* p : {&e.audio, &e.image, &e.visual_embedding, &e.features}) {
        if (p->empty()) continue;
        if (!std::filesystem::exists(resolve_path(root, *p)))
          throw DataError(where + ": referenced file '" + *p + "' does not exist");
      }
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) throw DataError(file.string() + ": manifest is empty");
  return out;
}

void write_manifest(const std::filesystem::path& file, std::span<const ManifestEntry> entries) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw DataError(file.string() + ": cannot write manifest");
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["utt_id"] = e.utt_id;
    j["audio"] = e.audio;
    if (!e.image.empty()) j["image"] = e.image;
    if (!e.visual_embedding.empty()) j["visual_embedding"] = e.visual_embedding;
    if (!e.features.empty()) j["features"] = e.features;
    j["text"] = e.text;
    out << j.dump() << '\n';
  }
}

}  // namespace mmasr
