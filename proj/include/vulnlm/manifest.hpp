#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace vulnlm {

struct ArtifactRef {
  std::string role;  // corpus, vocabulary, checkpoint, codebook, features, classifier, table...
  std::string path;
  std::string hash;  // hex FNV-1a 64 of the file bytes
};

// Provenance record written next to every artifact a command produces.
struct RunManifest {
  std::string command;
  std::string config_json;  // the effective configuration, verbatim
  std::map<std::string, std::uint64_t> seeds;
  std::vector<ArtifactRef> inputs;
  std::vector<ArtifactRef> outputs;
  std::string started_at;
  std::string finished_at;

  std::string to_json() const;
  static RunManifest from_json(std::string_view text);
};

std::string hash_bytes(std::string_view bytes);
// Throws Error{MissingArtifact}.
std::string hash_file(const std::filesystem::path& path);
ArtifactRef artifact_ref(std::string role, const std::filesystem::path& path);

std::filesystem::path manifest_path_for(const std::filesystem::path& artifact);
std::string utc_timestamp();

void write_manifest(const std::filesystem::path& artifact, const RunManifest& manifest);
// Throws Error{MissingArtifact} or Error{FormatError}.
RunManifest read_manifest(const std::filesystem::path& artifact);

// The artifact must exist, carry a manifest that lists it among the outputs
// with the current hash, and every input of that manifest must still hash to
// the recorded value. Throws Error{MissingArtifact} or Error{HashMismatch}.
RunManifest verify_artifact(const std::filesystem::path& artifact);

}  // namespace vulnlm
