#include "vulnlm/manifest.hpp"

#include <chrono>
#include <ctime>

#include <json.hpp>

#include "vulnlm/corpus.hpp"
#include "vulnlm/error.hpp"
#include "vulnlm/hash.hpp"

namespace vulnlm {

namespace {

using Json = nlohmann::ordered_json;

Json refs_to_json(const std::vector<ArtifactRef>& refs) {
  Json arr = Json::array();
  for (const auto& r : refs) arr.push_back({{"role", r.role}, {"path", r.path}, {"hash", r.hash}});
  return arr;
}

std::vector<ArtifactRef> refs_from_json(const Json& arr) {
  std::vector<ArtifactRef> refs;
  for (const auto& r : arr) {
    refs.push_back({r.at("role").get<std::string>(), r.at("path").get<std::string>(), r.at("hash").get<std::string>()});
  }
  return refs;
}

bool same_file_name(const std::string& recorded, const std::filesystem::path& actual) {
  return std::filesystem::path(recorded).filename() == actual.filename();
}

}  // namespace

std::string RunManifest::to_json() const {
  Json j;
  j["command"] = command;
  Json cfg = Json::object();
  if (!config_json.empty()) cfg = Json::parse(config_json);
  j["config"] = cfg;
  j["seeds"] = Json::object();
  for (const auto& [k, v] : seeds) j["seeds"][k] = v;
  j["inputs"] = refs_to_json(inputs);
  j["outputs"] = refs_to_json(outputs);
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(std::string_view text) {
  try {
    const Json j = Json::parse(text);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config_json = j.at("config").dump(2);
    for (const auto& [k, v] : j.at("seeds").items()) m.seeds[k] = v.get<std::uint64_t>();
    m.inputs = refs_from_json(j.at("inputs"));
    m.outputs = refs_from_json(j.at("outputs"));
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    return m;
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("malformed manifest: ") + e.what());
  }
}

std::string hash_bytes(std::string_view bytes) { return hex64(fnv1a(bytes)); }

std::string hash_file(const std::filesystem::path& path) { return hash_bytes(read_file(path)); }

ArtifactRef artifact_ref(std::string role, const std::filesystem::path& path) {
  return {std::move(role), path.string(), hash_file(path)};
}

std::filesystem::path manifest_path_for(const std::filesystem::path& artifact) {
  return std::filesystem::path(artifact.string() + ".manifest.json");
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const std::filesystem::path& artifact, const RunManifest& manifest) {
  write_file(manifest_path_for(artifact), manifest.to_json());
}

RunManifest read_manifest(const std::filesystem::path& artifact) {
  const auto path = manifest_path_for(artifact);
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::MissingArtifact, "no manifest for " + artifact.string());
  }
  return RunManifest::from_json(read_file(path));
}

RunManifest verify_artifact(const std::filesystem::path& artifact) {
  if (!std::filesystem::exists(artifact)) {
    throw Error(ErrorKind::MissingArtifact, "missing artifact " + artifact.string());
  }
  RunManifest m = read_manifest(artifact);
  const std::string actual = hash_file(artifact);
  bool listed = false;
  for (const auto& out : m.outputs) {
    if (!same_file_name(out.path, artifact)) continue;
    listed = true;
    if (out.hash != actual) {
      throw Error(ErrorKind::HashMismatch, artifact.string() + " changed since its manifest was written");
    }
  }
  if (!listed) throw Error(ErrorKind::HashMismatch, artifact.string() + " is not an output of its manifest");
  for (const auto& in : m.inputs) {
    if (!std::filesystem::exists(in.path)) {
      throw Error(ErrorKind::MissingArtifact, "upstream artifact " + in.path + " is missing");
    }
    if (hash_file(in.path) != in.hash) {
      throw Error(ErrorKind::HashMismatch, "upstream artifact " + in.path + " changed after " + artifact.string() + " was built");
    }
  }
  return m;
}

}  // namespace vulnlm
