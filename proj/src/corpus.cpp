#include "vulnlm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "vulnlm/error.hpp"

namespace vulnlm {

using ordered_json = nlohmann::ordered_json;

std::size_t ExperimentRecord::token_count() const {
  std::size_t n = 0;
  for (const auto& m : methods) n += m.tokens.size();
  return n;
}

RawTokens ExperimentRecord::all_tokens() const {
  RawTokens out;
  out.reserve(token_count());
  for (const auto& m : methods) out.insert(out.end(), m.tokens.begin(), m.tokens.end());
  return out;
}

std::vector<std::size_t> Corpus::indices_where(std::string_view app, std::string_view version) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].app == app && records[i].version == version) out.push_back(i);
  }
  return out;
}

std::vector<std::string> Corpus::apps() const {
  std::vector<std::string> out;
  for (const auto& r : records) {
    if (std::find(out.begin(), out.end(), r.app) == out.end()) out.push_back(r.app);
  }
  return out;
}

std::vector<std::string> Corpus::versions(std::string_view app) const {
  std::vector<std::string> out;
  for (const auto& r : records) {
    if (r.app == app && std::find(out.begin(), out.end(), r.version) == out.end()) {
      out.push_back(r.version);
    }
  }
  std::sort(out.begin(), out.end(),
            [](const std::string& a, const std::string& b) { return version_less(a, b); });
  return out;
}

std::vector<bool> Corpus::twin_mask() const {
  std::set<std::tuple<std::string, std::string, std::string>> members;
  for (const auto& p : pairs) {
    members.emplace(p.app, p.version, p.vulnerable_path);
    members.emplace(p.app, p.version, p.clean_path);
  }
  std::vector<bool> mask(records.size(), false);
  for (std::size_t i = 0; i < records.size(); ++i) {
    mask[i] = members.count({records[i].app, records[i].version, records[i].path}) > 0;
  }
  return mask;
}

std::vector<MethodTokens> to_method_tokens(const std::vector<RawTokens>& lexed) {
  std::vector<MethodTokens> out;
  for (std::size_t i = 0; i < lexed.size(); ++i) {
    if (!lexed[i].empty()) out.push_back({i, normalize(lexed[i])});
  }
  if (out.empty()) throw Error(ErrorKind::EmptyMethod, "source contains no tokens");
  return out;
}

ExperimentRecord record_from_source(std::string app, std::string version, std::string path,
                                    std::string_view source, bool vulnerable) {
  ExperimentRecord r;
  r.app = std::move(app);
  r.version = std::move(version);
  r.path = std::move(path);
  r.methods = to_method_tokens(lex(source));
  r.vulnerable = vulnerable;
  return r;
}

bool version_less(std::string_view a, std::string_view b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i])) != 0;
    const bool db = std::isdigit(static_cast<unsigned char>(b[j])) != 0;
    if (da && db) {
      std::size_t ei = i, ej = j;
      while (ei < a.size() && std::isdigit(static_cast<unsigned char>(a[ei]))) ++ei;
      while (ej < b.size() && std::isdigit(static_cast<unsigned char>(b[ej]))) ++ej;
      auto na = a.substr(i, ei - i), nb = b.substr(j, ej - j);
      while (na.size() > 1 && na.front() == '0') na.remove_prefix(1);
      while (nb.size() > 1 && nb.front() == '0') nb.remove_prefix(1);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ei;
      j = ej;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return a.size() - i < b.size() - j;
}

std::string corpus_to_jsonl(const std::vector<ExperimentRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    ordered_json j;
    j["app"] = r.app;
    j["version"] = r.version;
    j["path"] = r.path;
    j["label"] = r.vulnerable;
    auto methods = ordered_json::array();
    for (const auto& m : r.methods) methods.push_back(m.tokens);
    j["methods"] = std::move(methods);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<ExperimentRecord> corpus_from_jsonl(std::string_view text) {
  std::vector<ExperimentRecord> out;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  std::size_t start = 0, line_no = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    ExperimentRecord r;
    try {
      const auto j = ordered_json::parse(line);
      r.app = j.at("app").get<std::string>();
      r.version = j.at("version").get<std::string>();
      r.path = j.at("path").get<std::string>();
      r.vulnerable = j.at("label").get<bool>();
      std::size_t idx = 0;
      for (const auto& m : j.at("methods")) {
        auto tokens = m.get<RawTokens>();
        if (!tokens.empty()) r.methods.push_back({idx, std::move(tokens)});
        ++idx;
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::FormatError, "corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    if (r.methods.empty()) {
      throw Error(ErrorKind::EmptyMethod, "corpus line " + std::to_string(line_no) + " has no tokens");
    }
    if (!seen.emplace(r.app, r.version, r.path).second) {
      throw Error(ErrorKind::FormatError, "duplicate record " + r.app + "/" + r.version + "/" + r.path);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string pairs_to_json(const std::vector<TwinPair>& pairs) {
  auto arr = ordered_json::array();
  for (const auto& p : pairs) {
    ordered_json j;
    j["app"] = p.app;
    j["version"] = p.version;
    j["vulnerable"] = p.vulnerable_path;
    j["clean"] = p.clean_path;
    arr.push_back(std::move(j));
  }
  ordered_json doc;
  doc["pairs"] = std::move(arr);
  return doc.dump(1) + "\n";
}

std::vector<TwinPair> pairs_from_json(std::string_view text) {
  std::vector<TwinPair> out;
  try {
    const auto doc = ordered_json::parse(text);
    for (const auto& j : doc.at("pairs")) {
      out.push_back({j.at("app").get<std::string>(), j.at("version").get<std::string>(),
                     j.at("vulnerable").get<std::string>(), j.at("clean").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("pairs sidecar: ") + e.what());
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingArtifact, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::FormatError, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::filesystem::path pairs_path_for(const std::filesystem::path& corpus_path) {
  return std::filesystem::path(corpus_path.string() + ".pairs.json");
}

Corpus load_corpus(const std::filesystem::path& path) {
  Corpus c;
  c.records = corpus_from_jsonl(read_file(path));
  const auto sidecar = pairs_path_for(path);
  if (std::filesystem::exists(sidecar)) c.pairs = pairs_from_json(read_file(sidecar));
  return c;
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  write_file(path, corpus_to_jsonl(corpus.records));
  write_file(pairs_path_for(path), pairs_to_json(corpus.pairs));
}

}  // namespace vulnlm
