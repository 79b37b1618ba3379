#include "vulnlm/corpusgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vulnlm/error.hpp"
#include "vulnlm/rng.hpp"

namespace vulnlm {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::array<const char*, 26> kAppNames = {
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india",
    "juliet", "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo",
    "sierra", "tango", "uniform", "victor", "whiskey", "xray", "yankee", "zulu"};

constexpr std::array<const char*, 20> kVerbs = {
    "read", "load", "store", "parse", "fetch", "update", "render", "build", "check", "merge",
    "flush", "scan", "apply", "resolve", "encode", "decode", "notify", "collect", "sync", "emit"};

constexpr std::array<const char*, 30> kNouns = {
    "buffer", "cache", "record", "entry", "session", "token", "payload", "channel", "index",
    "cursor", "frame", "header", "batch", "queue", "store", "config", "profile", "account",
    "message", "report", "stream", "handle", "slot", "score", "board", "player", "track",
    "photo", "item", "node"};

constexpr std::array<const char*, 8> kMessages = {
    "failed to read", "retry later", "invalid state", "done", "closing resource",
    "unexpected input", "timeout", "skipped"};

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

// Names available to one app at one version. Every entry ends in the app tag.
struct AppNames {
  std::string app;
  std::string tag;  // capitalized app name
  std::vector<std::string> methods;
  std::vector<std::string> vars;
  std::vector<std::string> classes;
  std::vector<std::string> packages;
};

AppNames base_names(const GenConfig& cfg, std::size_t app) {
  AppNames n;
  const std::string name = app_name(app);
  n.app = name;
  n.tag = capitalize(name);
  Rng rng(derive_seed(cfg.seed, 1000 + app));

  std::vector<std::string> method_pool, var_pool, class_pool;
  for (const char* v : kVerbs) {
    for (const char* o : kNouns) method_pool.push_back(std::string(v) + capitalize(o) + n.tag);
  }
  for (const char* a : kNouns) {
    for (const char* b : kNouns) {
      if (a != b) var_pool.push_back(std::string(a) + capitalize(b) + n.tag);
    }
  }
  for (const char* a : kNouns) {
    for (const char* s : {"Manager", "Service", "Helper", "Controller", "Worker"}) {
      class_pool.push_back(capitalize(a) + s + n.tag);
    }
  }
  shuffle(method_pool, rng);
  shuffle(var_pool, rng);
  shuffle(class_pool, rng);

  const std::size_t n_methods = cfg.identifiers_per_app / 2;
  const std::size_t n_vars = cfg.identifiers_per_app - n_methods;
  n.methods.assign(method_pool.begin(), method_pool.begin() + static_cast<std::ptrdiff_t>(n_methods));
  n.vars.assign(var_pool.begin(), var_pool.begin() + static_cast<std::ptrdiff_t>(n_vars));
  n.classes.assign(class_pool.begin(), class_pool.begin() + 12);
  for (std::size_t i = 0; i < 4; ++i) n.packages.push_back(std::string(kNouns[i * 7 % kNouns.size()]) + name);
  return n;
}

// Renames a seeded fraction of methods and variables for each later version.
AppNames names_at_version(const GenConfig& cfg, std::size_t app, std::size_t version) {
  AppNames n = base_names(cfg, app);
  for (std::size_t v = 2; v <= version; ++v) {
    Rng rng(derive_seed(cfg.seed, 2000 + app * 64 + v));
    auto rename = [&](std::vector<std::string>& pool) {
      const auto count = static_cast<std::size_t>(std::llround(cfg.rename_fraction * static_cast<double>(pool.size())));
      std::vector<std::size_t> idx(pool.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      shuffle(idx, rng);
      for (std::size_t i = 0; i < count && i < idx.size(); ++i) {
        pool[idx[i]] += "V" + std::to_string(v);
      }
    };
    rename(n.methods);
    rename(n.vars);
  }
  return n;
}

enum class Guard { LockUnlock, AcquireRelease, EnterExit };

struct GuardTokens {
  const char* type;
  const char* init;
  const char* enter;
  const char* leave;
};

GuardTokens guard_tokens(Guard g) {
  switch (g) {
    case Guard::LockUnlock: return {"ReentrantLock", "new ReentrantLock()", "lock", "unlock"};
    case Guard::AcquireRelease: return {"Semaphore", "new Semaphore(1)", "acquire", "release"};
    case Guard::EnterExit: return {"Monitor", "new Monitor()", "enter", "exit"};
  }
  return {"ReentrantLock", "new ReentrantLock()", "lock", "unlock"};
}

class Source {
 public:
  void line(const std::string& text) {
    if (!text.empty()) out_ << std::string(depth_ * 4, ' ') << text;
    out_ << '\n';
  }
  void open(const std::string& text) {
    line(text + " {");
    ++depth_;
  }
  void close(const std::string& suffix = "") {
    --depth_;
    line("}" + suffix);
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
  std::size_t depth_ = 0;
};

struct FileRenderer {
  const AppNames& names;
  Rng rng;

  template <class T>
  const T& pick(const std::vector<T>& pool) {
    return pool[uniform_index(rng, pool.size())];
  }
  const std::string& method() { return pick(names.methods); }
  const std::string& var() { return pick(names.vars); }
  std::string num(std::size_t hi = 100) { return std::to_string(uniform_index(rng, hi)); }
  std::string str() {
    return std::string("\"") + kMessages[uniform_index(rng, kMessages.size())] + "\"";
  }

  void filler(Source& s, const std::string& counter) {
    const std::string m = method();
    const std::string a = var();
    const std::string b = var();
    switch (uniform_index(rng, 8)) {
      case 0:
        s.open("public int " + m + "(int " + a + ")");
        s.line("int " + b + " = " + num() + ";");
        s.open("for (int i = 0; i < " + a + "; i++)");
        s.line(b + " += i * " + num(10) + ";");
        s.close();
        s.line("return " + b + ";");
        s.close();
        break;
      case 1:
        s.open("public void " + m + "(String " + a + ")");
        s.open("if (" + a + " == null)");
        s.line("return;");
        s.close();
        s.open("if (" + a + ".length() > " + num(20) + ")");
        s.line(method() + "(" + a + ");");
        s.close();
        s.open("else");
        s.line(method() + "(" + str() + ");");
        s.close();
        s.close();
        break;
      case 2:
        s.open("private boolean " + m + "(int " + a + ", int " + b + ")");
        s.line("return " + a + " > " + b + " || " + a + " == " + num(5) + ";");
        s.close();
        break;
      case 3:
        s.open("public void " + m + "()");
        s.open("while (" + counter + " < " + num() + ")");
        s.line(counter + "++;");
        s.line(method() + "(" + counter + ");");
        s.close();
        s.close();
        break;
      case 4:
        s.open("public String " + m + "(String " + a + ")");
        s.line("StringBuilder " + b + " = new StringBuilder();");
        s.line(b + ".append(" + a + ");");
        s.line(b + ".append(" + str() + ");");
        s.line("return " + b + ".toString();");
        s.close();
        break;
      case 5:
        s.open("protected void " + m + "(int[] " + a + ")");
        s.open("for (int i = 0; i < " + a + ".length; i++)");
        s.open("if (" + a + "[i] < 0)");
        s.line(a + "[i] = " + num(3) + ";");
        s.close();
        s.close();
        s.close();
        break;
      case 6:
        s.open("public Object " + m + "(int " + a + ")");
        s.open("switch (" + a + ")");
        s.line("case " + num(4) + ":");
        s.line("    return " + method() + "();");
        s.line("default:");
        s.line("    return null;");
        s.close();
        s.close();
        break;
      default:
        s.open("public int " + m + "()");
        s.line("return " + counter + ";");
        s.close();
        break;
    }
  }

  // Listing-1 ordering when `vulnerable`, Listing-2 ordering otherwise. Both
  // orderings emit the same token multiset.
  void guarded(Source& s, const std::string& guard, const GuardTokens& g, bool vulnerable,
               const std::string& counter) {
    const std::string m = method();
    const std::string res = var();
    const std::string work = method();
    const std::string done = method();
    const bool extra = uniform01(rng) < 0.5;
    const std::string extra_stmt = uniform01(rng) < 0.5 ? counter + "++;" : method() + "(" + res + ", " + num() + ");";
    const bool io_catch = uniform01(rng) < 0.5;
    const std::string catch_stmt = io_catch ? "e.printStackTrace();" : method() + "(" + str() + ");";
    const std::string enter = guard + "." + g.enter + "();";
    const std::string leave = guard + "." + g.leave + "();";

    s.open("public void " + m + "(String " + res + ")");
    if (!vulnerable) s.line(enter);
    s.open("try");
    if (vulnerable) s.line(enter);
    s.line(work + "(" + res + ");");
    if (extra) s.line(extra_stmt);
    if (vulnerable) s.line(leave);
    s.close();
    s.open(std::string("catch (") + (io_catch ? "IOException" : "Exception") + " e)");
    s.line(catch_stmt);
    s.close();
    s.open("finally");
    if (!vulnerable) s.line(leave);
    s.line(done + "(" + res + ");");
    s.close();
    s.close();
  }
};

Guard pick_guard(const PatternWeights& w, Rng& rng) {
  const double total = w.lock_unlock + w.acquire_release + w.enter_exit;
  const double u = uniform01(rng) * total;
  if (u < w.lock_unlock) return Guard::LockUnlock;
  if (u < w.lock_unlock + w.acquire_release) return Guard::AcquireRelease;
  return Guard::EnterExit;
}

struct Rendered {
  std::string package;
  std::string cls;
  std::string source;
};

Rendered render_file(const GenConfig& cfg, const AppNames& names, std::uint64_t file_seed,
                     bool vulnerable) {
  FileRenderer r{names, Rng(file_seed)};
  Rendered out;
  out.package = r.pick(names.packages);
  out.cls = r.pick(names.classes);
  const Guard g = pick_guard(cfg.patterns, r.rng);
  const GuardTokens gt = guard_tokens(g);
  const std::string guard = r.var();
  const std::string counter = r.var();
  const std::size_t n_methods = cfg.min_methods + uniform_index(r.rng, cfg.max_methods - cfg.min_methods + 1);
  const std::size_t guarded_at = uniform_index(r.rng, n_methods);

  Source s;
  s.line("package com." + names.app + "." + out.package + ";");
  s.line("");
  s.line("import java.io.IOException;");
  s.line("import java.util.concurrent.locks.ReentrantLock;");
  s.line("");
  s.open("public class " + out.cls);
  s.line(std::string("private final ") + gt.type + " " + guard + " = " + gt.init + ";");
  s.line("private int " + counter + " = " + r.num() + ";");
  for (std::size_t i = 0; i < n_methods; ++i) {
    s.line("");
    if (i == guarded_at) r.guarded(s, guard, gt, vulnerable, counter);
    else r.filler(s, counter);
  }
  s.close();
  out.source = s.str();
  return out;
}

enum class Role { Vulnerable, Twin, Clean };

struct FileSlot {
  Role role;
  std::uint64_t seed;     // shared by a vulnerable file and its twin
  std::size_t number;     // file number used in the path
  std::size_t twin_of;    // number of the vulnerable partner, for twins
};

// Roles for a block of n files: round(fraction * n) vulnerable, as many clean
// twins as possible, then independent clean files; file numbers are shuffled.
std::vector<FileSlot> plan_block(const GenConfig& cfg, std::size_t n, std::size_t first_number,
                                 std::uint64_t block_seed) {
  const auto n_vuln = static_cast<std::size_t>(std::llround(cfg.vulnerable_fraction * static_cast<double>(n)));
  const std::size_t n_twin = std::min(n_vuln, n - n_vuln);
  std::vector<std::size_t> numbers(n);
  for (std::size_t i = 0; i < n; ++i) numbers[i] = first_number + i;
  Rng rng(block_seed);
  shuffle(numbers, rng);

  std::vector<FileSlot> slots;
  std::size_t next = 0;
  for (std::size_t k = 0; k < n_vuln; ++k) {
    slots.push_back({Role::Vulnerable, derive_seed(block_seed, k), numbers[next++], 0});
  }
  for (std::size_t k = 0; k < n_twin; ++k) {
    slots.push_back({Role::Twin, slots[k].seed, numbers[next++], slots[k].number});
  }
  for (std::size_t k = n_vuln + n_twin; k < n; ++k) {
    slots.push_back({Role::Clean, derive_seed(block_seed, k), numbers[next++], 0});
  }
  std::sort(slots.begin(), slots.end(), [](const FileSlot& a, const FileSlot& b) { return a.number < b.number; });
  return slots;
}

std::vector<FileSlot> plan_app(const GenConfig& cfg, std::size_t app, std::size_t version) {
  std::vector<FileSlot> all = plan_block(cfg, cfg.files_per_app, 0, derive_seed(cfg.seed, 3000 + app));
  for (std::size_t v = 2; v <= version; ++v) {
    auto added = plan_block(cfg, cfg.added_files_per_version,
                            cfg.files_per_app + (v - 2) * cfg.added_files_per_version,
                            derive_seed(cfg.seed, 4000 + app * 64 + v));
    all.insert(all.end(), added.begin(), added.end());
  }
  return all;
}

std::string file_path(const Rendered& r, std::size_t number) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "F%04zu", number);
  return "src/" + r.package + "/" + buf + "_" + r.cls + ".java";
}

std::string version_name(std::size_t v) { return "v" + std::to_string(v); }

}  // namespace

void GenConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); };
  if (apps == 0) fail("apps must be positive");
  if (files_per_app < 2) fail("files_per_app must be at least 2");
  if (min_methods < 1 || max_methods < min_methods) fail("method range must satisfy 1 <= min <= max");
  if (!(vulnerable_fraction > 0.0 && vulnerable_fraction < 1.0)) fail("vulnerable_fraction must lie in (0,1)");
  if (identifiers_per_app < 8 || identifiers_per_app > 600) fail("identifiers_per_app must lie in [8, 600]");
  if (versions == 0) fail("versions must be positive");
  if (!(rename_fraction >= 0.0 && rename_fraction <= 1.0)) fail("rename_fraction must lie in [0,1]");
  const auto& w = patterns;
  if (w.lock_unlock < 0 || w.acquire_release < 0 || w.enter_exit < 0 ||
      !(w.lock_unlock + w.acquire_release + w.enter_exit > 0)) {
    fail("pattern weights must be non-negative with a positive sum");
  }
}

std::string gen_config_to_json(const GenConfig& cfg) {
  Json j;
  j["apps"] = cfg.apps;
  j["files_per_app"] = cfg.files_per_app;
  j["min_methods"] = cfg.min_methods;
  j["max_methods"] = cfg.max_methods;
  j["vulnerable_fraction"] = cfg.vulnerable_fraction;
  j["identifiers_per_app"] = cfg.identifiers_per_app;
  j["versions"] = cfg.versions;
  j["rename_fraction"] = cfg.rename_fraction;
  j["added_files_per_version"] = cfg.added_files_per_version;
  j["patterns"] = {{"lock_unlock", cfg.patterns.lock_unlock},
                   {"acquire_release", cfg.patterns.acquire_release},
                   {"enter_exit", cfg.patterns.enter_exit}};
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

GenConfig gen_config_from_json(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::ConfigInvalid, "config must be a JSON object");
  GenConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "apps") cfg.apps = value.get<std::size_t>();
      else if (key == "files_per_app") cfg.files_per_app = value.get<std::size_t>();
      else if (key == "min_methods") cfg.min_methods = value.get<std::size_t>();
      else if (key == "max_methods") cfg.max_methods = value.get<std::size_t>();
      else if (key == "vulnerable_fraction") cfg.vulnerable_fraction = value.get<double>();
      else if (key == "identifiers_per_app") cfg.identifiers_per_app = value.get<std::size_t>();
      else if (key == "versions") cfg.versions = value.get<std::size_t>();
      else if (key == "rename_fraction") cfg.rename_fraction = value.get<double>();
      else if (key == "added_files_per_version") cfg.added_files_per_version = value.get<std::size_t>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "patterns") {
        for (const auto& [pk, pv] : value.items()) {
          if (pk == "lock_unlock") cfg.patterns.lock_unlock = pv.get<double>();
          else if (pk == "acquire_release") cfg.patterns.acquire_release = pv.get<double>();
          else if (pk == "enter_exit") cfg.patterns.enter_exit = pv.get<double>();
          else throw Error(ErrorKind::ConfigInvalid, "unknown pattern key: " + pk);
        }
      } else {
        throw Error(ErrorKind::ConfigInvalid, "unknown config key: " + key);
      }
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string app_name(std::size_t app) {
  if (app < kAppNames.size()) return kAppNames[app];
  return "app" + std::to_string(app);
}

const std::vector<std::string>& shared_tokens() {
  static const std::vector<std::string> tokens = [] {
    std::vector<std::string> t = {
        "package", "com", "import", "java", "io", "IOException", "util", "concurrent", "locks",
        "ReentrantLock", "Semaphore", "Monitor", "public", "private", "protected", "final",
        "class", "new", "int", "void", "boolean", "String", "Object", "StringBuilder", "return",
        "if", "else", "for", "while", "switch", "case", "default", "null", "try", "catch",
        "finally", "Exception", "e", "i", "printStackTrace", "length", "append", "toString",
        "lock", "unlock", "acquire", "release", "enter", "exit", "<num>", "<str>"};
    for (const char* p : {"{", "}", "(", ")", "[", "]", ";", ",", ".", ":", "=", "==", "<", ">",
                          "+=", "++", "*", "||"}) {
      t.emplace_back(p);
    }
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
  }();
  return tokens;
}

std::vector<GeneratedFile> generate_sources(const GenConfig& cfg, std::size_t app,
                                            std::size_t version) {
  cfg.validate();
  if (app >= cfg.apps) throw Error(ErrorKind::ConfigInvalid, "app index out of range");
  if (version < 1 || version > cfg.versions) throw Error(ErrorKind::ConfigInvalid, "version out of range");
  const AppNames names = names_at_version(cfg, app, version);
  std::vector<GeneratedFile> files;
  for (const FileSlot& slot : plan_app(cfg, app, version)) {
    const bool vulnerable = slot.role == Role::Vulnerable;
    const Rendered r = render_file(cfg, names, slot.seed, vulnerable);
    files.push_back({file_path(r, slot.number), r.source, vulnerable});
  }
  return files;
}

Corpus generate_corpus(const GenConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  for (std::size_t app = 0; app < cfg.apps; ++app) {
    const std::string aname = app_name(app);
    for (std::size_t v = 1; v <= cfg.versions; ++v) {
      const AppNames names = names_at_version(cfg, app, v);
      const auto slots = plan_app(cfg, app, v);
      std::map<std::size_t, std::string> path_of;
      for (const FileSlot& slot : slots) {
        const bool vulnerable = slot.role == Role::Vulnerable;
        const Rendered r = render_file(cfg, names, slot.seed, vulnerable);
        const std::string path = file_path(r, slot.number);
        path_of[slot.number] = path;
        corpus.records.push_back(record_from_source(aname, version_name(v), path, r.source, vulnerable));
      }
      for (const FileSlot& slot : slots) {
        if (slot.role == Role::Twin) {
          corpus.pairs.push_back({aname, version_name(v), path_of.at(slot.twin_of), path_of.at(slot.number)});
        }
      }
    }
  }
  return corpus;
}

PairReport verify_pairs(const Corpus& corpus) {
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& r = corpus.records[i];
    index[{r.app, r.version, r.path}] = i;
  }
  PairReport report;
  for (const auto& p : corpus.pairs) {
    ++report.pairs;
    ++report.pairs_per_app[p.app];
    const auto v = index.find({p.app, p.version, p.vulnerable_path});
    const auto c = index.find({p.app, p.version, p.clean_path});
    const std::string where = p.app + "/" + p.version + " " + p.vulnerable_path + " ~ " + p.clean_path;
    if (v == index.end() || c == index.end()) {
      ++report.violations;
      report.messages.push_back(where + ": missing file");
      continue;
    }
    const RawTokens a = corpus.records[v->second].all_tokens();
    const RawTokens b = corpus.records[c->second].all_tokens();
    std::multiset<std::string> ma(a.begin(), a.end()), mb(b.begin(), b.end());
    if (ma != mb) {
      ++report.violations;
      report.messages.push_back(where + ": token multisets differ");
    } else if (a == b) {
      ++report.violations;
      report.messages.push_back(where + ": token order identical");
    }
  }
  return report;
}

std::vector<TokenIds> generate_brackets(const BracketConfig& cfg, std::size_t count,
                                        std::uint64_t stream) {
  if (cfg.bracket_types == 0 || cfg.filler_tokens == 0 || cfg.length == 0) {
    throw Error(ErrorKind::ConfigInvalid, "bracket corpus needs brackets, fillers and a length");
  }
  const auto K = static_cast<TokenId>(cfg.bracket_types);
  Rng rng(derive_seed(cfg.seed, stream));
  std::vector<TokenIds> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    TokenIds seq;
    seq.reserve(cfg.length);
    std::vector<TokenId> stack;
    for (std::size_t t = 0; t < cfg.length; ++t) {
      const double u = uniform01(rng);
      if (!stack.empty() && u < cfg.close_probability) {
        seq.push_back(K + stack.back());
        stack.pop_back();
      } else if (stack.size() < cfg.max_depth && u < cfg.close_probability + cfg.open_probability) {
        const auto b = static_cast<TokenId>(uniform_index(rng, cfg.bracket_types));
        stack.push_back(b);
        seq.push_back(b);
      } else {
        seq.push_back(2 * K + static_cast<TokenId>(uniform_index(rng, cfg.filler_tokens)));
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace vulnlm
