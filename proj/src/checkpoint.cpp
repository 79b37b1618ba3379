#include "vulnlm/checkpoint.hpp"

#include <cstring>

#include <json.hpp>

#include "vulnlm/corpus.hpp"
#include "vulnlm/error.hpp"
#include "vulnlm/hash.hpp"

namespace vulnlm {
namespace {

constexpr std::string_view kMagic = "VLMCKPT1";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  return v;
}

}  // namespace

std::string encode_checkpoint(const LanguageModelParams& params, std::uint64_t vocab_hash) {
  params.check_shapes();
  nlohmann::ordered_json header;
  header["format"] = 1;
  header["cell"] = cell_kind_name(params.cell);
  header["vocab_size"] = params.vocab_size();
  header["embed_dim"] = params.embed_dim();
  header["state_dim"] = params.state_dim();
  header["vocab_hash"] = hex64(vocab_hash);
  header["real_encoding"] = "f64le";
  header["layout"] = "row-major";
  auto blocks = nlohmann::ordered_json::array();
  for (const auto& [name, m] : params.blocks()) {
    blocks.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  }
  header["blocks"] = std::move(blocks);
  const std::string text = header.dump();

  std::string out(kMagic);
  put_u64(out, text.size());
  out += text;
  for (const auto& [name, m] : params.blocks()) {
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      for (Eigen::Index j = 0; j < m->cols(); ++j) {
        const double v = (*m)(i, j);
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        put_u64(out, bits);
      }
    }
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16 || bytes.substr(0, 8) != kMagic) {
    throw Error(ErrorKind::FormatError, "not a language model checkpoint");
  }
  const std::uint64_t header_len = get_u64(bytes, 8);
  if (header_len > bytes.size() - 16) throw Error(ErrorKind::FormatError, "truncated checkpoint header");
  Checkpoint ck;
  std::size_t at = 16 + header_len;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(16, header_len));
    ck.vocab_hash = std::stoull(header.at("vocab_hash").get<std::string>(), nullptr, 16);
    ck.params = LanguageModelParams::zeros(parse_cell_kind(header.at("cell").get<std::string>()),
                                           header.at("vocab_size").get<std::size_t>(),
                                           header.at("embed_dim").get<std::size_t>(),
                                           header.at("state_dim").get<std::size_t>());
    const auto& listed = header.at("blocks");
    auto blocks = ck.params.blocks();
    if (listed.size() != blocks.size()) throw Error(ErrorKind::FormatError, "unexpected block list");
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      Matrix& m = *blocks[b].second;
      if (listed[b].at("name").get<std::string>() != blocks[b].first ||
          listed[b].at("rows").get<Eigen::Index>() != m.rows() ||
          listed[b].at("cols").get<Eigen::Index>() != m.cols()) {
        throw Error(ErrorKind::FormatError, "block '" + blocks[b].first + "' does not match the header");
      }
      const auto need = static_cast<std::size_t>(m.size()) * 8;
      if (bytes.size() < at + need) throw Error(ErrorKind::FormatError, "truncated checkpoint payload");
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          const std::uint64_t bits = get_u64(bytes, at);
          at += 8;
          double v;
          std::memcpy(&v, &bits, sizeof v);
          m(i, j) = v;
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("checkpoint header: ") + e.what());
  }
  if (at != bytes.size()) throw Error(ErrorKind::FormatError, "trailing bytes after checkpoint payload");
  if (!ck.params.all_finite()) throw Error(ErrorKind::FormatError, "checkpoint holds non-finite values");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const LanguageModelParams& params,
                     std::uint64_t vocab_hash) {
  write_file(path, encode_checkpoint(params, vocab_hash));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace vulnlm
