#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "vulnlm/lm.hpp"

namespace vulnlm {

// Binary container:
//   8 bytes   magic "VLMCKPT1"
//   8 bytes   header length n, little-endian
//   n bytes   JSON header: cell, dimensions, vocab_hash, block list
//   payload   each block's values row-major as 8-byte little-endian IEEE doubles
struct Checkpoint {
  LanguageModelParams params;
  std::uint64_t vocab_hash = 0;
};

std::string encode_checkpoint(const LanguageModelParams& params, std::uint64_t vocab_hash);
// Throws Error{FormatError}.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const LanguageModelParams& params,
                     std::uint64_t vocab_hash);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vulnlm
