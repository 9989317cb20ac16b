#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace solo {

/// Text tokenization interface. Ids are always < vocab_size(); the vision
/// special tokens live above the text range and are not the tokenizer's
/// concern.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::uint32_t> encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const std::uint32_t> ids) const = 0;
  virtual std::uint32_t vocab_size() const = 0;
};

/// Deterministic byte-fallback tokenizer: one token per UTF-8 byte,
/// vocab size 256. The bundled default for tests and synthetic corpora.
class ByteTokenizer final : public Tokenizer {
 public:
  std::vector<std::uint32_t> encode(std::string_view text) const override;
  std::string decode(std::span<const std::uint32_t> ids) const override;
  std::uint32_t vocab_size() const override { return 256; }
};

/// Greedy longest-match tokenizer over an external vocabulary file (one
/// token string per line, UTF-8). Ids 0..255 are the byte fallback; file
/// entries get ids 256, 257, ... in file order.
class VocabTokenizer final : public Tokenizer {
 public:
  explicit VocabTokenizer(const std::filesystem::path& vocab_file);

  std::vector<std::uint32_t> encode(std::string_view text) const override;
  std::string decode(std::span<const std::uint32_t> ids) const override;
  std::uint32_t vocab_size() const override;

 private:
  std::vector<std::string> entries_;  // index i -> id 256 + i
  std::size_t max_entry_len_ = 0;
};

/// Byte tokenizer when no vocab file is given, VocabTokenizer otherwise.
std::unique_ptr<Tokenizer> make_tokenizer(
    const std::optional<std::filesystem::path>& vocab_file);

}  // namespace solo
