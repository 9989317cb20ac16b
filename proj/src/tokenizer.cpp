#include "solo/tokenizer.hpp"

#include <algorithm>
#include <fstream>

#include "solo/errors.hpp"

namespace solo {

std::vector<std::uint32_t> ByteTokenizer::encode(std::string_view text) const {
  std::vector<std::uint32_t> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(c);
  return ids;
}

std::string ByteTokenizer::decode(std::span<const std::uint32_t> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (std::uint32_t id : ids) {
    if (id > 255) throw VocabularyError("byte tokenizer id out of range: " + std::to_string(id));
    out.push_back(static_cast<char>(id));
  }
  return out;
}

VocabTokenizer::VocabTokenizer(const std::filesystem::path& vocab_file) {
  std::ifstream in(vocab_file);
  if (!in) throw IngestionError("cannot open vocabulary file " + vocab_file.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    max_entry_len_ = std::max(max_entry_len_, line.size());
    entries_.push_back(line);
  }
}

std::uint32_t VocabTokenizer::vocab_size() const {
  return 256 + static_cast<std::uint32_t>(entries_.size());
}

std::vector<std::uint32_t> VocabTokenizer::encode(std::string_view text) const {
  std::vector<std::uint32_t> ids;
  std::size_t pos = 0;
  while (pos < text.size()) {
    // Longest entry match at this position; ties broken by file order.
    std::size_t best_len = 0;
    std::uint32_t best_id = 0;
    const std::size_t limit = std::min(max_entry_len_, text.size() - pos);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const std::string& e = entries_[i];
      if (e.size() > limit || e.size() <= best_len) continue;
      if (text.compare(pos, e.size(), e) == 0) {
        best_len = e.size();
        best_id = 256 + static_cast<std::uint32_t>(i);
      }
    }
    if (best_len == 0) {
      ids.push_back(static_cast<unsigned char>(text[pos]));
      pos += 1;
    } else {
      ids.push_back(best_id);
      pos += best_len;
    }
  }
  return ids;
}

std::string VocabTokenizer::decode(std::span<const std::uint32_t> ids) const {
  std::string out;
  for (std::uint32_t id : ids) {
    if (id < 256) {
      out.push_back(static_cast<char>(id));
    } else if (id - 256 < entries_.size()) {
      out += entries_[id - 256];
    } else {
      throw VocabularyError("vocab tokenizer id out of range: " + std::to_string(id));
    }
  }
  return out;
}

std::unique_ptr<Tokenizer> make_tokenizer(
    const std::optional<std::filesystem::path>& vocab_file) {
  if (vocab_file.has_value()) return std::make_unique<VocabTokenizer>(*vocab_file);
  return std::make_unique<ByteTokenizer>();
}

}  // namespace solo
