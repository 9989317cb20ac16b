#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "solo/errors.hpp"
#include "solo/tokenizer.hpp"

using namespace solo;

TEST_CASE("byte tokenizer round-trips arbitrary text") {
  ByteTokenizer tok;
  const std::string text = "patch grids \xF0\x9F\x96\xBC and bytes\n";
  const auto ids = tok.encode(text);
  CHECK(ids.size() == text.size());
  CHECK(tok.decode(ids) == text);
  CHECK(tok.vocab_size() == 256);
}

TEST_CASE("byte tokenizer rejects out-of-range ids on decode") {
  ByteTokenizer tok;
  const std::uint32_t bad[] = {300};
  CHECK_THROWS_AS(tok.decode(bad), VocabularyError);
}

TEST_CASE("vocab tokenizer greedily matches longest entries with byte fallback") {
  const auto dir = std::filesystem::temp_directory_path() / "solo_tokenizer_test";
  std::filesystem::create_directories(dir);
  const auto vocab_path = dir / "vocab.txt";
  {
    std::ofstream out(vocab_path);
    out << "cat\n";
    out << "caterpillar\n";
    out << "pillar\n";
  }
  VocabTokenizer tok(vocab_path);
  CHECK(tok.vocab_size() == 259);

  const auto ids = tok.encode("caterpillars");
  // "caterpillar" (longest match) + byte 's'
  REQUIRE(ids.size() == 2);
  CHECK(ids[0] == 257);
  CHECK(ids[1] == static_cast<std::uint32_t>('s'));
  CHECK(tok.decode(ids) == "caterpillars");

  const auto mixed = tok.encode("a cat on a pillar");
  CHECK(tok.decode(mixed) == "a cat on a pillar");
  std::filesystem::remove_all(dir);
}

TEST_CASE("make_tokenizer picks the byte fallback without a vocab file") {
  auto tok = make_tokenizer(std::nullopt);
  CHECK(tok->vocab_size() == 256);
}

TEST_CASE("missing vocab file raises an ingestion error") {
  CHECK_THROWS_AS(VocabTokenizer("/nonexistent/vocab.txt"), IngestionError);
}
