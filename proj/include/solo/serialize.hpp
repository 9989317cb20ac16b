#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "solo/packing.hpp"

namespace solo {

// Packed-sequence container, all integers little-endian:
//   header: magic "SPKD", u32 version=1, u32 patch_size, u32 reserved=0
//   record: u32 element_count,
//           per element: u8 tag (0=Text 1=Patch 2=Special 3=Pad) + payload
//             (Text: u32 id; Patch: patch_size^2*3 raw bytes; Special: u8 kind),
//           element_count x u32 segment_ids,
//           loss mask, one bit per element, LSB-first, byte-padded,
//           u32 CRC32 of the record body (element_count through mask bytes).
//
// Example-corpus container ("SEXM") reuses the element codec and adds the
// per-example metadata (dataset, kind, response_start, loss_on_prompt).

inline constexpr std::uint32_t kPackedFormatVersion = 1;

class PackedWriter {
 public:
  PackedWriter(std::ostream& out, std::uint32_t patch_size);
  void write(const PackedSequence& seq);
  std::size_t records_written() const { return records_; }

 private:
  std::ostream& out_;
  std::uint32_t patch_size_;
  std::size_t records_ = 0;
};

class PackedReader {
 public:
  explicit PackedReader(std::istream& in);
  /// Next record, or nullopt at a clean end of stream.
  std::optional<PackedSequence> next();
  std::uint32_t patch_size() const { return patch_size_; }

 private:
  std::istream& in_;
  std::uint32_t patch_size_ = 0;
  std::size_t record_index_ = 0;
};

void write_packed_file(std::ostream& out, std::span<const PackedSequence> seqs,
                       std::uint32_t patch_size);
std::vector<PackedSequence> read_packed_file(std::istream& in,
                                             std::uint32_t* patch_size = nullptr);

class ExampleWriter {
 public:
  ExampleWriter(std::ostream& out, std::uint32_t patch_size, std::uint32_t text_vocab_size);
  void write(const Example& example);
  std::size_t records_written() const { return records_; }

 private:
  std::ostream& out_;
  std::uint32_t patch_size_;
  std::size_t records_ = 0;
};

class ExampleReader {
 public:
  explicit ExampleReader(std::istream& in);
  std::optional<Example> next();
  std::uint32_t patch_size() const { return patch_size_; }
  std::uint32_t text_vocab_size() const { return text_vocab_size_; }

 private:
  std::istream& in_;
  std::uint32_t patch_size_ = 0;
  std::uint32_t text_vocab_size_ = 0;
  std::size_t record_index_ = 0;
};

}  // namespace solo
