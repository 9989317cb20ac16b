#include "solo/serialize.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace solo {

namespace {

constexpr char kPackedMagic[4] = {'S', 'P', 'K', 'D'};
constexpr char kExampleMagic[4] = {'S', 'E', 'X', 'M'};

// Caps length fields read from files so a corrupted count fails cleanly
// instead of attempting a giant allocation.
constexpr std::uint32_t kMaxRecordElements = 1u << 24;
constexpr std::uint32_t kMaxNameLength = 1u << 16;

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  const std::size_t at = buf.size();
  buf.resize(at + 4);
  std::memcpy(buf.data() + at, &v, 4);
}

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

class RecordParser {
 public:
  RecordParser(std::span<const std::uint8_t> body, std::size_t record_index)
      : body_(body), record_(record_index) {}

  std::uint8_t u8() {
    need(1);
    return body_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, body_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = body_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return body_.size() - pos_; }
  std::size_t record() const { return record_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("record " + std::to_string(record_) + ": " + what);
  }

 private:
  void need(std::size_t n) const {
    if (body_.size() - pos_ < n) {
      throw TruncationError("record " + std::to_string(record_) + ": body ends mid-field");
    }
  }

  std::span<const std::uint8_t> body_;
  std::size_t pos_ = 0;
  std::size_t record_;
};

void encode_element(std::vector<std::uint8_t>& buf, const TokenElement& e,
                    std::uint32_t patch_size) {
  buf.push_back(static_cast<std::uint8_t>(e.kind));
  switch (e.kind) {
    case TokenElement::Kind::Text:
      put_u32(buf, e.id);
      break;
    case TokenElement::Kind::Patch: {
      const std::size_t expect = static_cast<std::size_t>(patch_size) * patch_size * 3;
      if (e.pixels.size() != expect) {
        throw DimensionError("patch element has " + std::to_string(e.pixels.size()) +
                             " bytes, file patch size implies " + std::to_string(expect));
      }
      buf.insert(buf.end(), e.pixels.begin(), e.pixels.end());
      break;
    }
    case TokenElement::Kind::Special:
      buf.push_back(static_cast<std::uint8_t>(e.id));
      break;
    case TokenElement::Kind::Pad:
      break;
  }
}

TokenElement decode_element(RecordParser& p, std::uint32_t patch_size) {
  const std::uint8_t tag = p.u8();
  switch (tag) {
    case 0:
      return TokenElement::text(p.u32());
    case 1: {
      const std::size_t n = static_cast<std::size_t>(patch_size) * patch_size * 3;
      auto pix = p.bytes(n);
      return TokenElement::patch(pix);
    }
    case 2: {
      const std::uint8_t kind = p.u8();
      if (kind > 2) p.fail("invalid special token kind " + std::to_string(kind));
      return TokenElement::special(static_cast<SpecialToken>(kind));
    }
    case 3:
      return TokenElement::pad();
    default:
      p.fail("invalid element tag " + std::to_string(tag));
  }
}

void encode_mask_bits(std::vector<std::uint8_t>& buf, std::span<const std::uint8_t> mask) {
  const std::size_t nbytes = (mask.size() + 7) / 8;
  const std::size_t at = buf.size();
  buf.resize(at + nbytes, 0);
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (mask[t]) buf[at + t / 8] |= static_cast<std::uint8_t>(1u << (t % 8));
  }
}

std::vector<std::uint8_t> decode_mask_bits(RecordParser& p, std::size_t count) {
  auto raw = p.bytes((count + 7) / 8);
  std::vector<std::uint8_t> mask(count);
  for (std::size_t t = 0; t < count; ++t) {
    mask[t] = static_cast<std::uint8_t>((raw[t / 8] >> (t % 8)) & 1u);
  }
  return mask;
}

void write_record(std::ostream& out, std::span<const std::uint8_t> body) {
  const std::uint32_t crc = crc_of(body);
  out.write(reinterpret_cast<const char*>(body.data()),
            static_cast<std::streamsize>(body.size()));
  out.write(reinterpret_cast<const char*>(&crc), 4);
  if (!out) throw Error("write failed");
}

std::uint32_t read_u32_or_throw(std::istream& in, std::size_t record_index,
                                bool* clean_eof = nullptr) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (in.gcount() == 0 && in.eof() && clean_eof != nullptr) {
    *clean_eof = true;
    return 0;
  }
  if (in.gcount() != 4) {
    throw TruncationError("record " + std::to_string(record_index) + ": stream ends mid-record");
  }
  return v;
}

void read_exact(std::istream& in, std::size_t record_index, std::uint8_t* dst, std::size_t n) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw TruncationError("record " + std::to_string(record_index) + ": stream ends mid-record");
  }
}

void check_header(std::istream& in, const char expected_magic[4], const char* what) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, expected_magic, 4) != 0) {
    throw MagicMismatchError(std::string("not a ") + what + " file (bad magic)");
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (in.gcount() != 4) throw TruncationError("header ends before version");
  if (version != kPackedFormatVersion) {
    throw VersionMismatchError(std::string(what) + " version " + std::to_string(version) +
                               " unsupported (expected " +
                               std::to_string(kPackedFormatVersion) + ")");
  }
}

}  // namespace

PackedWriter::PackedWriter(std::ostream& out, std::uint32_t patch_size)
    : out_(out), patch_size_(patch_size) {
  out_.write(kPackedMagic, 4);
  const std::uint32_t version = kPackedFormatVersion;
  const std::uint32_t reserved = 0;
  out_.write(reinterpret_cast<const char*>(&version), 4);
  out_.write(reinterpret_cast<const char*>(&patch_size_), 4);
  out_.write(reinterpret_cast<const char*>(&reserved), 4);
  if (!out_) throw Error("write failed");
}

void PackedWriter::write(const PackedSequence& seq) {
  seq.validate();
  std::vector<std::uint8_t> body;
  body.reserve(seq.size() * 8);
  put_u32(body, static_cast<std::uint32_t>(seq.size()));
  for (const TokenElement& e : seq.elements) encode_element(body, e, patch_size_);
  for (std::uint32_t sid : seq.segment_ids) put_u32(body, sid);
  encode_mask_bits(body, seq.loss_mask);
  write_record(out_, body);
  ++records_;
}

PackedReader::PackedReader(std::istream& in) : in_(in) {
  check_header(in_, kPackedMagic, "packed-sequence");
  patch_size_ = read_u32_or_throw(in_, 0);
  (void)read_u32_or_throw(in_, 0);  // reserved
}

std::optional<PackedSequence> PackedReader::next() {
  bool clean_eof = false;
  const std::uint32_t count = read_u32_or_throw(in_, record_index_, &clean_eof);
  if (clean_eof) return std::nullopt;
  if (count > kMaxRecordElements) {
    throw FormatError("record " + std::to_string(record_index_) + ": element count " +
                      std::to_string(count) + " exceeds the format limit");
  }

  // Element payloads are variable length, so parse as we buffer the body.
  std::vector<std::uint8_t> body;
  put_u32(body, count);
  PackedSequence seq;
  seq.elements.reserve(count);
  const std::size_t patch_bytes = static_cast<std::size_t>(patch_size_) * patch_size_ * 3;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint8_t tag = 0;
    read_exact(in_, record_index_, &tag, 1);
    body.push_back(tag);
    std::size_t payload = 0;
    switch (tag) {
      case 0: payload = 4; break;
      case 1: payload = patch_bytes; break;
      case 2: payload = 1; break;
      case 3: payload = 0; break;
      default:
        throw FormatError("record " + std::to_string(record_index_) + ": invalid element tag " +
                          std::to_string(tag));
    }
    const std::size_t at = body.size();
    body.resize(at + payload);
    read_exact(in_, record_index_, body.data() + at, payload);
  }
  const std::size_t tail = count * 4 + (count + 7) / 8;
  const std::size_t at = body.size();
  body.resize(at + tail);
  read_exact(in_, record_index_, body.data() + at, tail);

  std::uint32_t stored_crc = 0;
  read_exact(in_, record_index_, reinterpret_cast<std::uint8_t*>(&stored_crc), 4);
  if (stored_crc != crc_of(body)) {
    throw ChecksumError("record " + std::to_string(record_index_) + ": CRC32 mismatch");
  }

  RecordParser p(body, record_index_);
  (void)p.u32();  // count, already known
  for (std::uint32_t i = 0; i < count; ++i) seq.elements.push_back(decode_element(p, patch_size_));
  seq.segment_ids.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) seq.segment_ids.push_back(p.u32());
  seq.loss_mask = decode_mask_bits(p, count);

  std::uint32_t max_real = 0;
  bool any_real = false;
  for (std::uint32_t i = 0; i < count; ++i) {
    if (!seq.elements[i].is(TokenElement::Kind::Pad)) {
      max_real = std::max(max_real, seq.segment_ids[i]);
      any_real = true;
    }
  }
  seq.num_segments = any_real ? max_real + 1 : 0;

  ++record_index_;
  return seq;
}

void write_packed_file(std::ostream& out, std::span<const PackedSequence> seqs,
                       std::uint32_t patch_size) {
  PackedWriter writer(out, patch_size);
  for (const PackedSequence& s : seqs) writer.write(s);
}

std::vector<PackedSequence> read_packed_file(std::istream& in, std::uint32_t* patch_size) {
  PackedReader reader(in);
  if (patch_size != nullptr) *patch_size = reader.patch_size();
  std::vector<PackedSequence> out;
  while (auto seq = reader.next()) out.push_back(std::move(*seq));
  return out;
}

ExampleWriter::ExampleWriter(std::ostream& out, std::uint32_t patch_size,
                             std::uint32_t text_vocab_size)
    : out_(out), patch_size_(patch_size) {
  out_.write(kExampleMagic, 4);
  const std::uint32_t version = kPackedFormatVersion;
  out_.write(reinterpret_cast<const char*>(&version), 4);
  out_.write(reinterpret_cast<const char*>(&patch_size_), 4);
  out_.write(reinterpret_cast<const char*>(&text_vocab_size), 4);
  if (!out_) throw Error("write failed");
}

void ExampleWriter::write(const Example& example) {
  example.validate();
  std::vector<std::uint8_t> body;
  put_u32(body, static_cast<std::uint32_t>(example.source_dataset.size()));
  body.insert(body.end(), example.source_dataset.begin(), example.source_dataset.end());
  body.push_back(static_cast<std::uint8_t>(example.kind));
  body.push_back(static_cast<std::uint8_t>(example.loss_on_prompt));
  put_u32(body, example.response_start);
  put_u32(body, static_cast<std::uint32_t>(example.elements.size()));
  for (const TokenElement& e : example.elements) encode_element(body, e, patch_size_);
  write_record(out_, body);
  ++records_;
}

ExampleReader::ExampleReader(std::istream& in) : in_(in) {
  check_header(in_, kExampleMagic, "example-corpus");
  patch_size_ = read_u32_or_throw(in_, 0);
  text_vocab_size_ = read_u32_or_throw(in_, 0);
}

std::optional<Example> ExampleReader::next() {
  bool clean_eof = false;
  const std::uint32_t name_len = read_u32_or_throw(in_, record_index_, &clean_eof);
  if (clean_eof) return std::nullopt;
  if (name_len > kMaxNameLength) {
    throw FormatError("record " + std::to_string(record_index_) + ": dataset name length " +
                      std::to_string(name_len) + " exceeds the format limit");
  }

  std::vector<std::uint8_t> body;
  put_u32(body, name_len);
  {
    const std::size_t at = body.size();
    body.resize(at + name_len + 1 + 1 + 4 + 4);
    read_exact(in_, record_index_, body.data() + at, name_len + 1 + 1 + 4 + 4);
  }
  std::uint32_t count = 0;
  std::memcpy(&count, body.data() + body.size() - 4, 4);
  if (count > kMaxRecordElements) {
    throw FormatError("record " + std::to_string(record_index_) + ": element count " +
                      std::to_string(count) + " exceeds the format limit");
  }

  const std::size_t patch_bytes = static_cast<std::size_t>(patch_size_) * patch_size_ * 3;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint8_t tag = 0;
    read_exact(in_, record_index_, &tag, 1);
    body.push_back(tag);
    std::size_t payload = 0;
    switch (tag) {
      case 0: payload = 4; break;
      case 1: payload = patch_bytes; break;
      case 2: payload = 1; break;
      case 3: payload = 0; break;
      default:
        throw FormatError("record " + std::to_string(record_index_) + ": invalid element tag " +
                          std::to_string(tag));
    }
    const std::size_t at = body.size();
    body.resize(at + payload);
    read_exact(in_, record_index_, body.data() + at, payload);
  }

  std::uint32_t stored_crc = 0;
  read_exact(in_, record_index_, reinterpret_cast<std::uint8_t*>(&stored_crc), 4);
  if (stored_crc != crc_of(body)) {
    throw ChecksumError("record " + std::to_string(record_index_) + ": CRC32 mismatch");
  }

  RecordParser p(body, record_index_);
  Example ex;
  const std::uint32_t nlen = p.u32();
  auto name = p.bytes(nlen);
  ex.source_dataset.assign(name.begin(), name.end());
  const std::uint8_t kind = p.u8();
  if (kind > 2) p.fail("invalid example kind " + std::to_string(kind));
  ex.kind = static_cast<ExampleKind>(kind);
  ex.loss_on_prompt = p.u8() != 0;
  ex.response_start = p.u32();
  const std::uint32_t n = p.u32();
  ex.elements.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) ex.elements.push_back(decode_element(p, patch_size_));

  ++record_index_;
  return ex;
}

}  // namespace solo
