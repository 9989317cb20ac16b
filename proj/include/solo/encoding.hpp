#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "solo/image.hpp"

namespace solo {

/// Special tokens marking vision structure inside a token sequence.
enum class SpecialToken : std::uint8_t {
  VisionBegin = 0,  // <vision>
  VisionEnd = 1,    // </vision>
  VRowSep = 2,      // <vrow_sep>
};

/// Id layout: text tokens occupy [0, text_vocab_size); the three vision
/// special tokens sit directly above as appended embedding rows. The patch
/// sentinel id is reserved for serialized/debug dumps only and never has an
/// embedding row.
struct Vocabulary {
  std::uint32_t text_vocab_size = 256;

  std::uint32_t special_id(SpecialToken s) const {
    return text_vocab_size + static_cast<std::uint32_t>(s);
  }
  std::uint32_t vision_begin_id() const { return special_id(SpecialToken::VisionBegin); }
  std::uint32_t vision_end_id() const { return special_id(SpecialToken::VisionEnd); }
  std::uint32_t vrow_sep_id() const { return special_id(SpecialToken::VRowSep); }
  std::uint32_t patch_sentinel_id() const { return text_vocab_size + 3; }
  /// Rows of the embedding table / width of the output head.
  std::uint32_t embedding_rows() const { return text_vocab_size + 3; }
};

/// One slot of a multimodal sequence: a text token, a raw-pixel patch, a
/// vision special token, or tail padding.
struct TokenElement {
  enum class Kind : std::uint8_t { Text = 0, Patch = 1, Special = 2, Pad = 3 };

  Kind kind = Kind::Pad;
  std::uint32_t id = 0;              // Text: token id; Special: SpecialToken value
  std::vector<std::uint8_t> pixels;  // Patch: P*P*3 raw bytes

  static TokenElement text(std::uint32_t id) { return {Kind::Text, id, {}}; }
  static TokenElement patch(std::vector<std::uint8_t> pixels) {
    return {Kind::Patch, 0, std::move(pixels)};
  }
  static TokenElement patch(std::span<const std::uint8_t> pixels) {
    return {Kind::Patch, 0, {pixels.begin(), pixels.end()}};
  }
  static TokenElement special(SpecialToken s) {
    return {Kind::Special, static_cast<std::uint32_t>(s), {}};
  }
  static TokenElement pad() { return {}; }

  bool is(Kind k) const { return kind == k; }
  SpecialToken special_kind() const { return static_cast<SpecialToken>(id); }

  bool operator==(const TokenElement&) const = default;
};

/// Geometry of the vision span an aligned image produces:
/// <vision> + rows*cols patches + (rows-1) row separators + </vision>.
struct VisionSpanGeometry {
  std::int64_t rows = 0;
  std::int64_t cols = 0;

  std::int64_t patch_tokens() const { return rows * cols; }
  std::int64_t separators() const { return rows - 1; }
  std::int64_t special_tokens() const { return separators() + 2; }
  std::int64_t total_elements() const { return patch_tokens() + special_tokens(); }
};

/// Span geometry for an image with the given *resized* (patch-aligned) dims.
VisionSpanGeometry vision_span_geometry(ImageDims resized, const PreprocessConfig& cfg);

/// Serialize a patch grid into sequence elements: VisionBegin, then patches
/// row by row left-to-right with one VRowSep between consecutive rows, then
/// VisionEnd. Length = rows*cols + (rows-1) + 2.
std::vector<TokenElement> layout_vision_span(const PatchGrid& grid);

/// Flatten an 8-bit patch row-major as (row, col, channel) and map each value
/// into [-1, 1] via x/255*2-1.
std::vector<double> normalize_patch(std::span<const std::uint8_t> patch);

/// Trainable linear map from flattened P*P*3 pixel vectors into the model
/// embedding space.
struct ProjectorWeights {
  std::size_t in_dim = 0;   // P*P*3
  std::size_t d_model = 0;
  std::vector<double> weight;  // in_dim x d_model, row-major
  std::vector<double> bias;    // d_model

  void validate() const;
};

/// Project every patch of the grid: row i = normalize_patch(patch_i) * W + b.
/// Returns a patch_count x d_model row-major matrix.
std::vector<double> project_patches(const PatchGrid& grid, const ProjectorWeights& w);

/// Per-position input embeddings for a mixed sequence: embedding-table rows
/// for Text/Special elements, projected pixels for Patch elements, zeros for
/// padding. `text_embeddings` has vocab.embedding_rows() rows of length
/// w.d_model. Returns an elements.size() x d_model row-major matrix.
std::vector<double> embed_sequence(std::span<const TokenElement> elements,
                                   const Vocabulary& vocab,
                                   std::span<const double> text_embeddings,
                                   const ProjectorWeights& w);

}  // namespace solo
