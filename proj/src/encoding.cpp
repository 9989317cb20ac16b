#include "solo/encoding.hpp"

#include <cstring>
#include <string>

#include "solo/kernels.hpp"

namespace solo {

VisionSpanGeometry vision_span_geometry(ImageDims resized, const PreprocessConfig& cfg) {
  cfg.validate();
  if (resized.width % cfg.patch_size != 0 || resized.height % cfg.patch_size != 0) {
    throw AlignmentError("span geometry needs patch-aligned dims, got " +
                         std::to_string(resized.width) + "x" + std::to_string(resized.height));
  }
  return {resized.height / cfg.patch_size, resized.width / cfg.patch_size};
}

std::vector<TokenElement> layout_vision_span(const PatchGrid& grid) {
  if (grid.rows < 1 || grid.cols < 1 || grid.patch_count() == 0) {
    throw InvalidInputError("cannot lay out an empty patch grid");
  }
  if (grid.data.size() !=
      static_cast<std::size_t>(grid.patch_count() * grid.patch_bytes())) {
    throw InvalidInputError("patch grid data size does not match rows*cols patches");
  }

  std::vector<TokenElement> span;
  span.reserve(static_cast<std::size_t>(grid.patch_count() + grid.rows + 1));
  span.push_back(TokenElement::special(SpecialToken::VisionBegin));
  for (std::int64_t r = 0; r < grid.rows; ++r) {
    if (r > 0) span.push_back(TokenElement::special(SpecialToken::VRowSep));
    for (std::int64_t c = 0; c < grid.cols; ++c) {
      span.push_back(TokenElement::patch(grid.patch(r * grid.cols + c)));
    }
  }
  span.push_back(TokenElement::special(SpecialToken::VisionEnd));
  return span;
}

std::vector<double> normalize_patch(std::span<const std::uint8_t> patch) {
  std::vector<double> out(patch.size());
  kernels::u8_to_unit(patch.data(), out.data(), patch.size());
  return out;
}

void ProjectorWeights::validate() const {
  if (in_dim == 0 || d_model == 0 || weight.size() != in_dim * d_model ||
      bias.size() != d_model) {
    throw DimensionError("projector weights have inconsistent shapes");
  }
}

std::vector<double> project_patches(const PatchGrid& grid, const ProjectorWeights& w) {
  w.validate();
  const auto in_dim = static_cast<std::size_t>(grid.patch_bytes());
  if (in_dim != w.in_dim) {
    throw DimensionError("projector expects " + std::to_string(w.in_dim) +
                         " inputs, patch has " + std::to_string(in_dim));
  }
  const auto n = static_cast<std::size_t>(grid.patch_count());
  std::vector<double> normalized(n * in_dim);
  kernels::u8_to_unit(grid.data.data(), normalized.data(), grid.data.size());

  std::vector<double> out(n * w.d_model, 0.0);
  kernels::gemm_nn(n, in_dim, w.d_model, normalized.data(), w.weight.data(), out.data());
  for (std::size_t i = 0; i < n; ++i) {
    kernels::axpy(1.0, w.bias.data(), out.data() + i * w.d_model, w.d_model);
  }
  return out;
}

std::vector<double> embed_sequence(std::span<const TokenElement> elements,
                                   const Vocabulary& vocab,
                                   std::span<const double> text_embeddings,
                                   const ProjectorWeights& w) {
  w.validate();
  const std::size_t d = w.d_model;
  if (text_embeddings.size() != static_cast<std::size_t>(vocab.embedding_rows()) * d) {
    throw DimensionError("embedding table size does not match vocabulary x d_model");
  }

  const std::size_t len = elements.size();
  std::vector<double> out(len * d, 0.0);

  // Table rows first; patch positions are gathered and projected in one GEMM.
  std::vector<std::size_t> patch_positions;
  for (std::size_t t = 0; t < len; ++t) {
    const TokenElement& e = elements[t];
    switch (e.kind) {
      case TokenElement::Kind::Text: {
        if (e.id >= vocab.text_vocab_size) {
          throw VocabularyError("text id " + std::to_string(e.id) + " out of range (vocab " +
                                std::to_string(vocab.text_vocab_size) + ")");
        }
        std::memcpy(out.data() + t * d, text_embeddings.data() + e.id * d, d * sizeof(double));
        break;
      }
      case TokenElement::Kind::Special: {
        if (e.id > 2) throw VocabularyError("unknown special token kind " + std::to_string(e.id));
        const std::uint32_t row = vocab.text_vocab_size + e.id;
        std::memcpy(out.data() + t * d, text_embeddings.data() + row * d, d * sizeof(double));
        break;
      }
      case TokenElement::Kind::Patch: {
        if (e.pixels.size() != w.in_dim) {
          throw DimensionError("patch has " + std::to_string(e.pixels.size()) +
                               " bytes, projector expects " + std::to_string(w.in_dim));
        }
        patch_positions.push_back(t);
        break;
      }
      case TokenElement::Kind::Pad:
        break;  // zero row
    }
  }

  if (!patch_positions.empty()) {
    const std::size_t np = patch_positions.size();
    std::vector<double> normalized(np * w.in_dim);
    for (std::size_t i = 0; i < np; ++i) {
      const auto& pix = elements[patch_positions[i]].pixels;
      kernels::u8_to_unit(pix.data(), normalized.data() + i * w.in_dim, w.in_dim);
    }
    std::vector<double> projected(np * d, 0.0);
    kernels::gemm_nn(np, w.in_dim, d, normalized.data(), w.weight.data(), projected.data());
    for (std::size_t i = 0; i < np; ++i) {
      double* row = projected.data() + i * d;
      kernels::axpy(1.0, w.bias.data(), row, d);
      std::memcpy(out.data() + patch_positions[i] * d, row, d * sizeof(double));
    }
  }
  return out;
}

}  // namespace solo
