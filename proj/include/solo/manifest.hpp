#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "solo/image.hpp"
#include "solo/packing.hpp"
#include "solo/tokenizer.hpp"

namespace solo {

/// One line of a corpus manifest (JSONL). Required fields: dataset, text,
/// kind. Optional: image_path, response (supervised response text; `text`
/// then holds the prompt), loss_on_prompt, image_width/image_height
/// (lets accounting skip decoding the image).
struct ManifestRecord {
  std::string dataset;
  std::optional<std::string> image_path;
  std::string text;
  ExampleKind kind = ExampleKind::PretrainText;
  std::optional<std::string> response;
  bool loss_on_prompt = false;
  std::optional<ImageDims> image_dims;
};

ManifestRecord parse_manifest_line(const std::string& json_line);

std::string_view to_string(ExampleKind kind);
ExampleKind example_kind_from_string(std::string_view s);

/// Assemble the element sequence for one record: the vision span first (when
/// an image is supplied), then prompt tokens, then response tokens.
/// `image` must already be decoded; it is resized and patchified here.
/// response_start points at the first response element.
Example build_example(const ManifestRecord& record, const Tokenizer& tokenizer,
                      const PreprocessConfig& cfg, const RawImage* image);

/// Apply each manifest line in order; `line_number` is 1-based. Throws
/// IngestionError when the file cannot be opened.
void for_each_manifest_line(const std::filesystem::path& manifest,
                            const std::function<void(std::size_t line_number,
                                                     const std::string& line)>& fn);

}  // namespace solo
