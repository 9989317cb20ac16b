#include "solo/manifest.hpp"

#include <fstream>

#include <json.hpp>

namespace solo {

std::string_view to_string(ExampleKind kind) {
  switch (kind) {
    case ExampleKind::PretrainText: return "pretrain-text";
    case ExampleKind::PretrainCaptioned: return "pretrain-captioned";
    case ExampleKind::Supervised: return "supervised";
  }
  return "?";
}

ExampleKind example_kind_from_string(std::string_view s) {
  if (s == "pretrain-text") return ExampleKind::PretrainText;
  if (s == "pretrain-captioned") return ExampleKind::PretrainCaptioned;
  if (s == "supervised") return ExampleKind::Supervised;
  throw InvalidInputError("unknown example kind '" + std::string(s) + "'");
}

ManifestRecord parse_manifest_line(const std::string& json_line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_line);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("manifest line is not valid JSON: ") + e.what());
  }
  ManifestRecord rec;
  try {
    rec.dataset = j.at("dataset").get<std::string>();
    rec.text = j.at("text").get<std::string>();
    rec.kind = example_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("image_path") && !j["image_path"].is_null()) {
      rec.image_path = j["image_path"].get<std::string>();
    }
    if (j.contains("response") && !j["response"].is_null()) {
      rec.response = j["response"].get<std::string>();
    }
    if (j.contains("loss_on_prompt")) rec.loss_on_prompt = j["loss_on_prompt"].get<bool>();
    if (j.contains("image_width") && j.contains("image_height")) {
      rec.image_dims = ImageDims{j["image_width"].get<std::int64_t>(),
                                 j["image_height"].get<std::int64_t>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("manifest record field error: ") + e.what());
  }
  return rec;
}

Example build_example(const ManifestRecord& record, const Tokenizer& tokenizer,
                      const PreprocessConfig& cfg, const RawImage* image) {
  Example ex;
  ex.source_dataset = record.dataset;
  ex.kind = record.kind;
  ex.loss_on_prompt = record.loss_on_prompt;

  if (record.image_path.has_value()) {
    if (image == nullptr) throw InvalidInputError("record names an image but none was decoded");
    const RawImage resized = resize_image(*image, cfg);
    const PatchGrid grid = extract_patches(resized, cfg);
    ex.elements = layout_vision_span(grid);
  }

  for (std::uint32_t id : tokenizer.encode(record.text)) {
    ex.elements.push_back(TokenElement::text(id));
  }
  if (record.response.has_value()) {
    ex.response_start = static_cast<std::uint32_t>(ex.elements.size());
    for (std::uint32_t id : tokenizer.encode(*record.response)) {
      ex.elements.push_back(TokenElement::text(id));
    }
  }
  ex.validate();
  return ex;
}

void for_each_manifest_line(const std::filesystem::path& manifest,
                            const std::function<void(std::size_t, const std::string&)>& fn) {
  std::ifstream in(manifest);
  if (!in) throw IngestionError("cannot open manifest " + manifest.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    fn(lineno, line);
  }
}

}  // namespace solo
