#include "solo/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "solo/decode.hpp"
#include "solo/encoding.hpp"
#include "solo/manifest.hpp"

namespace solo {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Stateless per-step hash; uniform in [0, 1).
double schedule_unit(std::uint64_t seed, std::uint64_t step) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(step));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::string_view to_string(Modality m) {
  return m == Modality::TextOnly ? "text-only" : "image-text";
}

Modality modality_from_string(std::string_view s) {
  if (s == "text-only") return Modality::TextOnly;
  if (s == "image-text") return Modality::ImageText;
  throw ConfigError("unknown modality '" + std::string(s) + "'");
}

}  // namespace

void MixtureSpec::validate() const {
  if (stage < 1 || stage > 3) throw ConfigError("stage must be 1, 2 or 3, got " + std::to_string(stage));
  if (text_blend_multiplier <= 0.0) throw ConfigError("text_blend_multiplier must be positive");
  if (entries.empty()) throw ConfigError("mixture has no datasets");
  double total = 0.0;
  for (const DatasetEntry& e : entries) {
    if (e.weight < 0.0 || !std::isfinite(e.weight)) {
      throw ConfigError("dataset '" + e.name + "' has an invalid weight");
    }
    total += e.weight;
  }
  if (total <= 0.0) throw ConfigError("at least one dataset weight must be positive");
}

std::vector<double> MixtureSpec::effective_weights() const {
  std::vector<double> w;
  w.reserve(entries.size());
  for (const DatasetEntry& e : entries) {
    w.push_back(e.modality == Modality::TextOnly ? e.weight * text_blend_multiplier : e.weight);
  }
  return w;
}

MixtureSpec MixtureSpec::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IngestionError("cannot open mixture spec " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("mixture spec is not valid JSON: " + std::string(e.what()));
  }
  MixtureSpec spec;
  try {
    spec.stage = j.at("stage").get<int>();
    if (j.contains("text_blend_multiplier")) {
      spec.text_blend_multiplier = j["text_blend_multiplier"].get<double>();
    }
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
    for (const auto& ej : j.at("entries")) {
      DatasetEntry e;
      e.name = ej.at("name").get<std::string>();
      if (ej.contains("path")) e.manifest_path = ej["path"].get<std::string>();
      e.modality = modality_from_string(ej.at("modality").get<std::string>());
      e.weight = ej.at("weight").get<double>();
      spec.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("mixture spec field error: " + std::string(e.what()));
  }
  spec.validate();
  return spec;
}

void MixtureSpec::save(const std::filesystem::path& file) const {
  nlohmann::json j;
  j["stage"] = stage;
  j["text_blend_multiplier"] = text_blend_multiplier;
  j["seed"] = seed;
  j["entries"] = nlohmann::json::array();
  for (const DatasetEntry& e : entries) {
    j["entries"].push_back({{"name", e.name},
                            {"path", e.manifest_path.string()},
                            {"modality", std::string(to_string(e.modality))},
                            {"weight", e.weight}});
  }
  std::ofstream out(file);
  if (!out) throw Error("cannot write mixture spec " + file.string());
  out << j.dump(2) << "\n";
}

std::uint64_t TokenAccount::text_tokens() const {
  std::uint64_t n = 0;
  for (const auto& d : per_dataset) n += d.text_tokens;
  return n;
}

std::uint64_t TokenAccount::vision_tokens() const {
  std::uint64_t n = 0;
  for (const auto& d : per_dataset) n += d.vision_tokens;
  return n;
}

std::uint64_t TokenAccount::special_tokens() const {
  std::uint64_t n = 0;
  for (const auto& d : per_dataset) n += d.special_tokens;
  return n;
}

double TokenAccount::text_pct() const {
  const std::uint64_t total = text_tokens() + vision_tokens();
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(text_tokens()) / static_cast<double>(total);
}

double TokenAccount::vision_pct() const {
  const std::uint64_t total = text_tokens() + vision_tokens();
  return total == 0 ? 0.0
                    : 100.0 * static_cast<double>(vision_tokens()) / static_cast<double>(total);
}

TokenAccount& TokenAccount::merge(const TokenAccount& other) {
  for (const DatasetAccount& d : other.per_dataset) {
    auto it = std::find_if(per_dataset.begin(), per_dataset.end(),
                           [&](const DatasetAccount& mine) { return mine.name == d.name; });
    if (it == per_dataset.end()) {
      per_dataset.push_back(d);
    } else {
      it->records += d.records;
      it->images += d.images;
      it->text_tokens += d.text_tokens;
      it->vision_tokens += d.vision_tokens;
      it->special_tokens += d.special_tokens;
    }
  }
  return *this;
}

TokenAccount account_tokens(std::span<const DatasetEntry> entries, const Tokenizer& tokenizer,
                            const PreprocessConfig& cfg) {
  TokenAccount account;
  for (const DatasetEntry& entry : entries) {
    DatasetAccount acc;
    acc.name = entry.name;
    try {
      for_each_manifest_line(entry.manifest_path, [&](std::size_t lineno, const std::string& line) {
        ManifestRecord rec;
        try {
          rec = parse_manifest_line(line);
        } catch (const Error& e) {
          throw IngestionError("line " + std::to_string(lineno) + ": " + e.what());
        }
        acc.records += 1;
        acc.text_tokens += tokenizer.encode(rec.text).size();
        if (rec.response.has_value()) acc.text_tokens += tokenizer.encode(*rec.response).size();
        if (rec.image_path.has_value()) {
          const ImageDims dims = rec.image_dims.has_value()
                                     ? *rec.image_dims
                                     : probe_image_dims(rec.image_path.value());
          const VisionSpanGeometry geom = vision_span_geometry(resize_output_dims(dims, cfg), cfg);
          acc.images += 1;
          acc.vision_tokens += static_cast<std::uint64_t>(geom.patch_tokens());
          acc.special_tokens += static_cast<std::uint64_t>(geom.special_tokens());
        }
      });
    } catch (const Error& e) {
      throw IngestionError("dataset '" + entry.name + "': " + e.what());
    }
    account.per_dataset.push_back(std::move(acc));
  }
  return account;
}

std::vector<ScheduleDraw> plan_schedule(const MixtureSpec& spec, std::uint64_t total_draws) {
  spec.validate();
  const std::vector<double> weights = spec.effective_weights();
  std::vector<double> cumulative(weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    total += weights[i];
    cumulative[i] = total;
  }
  if (total <= 0.0) throw ConfigError("all effective weights are zero");

  std::vector<ScheduleDraw> draws;
  draws.reserve(total_draws);
  std::vector<std::uint64_t> per_dataset_count(weights.size(), 0);
  for (std::uint64_t step = 0; step < total_draws; ++step) {
    const double u = schedule_unit(spec.seed, step) * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const auto idx = static_cast<std::uint32_t>(
        std::min<std::ptrdiff_t>(it - cumulative.begin(),
                                 static_cast<std::ptrdiff_t>(weights.size()) - 1));
    draws.push_back({idx, per_dataset_count[idx]});
    per_dataset_count[idx] += 1;
  }
  return draws;
}

MixtureSpec stage_curriculum(int stage) {
  MixtureSpec spec;
  spec.stage = stage;
  switch (stage) {
    case 1:
      // Label prediction conditioned on patches, plus the text blend that
      // preserves language capability.
      spec.entries = {
          {"imagenet-labels", {}, Modality::ImageText, 0.38},
          {"text-blend", {}, Modality::TextOnly, 0.62},
      };
      break;
    case 2:
      spec.entries = {
          {"web-captions", {}, Modality::ImageText, 0.55},
          {"web-markup", {}, Modality::ImageText, 0.16},
          {"supervised-mix", {}, Modality::ImageText, 0.02},
          {"text-blend", {}, Modality::TextOnly, 0.27},
      };
      break;
    case 3:
      spec.entries = {
          {"supervised-hq", {}, Modality::ImageText, 0.68},
          {"text-blend", {}, Modality::TextOnly, 0.32},
      };
      break;
    default:
      throw ConfigError("unknown pre-training stage " + std::to_string(stage));
  }
  return spec;
}

}  // namespace solo
