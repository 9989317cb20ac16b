#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "solo/image.hpp"
#include "solo/tokenizer.hpp"

namespace solo {

enum class Modality : std::uint8_t { TextOnly, ImageText };

struct DatasetEntry {
  std::string name;
  std::filesystem::path manifest_path;
  Modality modality = Modality::TextOnly;
  double weight = 0.0;
};

/// Per-stage mixture: dataset weights plus the text-blend multiplier, which
/// scales the weight of text-only entries and nothing else.
struct MixtureSpec {
  int stage = 1;
  std::vector<DatasetEntry> entries;
  double text_blend_multiplier = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<double> effective_weights() const;

  static MixtureSpec load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;
};

struct DatasetAccount {
  std::string name;
  std::uint64_t records = 0;
  std::uint64_t images = 0;
  std::uint64_t text_tokens = 0;
  std::uint64_t vision_tokens = 0;   // one per patch of the resized image
  std::uint64_t special_tokens = 0;  // vision begin/end + row separators, excluded from both classes
};

struct TokenAccount {
  std::vector<DatasetAccount> per_dataset;

  std::uint64_t text_tokens() const;
  std::uint64_t vision_tokens() const;
  std::uint64_t special_tokens() const;
  /// Percent of text+vision tokens (specials excluded); the pair sums to 100.
  double text_pct() const;
  double vision_pct() const;

  /// Componentwise merge; accounting is additive over disjoint corpora.
  TokenAccount& merge(const TokenAccount& other);
};

/// Count tokens per dataset from the entries' corpus manifests. Text tokens
/// use the tokenizer; vision tokens are (W'/P)*(H'/P) from resize_output_dims
/// per image. Throws IngestionError naming the dataset on unreadable input.
TokenAccount account_tokens(std::span<const DatasetEntry> entries, const Tokenizer& tokenizer,
                            const PreprocessConfig& cfg);

/// One schedule step: which dataset to draw from and how many draws that
/// dataset has received before this one (consumers index examples with
/// draw_ordinal modulo their corpus size).
struct ScheduleDraw {
  std::uint32_t dataset_index = 0;
  std::uint64_t draw_ordinal = 0;
};

/// Deterministic weighted schedule: dataset choice at step s is a pure
/// stateless hash of (seed, s) mapped through the cumulative effective
/// weights, so a schedule can be regenerated from any point without RNG
/// state. Throws ConfigError when every effective weight is zero.
std::vector<ScheduleDraw> plan_schedule(const MixtureSpec& spec, std::uint64_t total_draws);

/// Dataset-role template for one pre-training stage, with default weights;
/// paths are left empty for configuration. Stage 1 pairs label-prediction
/// image-text with a text blend; stage 2 adds web captions, markup and a
/// small supervised mix; stage 3 is high-quality supervised data with a small
/// text blend.
MixtureSpec stage_curriculum(int stage);

}  // namespace solo
