#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "solo/encoding.hpp"

namespace solo {

enum class ExampleKind : std::uint8_t {
  PretrainText = 0,
  PretrainCaptioned = 1,
  Supervised = 2,
};

/// One training example before packing. Vision spans must be well formed:
/// balanced begin/end, row separators and patches only inside spans.
struct Example {
  std::vector<TokenElement> elements;
  std::string source_dataset;
  ExampleKind kind = ExampleKind::PretrainText;
  /// Supervised: index of the first response element. Targets before it are
  /// masked out of the loss unless loss_on_prompt is set. 0 = all text
  /// eligible.
  std::uint32_t response_start = 0;
  bool loss_on_prompt = false;

  void validate() const;
};

constexpr std::size_t kDefaultMaxSequenceLength = 32768;

/// A fixed-length packed sequence. segment_ids are nondecreasing and
/// partition the elements into one contiguous run per packed example part;
/// tail padding carries the reserved id num_segments (= max real id + 1).
struct PackedSequence {
  std::vector<TokenElement> elements;
  std::vector<std::uint32_t> segment_ids;
  std::vector<std::uint8_t> loss_mask;  // 0/1 per position
  std::uint32_t num_segments = 0;

  std::size_t size() const { return elements.size(); }
  std::uint32_t pad_segment_id() const { return num_segments; }

  void validate() const;

  bool operator==(const PackedSequence&) const = default;
};

enum class PackMode : std::uint8_t {
  /// May split an example at a text-token boundary (never inside a vision
  /// span); loss is eligible on every text target.
  Pretrain,
  /// Never splits; prompt targets are masked unless the example sets
  /// loss_on_prompt.
  Supervised,
};

/// Greedy first-fit packer in arrival order with a single open sequence.
/// Sequences are emitted as they fill; flush() pads and emits the remainder.
class Packer {
 public:
  Packer(std::size_t s_max, PackMode mode);

  /// Append one example, emitting any sequences it completes.
  void add(const Example& example, std::vector<PackedSequence>& out);
  std::optional<PackedSequence> flush();

  std::size_t s_max() const { return s_max_; }
  PackMode mode() const { return mode_; }

 private:
  void append_part(const Example& example, std::size_t begin, std::size_t end);
  PackedSequence close();

  std::size_t s_max_;
  PackMode mode_;
  std::vector<TokenElement> elements_;
  std::vector<std::uint32_t> segment_ids_;
  std::vector<std::uint8_t> target_eligible_;
  std::uint32_t segment_count_ = 0;
};

/// Convenience wrapper: pack a whole batch and flush.
std::vector<PackedSequence> pack_examples(std::span<const Example> examples,
                                          std::size_t s_max, PackMode mode);

/// Causal attention restricted to one segment: allowed(q, k) iff k <= q,
/// q and k share a segment id, and neither position is padding. Segments are
/// contiguous, so each query attends to exactly [segment_start(q), q].
struct AttentionPredicate {
  std::vector<std::uint32_t> segment_ids;
  std::vector<std::uint8_t> is_pad;
  std::vector<std::size_t> segment_start;

  std::size_t size() const { return segment_ids.size(); }
  bool allowed(std::size_t q, std::size_t k) const {
    return k <= q && !is_pad[q] && !is_pad[k] && segment_ids[q] == segment_ids[k];
  }
};

AttentionPredicate build_attention_predicate(const PackedSequence& seq);

/// Next-token loss mask: position t is on iff t+1 exists, lies in the same
/// segment, is a Text element, and is loss-eligible (eligibility encodes the
/// supervised response-region rule; empty means every target is eligible).
std::vector<std::uint8_t> build_loss_mask(std::span<const TokenElement> elements,
                                          std::span<const std::uint32_t> segment_ids,
                                          std::span<const std::uint8_t> target_eligible = {});

/// Recompute the mask of an existing sequence under the pretrain rule.
std::vector<std::uint8_t> build_loss_mask(const PackedSequence& seq);

}  // namespace solo
