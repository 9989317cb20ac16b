#include "solo/packing.hpp"

#include <algorithm>
#include <string>

namespace solo {

namespace {

// depth[j] = 1 when element j sits strictly inside a vision span that opened
// before it, i.e. a split immediately before j would cut the span.
std::vector<std::uint8_t> span_depth_before(std::span<const TokenElement> elements) {
  std::vector<std::uint8_t> depth(elements.size() + 1, 0);
  int open = 0;
  for (std::size_t j = 0; j < elements.size(); ++j) {
    depth[j] = static_cast<std::uint8_t>(open > 0);
    const TokenElement& e = elements[j];
    if (e.is(TokenElement::Kind::Special)) {
      if (e.special_kind() == SpecialToken::VisionBegin) ++open;
      if (e.special_kind() == SpecialToken::VisionEnd) --open;
    }
  }
  depth[elements.size()] = static_cast<std::uint8_t>(open > 0);
  return depth;
}

}  // namespace

void Example::validate() const {
  int open = 0;
  for (std::size_t j = 0; j < elements.size(); ++j) {
    const TokenElement& e = elements[j];
    switch (e.kind) {
      case TokenElement::Kind::Special:
        if (e.special_kind() == SpecialToken::VisionBegin) {
          if (open > 0) throw InvalidInputError("nested vision span at element " + std::to_string(j));
          ++open;
        } else if (e.special_kind() == SpecialToken::VisionEnd) {
          if (open == 0) throw InvalidInputError("unmatched vision end at element " + std::to_string(j));
          --open;
        } else if (open == 0) {
          throw InvalidInputError("row separator outside a vision span at element " + std::to_string(j));
        }
        break;
      case TokenElement::Kind::Patch:
        if (open == 0) throw InvalidInputError("patch outside a vision span at element " + std::to_string(j));
        break;
      case TokenElement::Kind::Text:
        if (open > 0) throw InvalidInputError("text token inside a vision span at element " + std::to_string(j));
        break;
      case TokenElement::Kind::Pad:
        throw InvalidInputError("pad element inside an example at element " + std::to_string(j));
    }
  }
  if (open != 0) throw InvalidInputError("unterminated vision span");
  if (response_start > elements.size()) {
    throw InvalidInputError("response_start " + std::to_string(response_start) +
                            " exceeds example length " + std::to_string(elements.size()));
  }
}

void PackedSequence::validate() const {
  if (segment_ids.size() != elements.size() || loss_mask.size() != elements.size()) {
    throw InvalidInputError("packed sequence field lengths differ");
  }
  for (std::size_t t = 1; t < segment_ids.size(); ++t) {
    if (segment_ids[t] < segment_ids[t - 1]) {
      throw InvalidInputError("segment ids must be nondecreasing");
    }
  }
  for (std::size_t t = 0; t < elements.size(); ++t) {
    const bool pad = elements[t].is(TokenElement::Kind::Pad);
    if (pad != (segment_ids[t] == pad_segment_id())) {
      throw InvalidInputError("pad elements must carry the reserved pad segment id");
    }
  }
}

Packer::Packer(std::size_t s_max, PackMode mode) : s_max_(s_max), mode_(mode) {
  if (s_max_ == 0) throw InvalidInputError("sequence capacity must be positive");
}

void Packer::append_part(const Example& example, std::size_t begin, std::size_t end) {
  const bool restrict_to_response =
      mode_ == PackMode::Supervised && example.kind == ExampleKind::Supervised &&
      !example.loss_on_prompt;
  for (std::size_t j = begin; j < end; ++j) {
    elements_.push_back(example.elements[j]);
    segment_ids_.push_back(segment_count_);
    const bool eligible = example.elements[j].is(TokenElement::Kind::Text) &&
                          (!restrict_to_response || j >= example.response_start);
    target_eligible_.push_back(static_cast<std::uint8_t>(eligible));
  }
  ++segment_count_;
}

PackedSequence Packer::close() {
  PackedSequence seq;
  seq.num_segments = segment_count_;
  seq.elements = std::move(elements_);
  seq.segment_ids = std::move(segment_ids_);
  std::vector<std::uint8_t> eligible = std::move(target_eligible_);
  while (seq.elements.size() < s_max_) {
    seq.elements.push_back(TokenElement::pad());
    seq.segment_ids.push_back(seq.num_segments);
    eligible.push_back(0);
  }
  seq.loss_mask = build_loss_mask(seq.elements, seq.segment_ids, eligible);

  elements_.clear();
  segment_ids_.clear();
  target_eligible_.clear();
  segment_count_ = 0;
  return seq;
}

void Packer::add(const Example& example, std::vector<PackedSequence>& out) {
  example.validate();
  if (example.elements.empty()) return;

  if (mode_ == PackMode::Supervised) {
    if (example.elements.size() > s_max_) {
      throw UnpackableExampleError("supervised example of " +
                                   std::to_string(example.elements.size()) +
                                   " elements exceeds sequence capacity " +
                                   std::to_string(s_max_));
    }
    if (example.elements.size() > s_max_ - elements_.size()) out.push_back(close());
    append_part(example, 0, example.elements.size());
    if (elements_.size() == s_max_) out.push_back(close());
    return;
  }

  // Pretrain mode: fill the remaining capacity, splitting at the latest
  // boundary that does not cut a vision span.
  const auto depth = span_depth_before(example.elements);
  std::size_t offset = 0;
  while (offset < example.elements.size()) {
    const std::size_t remaining = s_max_ - elements_.size();
    const std::size_t tail = example.elements.size() - offset;
    if (tail <= remaining) {
      append_part(example, offset, example.elements.size());
      offset = example.elements.size();
    } else {
      std::size_t take = remaining;
      while (take > 0 && depth[offset + take] != 0) --take;
      if (take == 0) {
        if (elements_.empty()) {
          throw UnpackableExampleError("vision span exceeds sequence capacity " +
                                       std::to_string(s_max_));
        }
      } else {
        append_part(example, offset, offset + take);
        offset += take;
      }
      out.push_back(close());
      continue;
    }
    if (elements_.size() == s_max_) out.push_back(close());
  }
}

std::optional<PackedSequence> Packer::flush() {
  if (elements_.empty()) return std::nullopt;
  return close();
}

std::vector<PackedSequence> pack_examples(std::span<const Example> examples,
                                          std::size_t s_max, PackMode mode) {
  Packer packer(s_max, mode);
  std::vector<PackedSequence> out;
  for (const Example& ex : examples) packer.add(ex, out);
  if (auto last = packer.flush()) out.push_back(std::move(*last));
  return out;
}

AttentionPredicate build_attention_predicate(const PackedSequence& seq) {
  seq.validate();
  AttentionPredicate pred;
  const std::size_t len = seq.size();
  pred.segment_ids = seq.segment_ids;
  pred.is_pad.resize(len);
  pred.segment_start.resize(len);
  for (std::size_t t = 0; t < len; ++t) {
    pred.is_pad[t] = static_cast<std::uint8_t>(seq.elements[t].is(TokenElement::Kind::Pad));
    pred.segment_start[t] =
        (t > 0 && seq.segment_ids[t] == seq.segment_ids[t - 1]) ? pred.segment_start[t - 1] : t;
  }
  return pred;
}

std::vector<std::uint8_t> build_loss_mask(std::span<const TokenElement> elements,
                                          std::span<const std::uint32_t> segment_ids,
                                          std::span<const std::uint8_t> target_eligible) {
  if (segment_ids.size() != elements.size() ||
      (!target_eligible.empty() && target_eligible.size() != elements.size())) {
    throw InvalidInputError("loss mask input lengths differ");
  }
  std::vector<std::uint8_t> mask(elements.size(), 0);
  if (elements.empty()) return mask;
  for (std::size_t t = 0; t + 1 < elements.size(); ++t) {
    const bool same_segment = segment_ids[t] == segment_ids[t + 1];
    const bool text_target = elements[t + 1].is(TokenElement::Kind::Text);
    const bool eligible = target_eligible.empty() || target_eligible[t + 1] != 0;
    mask[t] = static_cast<std::uint8_t>(same_segment && text_target && eligible);
  }
  return mask;
}

std::vector<std::uint8_t> build_loss_mask(const PackedSequence& seq) {
  return build_loss_mask(seq.elements, seq.segment_ids, {});
}

}  // namespace solo
