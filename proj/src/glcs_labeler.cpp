#include "sgt/glcs_labeler.hpp"

#include <algorithm>

#include "sgt/error.hpp"

namespace sgt {

std::string tag_name(TagLabel tag) {
  if (tag.is_outside()) return "O";
  const int k = tag.order();
  if (k < 26) return std::string(1, static_cast<char>('A' + k));
  return "I" + std::to_string(k);
}

std::optional<PrefixMatch> longest_prefix_match(std::span<const Token> remainder,
                                                std::span<const Token> haystack,
                                                std::span<const std::uint8_t> claimed) {
  if (remainder.empty()) throw Error(ErrorCode::InvalidArgument, "empty reference remainder");
  const bool use_mask = !claimed.empty();
  PrefixMatch best;
  for (std::size_t start = 0; start < haystack.size(); ++start) {
    std::size_t len = 0;
    while (start + len < haystack.size() && len < remainder.size() &&
           !(use_mask && claimed[start + len]) && haystack[start + len].same_unit(remainder[len])) {
      ++len;
    }
    // >= keeps the rightmost start on ties.
    if (len > 0 && len >= best.length) best = {start, len};
  }
  if (best.length == 0) return std::nullopt;
  return best;
}

GlcsDecomposition build_glcs_spans(const AssembledInput& input, std::span<const Token> reference,
                                   int max_fragments) {
  if (reference.empty()) throw Error(ErrorCode::InvalidArgument, "empty reference");
  GlcsDecomposition out;
  std::vector<std::uint8_t> claimed(input.tokens.size(), 0);
  const std::span<const Token> tokens(input.tokens);
  std::size_t consumed = 0;

  while (consumed < reference.size()) {
    const auto remainder = reference.subspan(consumed);
    std::optional<GlcsSpan> best;
    for (const auto& region : input.regions) {
      if (region.length == 0) continue;
      const auto match = longest_prefix_match(remainder, tokens.subspan(region.start, region.length),
                                              std::span<const std::uint8_t>(claimed).subspan(region.start, region.length));
      if (!match) continue;
      const std::size_t start = region.start + match->position;
      // Regions are visited in H order, so >= prefers the latest start.
      if (!best || match->length > best->length || (match->length == best->length && start >= best->start)) {
        best = GlcsSpan{0, start, match->length, region.utterance_index};
      }
    }
    if (!best) {
      out.failure = CoverFailure::NoMatch;
      out.residue.assign(remainder.begin(), remainder.end());
      return out;
    }
    if (static_cast<int>(out.spans.size()) >= max_fragments) {
      out.failure = CoverFailure::TooManyFragments;
      out.residue.assign(remainder.begin(), remainder.end());
      return out;
    }
    best->order = static_cast<int>(out.spans.size());
    std::fill_n(claimed.begin() + static_cast<std::ptrdiff_t>(best->start), best->length, 1);
    consumed += best->length;
    out.spans.push_back(*best);
  }
  return out;
}

std::vector<TagLabel> spans_to_sgt_labels(std::span<const GlcsSpan> spans, std::size_t length, int tag_classes) {
  std::vector<TagLabel> labels(length, TagLabel::outside());
  for (const auto& s : spans) {
    if (s.order < 0 || s.order > tag_classes - 2) {
      throw Error(ErrorCode::OrderOverflow, "span order " + std::to_string(s.order) + " needs more than " +
                                                std::to_string(tag_classes) + " tag classes");
    }
    if (s.end() > length) throw Error(ErrorCode::InvalidArgument, "span exceeds sequence length");
    for (std::size_t i = s.start; i < s.end(); ++i) {
      if (!labels[i].is_outside()) throw Error(ErrorCode::InvalidArgument, "overlapping spans");
      labels[i] = TagLabel::inside(s.order);
    }
  }
  return labels;
}

std::vector<std::uint8_t> spans_to_gd_labels(std::span<const GlcsSpan> spans, std::size_t length) {
  std::vector<std::uint8_t> labels(length, 0);
  for (const auto& s : spans) {
    if (s.end() > length) throw Error(ErrorCode::InvalidArgument, "span exceeds sequence length");
    std::fill_n(labels.begin() + static_cast<std::ptrdiff_t>(s.start), s.length, 1);
  }
  return labels;
}

std::vector<std::uint8_t> spans_to_ged_labels(std::span<const GlcsSpan> spans, std::size_t length) {
  std::vector<std::uint8_t> labels(length, 0);
  for (const auto& s : spans) {
    if (s.end() > length) throw Error(ErrorCode::InvalidArgument, "span exceeds sequence length");
    if (s.length == 0) continue;
    if (s.length <= 2) {
      std::fill_n(labels.begin() + static_cast<std::ptrdiff_t>(s.start), s.length, 1);
    } else {
      labels[s.start] = 1;
      labels[s.end() - 1] = 1;
    }
  }
  return labels;
}

std::string splice_spans(std::span<const GlcsSpan> spans, std::span<const Token> tokens) {
  std::vector<const GlcsSpan*> ordered;
  for (const auto& s : spans) ordered.push_back(&s);
  std::stable_sort(ordered.begin(), ordered.end(), [](const GlcsSpan* a, const GlcsSpan* b) { return a->order < b->order; });
  std::vector<Token> out;
  for (const auto* s : ordered) {
    out.insert(out.end(), tokens.begin() + static_cast<std::ptrdiff_t>(s->start),
               tokens.begin() + static_cast<std::ptrdiff_t>(s->end()));
  }
  return detokenize(out);
}

LabelOutcome build_labeled_example(const Dialogue& d, const LabelConfig& config) {
  if (!d.reference) throw Error(ErrorCode::InvalidArgument, "dialogue has no reference");
  const auto reference = tokenize(*d.reference);
  LabelOutcome outcome;
  auto input = assemble_input(d, config.connection_words, config.speaker_width);
  if (reference.empty()) {
    outcome.decomposition.failure = CoverFailure::NoMatch;
    return outcome;
  }
  outcome.decomposition = build_glcs_spans(input, reference, config.tag_classes - 1);
  if (!outcome.decomposition.coverable()) return outcome;

  LabeledExample ex;
  ex.spans = outcome.decomposition.spans;
  ex.y_sgt = spans_to_sgt_labels(ex.spans, input.size(), config.tag_classes);
  ex.y_gd = spans_to_gd_labels(ex.spans, input.size());
  ex.y_ged = spans_to_ged_labels(ex.spans, input.size());
  ex.reference = detokenize(reference);
  ex.input = std::move(input);
  outcome.example = std::move(ex);
  return outcome;
}

}  // namespace sgt
