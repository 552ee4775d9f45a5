#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgt/corpus.hpp"

namespace sgt {

inline constexpr int kDefaultTagClasses = 11;  // O plus ten order letters

// IO tag: 0 is O, k + 1 is I_k (the fragment with order k, letter 'A' + k).
struct TagLabel {
  std::uint8_t value = 0;

  static constexpr TagLabel outside() { return {0}; }
  static constexpr TagLabel inside(int order) { return {static_cast<std::uint8_t>(order + 1)}; }

  bool is_outside() const { return value == 0; }
  int order() const { return static_cast<int>(value) - 1; }
  friend bool operator==(TagLabel, TagLabel) = default;
};

// "O", "A", "B", ...
std::string tag_name(TagLabel tag);

struct GlcsSpan {
  int order = 0;
  std::size_t start = 0;  // index into AssembledInput::tokens
  std::size_t length = 0;
  int source_utterance = 0;

  std::size_t end() const { return start + length; }
  friend bool operator==(const GlcsSpan&, const GlcsSpan&) = default;
};

struct PrefixMatch {
  std::size_t position = 0;
  std::size_t length = 0;
  friend bool operator==(const PrefixMatch&, const PrefixMatch&) = default;
};

// Longest L such that remainder[0, L) occurs contiguously in the haystack;
// rightmost start among matches of maximal length. Tokens flagged in
// `claimed` (same length as haystack, may be empty) cannot take part.
std::optional<PrefixMatch> longest_prefix_match(std::span<const Token> remainder,
                                                std::span<const Token> haystack,
                                                std::span<const std::uint8_t> claimed = {});

enum class CoverFailure { None, NoMatch, TooManyFragments };

struct GlcsDecomposition {
  std::vector<GlcsSpan> spans;
  std::vector<Token> residue;  // unmatched reference suffix when not coverable
  CoverFailure failure = CoverFailure::None;

  bool coverable() const { return failure == CoverFailure::None; }
};

// Greedy fragment decomposition of the reference over the matchable regions
// of H. At most max_fragments spans (N - 1 for N tag classes).
GlcsDecomposition build_glcs_spans(const AssembledInput& input, std::span<const Token> reference,
                                   int max_fragments = kDefaultTagClasses - 1);

std::vector<TagLabel> spans_to_sgt_labels(std::span<const GlcsSpan> spans, std::size_t length,
                                          int tag_classes = kDefaultTagClasses);
std::vector<std::uint8_t> spans_to_gd_labels(std::span<const GlcsSpan> spans, std::size_t length);
std::vector<std::uint8_t> spans_to_ged_labels(std::span<const GlcsSpan> spans, std::size_t length);

struct LabelConfig {
  std::vector<std::string> connection_words;
  int speaker_width = 1;
  int tag_classes = kDefaultTagClasses;
};

struct LabeledExample {
  AssembledInput input;
  std::vector<TagLabel> y_sgt;
  std::vector<std::uint8_t> y_gd;
  std::vector<std::uint8_t> y_ged;
  std::vector<GlcsSpan> spans;
  std::string reference;  // spacing-normalized reference text
};

struct LabelOutcome {
  std::optional<LabeledExample> example;
  GlcsDecomposition decomposition;  // residue/failure when example is empty
};

// Throws Error(InvalidArgument) if the dialogue has no reference.
LabelOutcome build_labeled_example(const Dialogue& d, const LabelConfig& config);

// Span tokens concatenated in order and detokenized.
std::string splice_spans(std::span<const GlcsSpan> spans, std::span<const Token> tokens);

}  // namespace sgt
