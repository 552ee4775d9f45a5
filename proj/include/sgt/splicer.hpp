#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sgt/corpus.hpp"
#include "sgt/glcs_labeler.hpp"
#include "sgt/tagger.hpp"

namespace sgt {

enum class DuplicateResolution { LatestRun, HighestMeanScore };
enum class EmptyFallback { CopyLastUtterance, EmptyOutput };

struct DecodePolicy {
  DuplicateResolution duplicates = DuplicateResolution::LatestRun;
  EmptyFallback empty = EmptyFallback::CopyLastUtterance;
};

struct TagRun {
  std::size_t start = 0;
  std::size_t length = 0;
  int utterance_index = 0;
  friend bool operator==(const TagRun&, const TagRun&) = default;
};

// order letter -> maximal runs of that letter, in H order. Runs are cut at
// separators and at region boundaries.
using RunMap = std::map<int, std::vector<TagRun>>;

RunMap labels_to_runs(std::span<const TagLabel> tags, const AssembledInput& input);

// One span per letter present, in letter order. HighestMeanScore needs the
// per-token class probabilities (M x N); ties go to the later run.
std::vector<GlcsSpan> resolve_runs(const RunMap& runs, const DecodePolicy& policy,
                                   const Matrix* probabilities = nullptr);

std::string splice(std::span<const GlcsSpan> spans, std::span<const Token> tokens);

// labels_to_runs -> resolve_runs -> splice, with the empty-output fallback.
std::string decode_tags(std::span<const TagLabel> tags, const AssembledInput& input, const Dialogue& dialogue,
                        const DecodePolicy& policy = {}, const Matrix* probabilities = nullptr);

std::string rewrite(const Dialogue& d, const TaggerParams& params, const DecodePolicy& policy = {},
                    std::span<const std::string> connection_words = {});

}  // namespace sgt
