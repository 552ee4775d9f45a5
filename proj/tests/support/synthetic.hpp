#pragma once

// Test-only generators and brute-force oracles. Nothing here calls into the
// code paths it is used to check.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgt/corpus.hpp"
#include "sgt/glcs_labeler.hpp"
#include "sgt/tagger.hpp"

namespace sgt::testing {

struct SyntheticOptions {
  int min_history = 2;  // utterances including the current one
  int max_history = 4;
  int min_length = 4;
  int max_length = 10;
  int min_fragments = 1;
  int max_fragments = 3;
  int alphabet_size = 400;  // distinct CJK characters
};

struct SyntheticDialogue {
  Dialogue dialogue;
  std::vector<std::string> fragments;  // in reference order
};

// Reference = concatenation of disjoint random substrings of the history.
SyntheticDialogue generate_dialogue(Rng& rng, const SyntheticOptions& options = {});
std::vector<SyntheticDialogue> generate_corpus(std::uint64_t seed, std::size_t count,
                                               const SyntheticOptions& options = {});

// Tokens over a small Latin alphabet ("a", "b", ...), one Word token each.
std::vector<Token> letter_tokens(Rng& rng, std::size_t length, int alphabet);
std::string letters_text(const std::vector<Token>& tokens);

// Exhaustive (position, length) enumeration; largest length, then largest position.
std::optional<PrefixMatch> brute_force_prefix_match(const std::vector<Token>& remainder,
                                                    const std::vector<Token>& haystack);

// Greedy decomposition by enumerating every (start, length) of H.
GlcsDecomposition brute_force_glcs(const AssembledInput& input, const std::vector<Token>& reference,
                                   int max_fragments);

// Scalar-loop loss oracles.
double oracle_weighted_ce(const Matrix& logits, const std::vector<int>& targets, const std::vector<double>& weights);
double oracle_binary_ce(const Matrix& logits, const std::vector<int>& targets);

}  // namespace sgt::testing
