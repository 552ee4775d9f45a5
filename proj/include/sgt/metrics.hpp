#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sgt/corpus.hpp"

namespace sgt {

using NGram = std::vector<std::string>;
using NGramCounts = std::map<NGram, std::size_t>;

// Token texts of a string under text_units tokenization.
std::vector<std::string> metric_tokens(std::string_view text);

NGramCounts count_ngrams(std::span<const std::string> tokens, int n);

// Sum over keys of min(a[key], b[key]).
std::size_t clipped_overlap(const NGramCounts& a, const NGramCounts& b);

// Corpus-level cumulative BLEU over orders 1..n (geometric mean of clipped
// precisions, corpus brevity penalty, no smoothing).
double bleu_n(std::span<const std::string> predictions, std::span<const std::string> references, int n);

// Macro-averaged per-example F1.
double rouge_n(std::span<const std::string> predictions, std::span<const std::string> references, int n);
double rouge_l(std::span<const std::string> predictions, std::span<const std::string> references);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// Fraction of pairs equal after NFC and spacing normalization.
double exact_match(std::span<const std::string> predictions, std::span<const std::string> references);

// Token texts present in some context utterance but absent from the current one.
std::set<std::string> restored_word_set(std::span<const Utterance> context, const Utterance& current);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

double harmonic_mean(double p, double r);

struct RestorationCounts {
  std::size_t matched = 0;
  std::size_t predicted = 0;
  std::size_t reference = 0;

  RestorationCounts& operator+=(const RestorationCounts& o) {
    matched += o.matched;
    predicted += o.predicted;
    reference += o.reference;
    return *this;
  }
  Prf prf() const;
};

RestorationCounts restoration_counts(std::string_view prediction, std::string_view reference,
                                     const std::set<std::string>& restored, int n);

Prf restoration_prf(std::string_view prediction, std::string_view reference, std::span<const Utterance> context,
                    const Utterance& current, int n);

struct MetricReport {
  std::size_t corpus_size = 0;
  std::map<int, double> bleu;           // n = 1, 2, 4
  std::map<std::string, double> rouge;  // "1", "2", "L"
  double exact_match = 0.0;
  std::map<int, Prf> restoration;  // n = 1, 2, 3
};

// references come from each dialogue's reference field.
MetricReport evaluate_corpus(std::span<const std::string> predictions, std::span<const Dialogue> dialogues);

std::string format_report_table(const MetricReport& report);

}  // namespace sgt
