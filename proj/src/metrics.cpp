#include "sgt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sgt/error.hpp"
#include "sgt/text_units.hpp"

namespace sgt {

namespace {

void check_pairs(std::size_t predictions, std::size_t references) {
  if (predictions != references) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(predictions) + " predictions vs " +
                                               std::to_string(references) + " references");
  }
  if (predictions == 0) throw Error(ErrorCode::LengthMismatch, "empty corpus");
}

std::size_t total(const NGramCounts& c) {
  std::size_t n = 0;
  for (const auto& [_, count] : c) n += count;
  return n;
}

}  // namespace

std::vector<std::string> metric_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : tokenize(text)) out.push_back(std::move(t.text));
  return out;
}

NGramCounts count_ngrams(std::span<const std::string> tokens, int n) {
  NGramCounts counts;
  const auto width = static_cast<std::size_t>(n);
  if (n < 1 || tokens.size() < width) return counts;
  for (std::size_t i = 0; i + width <= tokens.size(); ++i) {
    ++counts[NGram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + width))];
  }
  return counts;
}

std::size_t clipped_overlap(const NGramCounts& a, const NGramCounts& b) {
  std::size_t overlap = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      overlap += std::min(ia->second, ib->second);
      ++ia;
      ++ib;
    }
  }
  return overlap;
}

double harmonic_mean(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

double bleu_n(std::span<const std::string> predictions, std::span<const std::string> references, int n) {
  check_pairs(predictions.size(), references.size());
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "BLEU order must be >= 1");
  std::vector<std::size_t> matched(static_cast<std::size_t>(n), 0), pred_total(static_cast<std::size_t>(n), 0),
      ref_total(static_cast<std::size_t>(n), 0);
  std::size_t pred_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto p = metric_tokens(predictions[i]);
    const auto r = metric_tokens(references[i]);
    pred_len += p.size();
    ref_len += r.size();
    for (int k = 1; k <= n; ++k) {
      const auto pc = count_ngrams(p, k);
      const auto rc = count_ngrams(r, k);
      const auto idx = static_cast<std::size_t>(k - 1);
      matched[idx] += clipped_overlap(pc, rc);
      pred_total[idx] += total(pc);
      ref_total[idx] += total(rc);
    }
  }
  double log_sum = 0.0;
  for (std::size_t k = 0; k < matched.size(); ++k) {
    if (pred_total[k] == 0) {
      if (ref_total[k] == 0) continue;  // no k-grams on either side: precision 1
      return 0.0;
    }
    if (matched[k] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[k]) / static_cast<double>(pred_total[k]));
  }
  if (pred_len == 0) return ref_len == 0 ? 1.0 : 0.0;
  const double bp = std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(pred_len)));
  return bp * std::exp(log_sum / static_cast<double>(n));
}

double rouge_n(std::span<const std::string> predictions, std::span<const std::string> references, int n) {
  check_pairs(predictions.size(), references.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto pc = count_ngrams(metric_tokens(predictions[i]), n);
    const auto rc = count_ngrams(metric_tokens(references[i]), n);
    const std::size_t tp = total(pc), tr = total(rc);
    if (tp == 0 || tr == 0) {
      sum += (tp == 0 && tr == 0) ? 1.0 : 0.0;
      continue;
    }
    const double overlap = static_cast<double>(clipped_overlap(pc, rc));
    sum += harmonic_mean(overlap / static_cast<double>(tp), overlap / static_cast<double>(tr));
  }
  return sum / static_cast<double>(predictions.size());
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::span<const std::string> predictions, std::span<const std::string> references) {
  check_pairs(predictions.size(), references.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto p = metric_tokens(predictions[i]);
    const auto r = metric_tokens(references[i]);
    if (p.empty() || r.empty()) {
      sum += (p.empty() && r.empty()) ? 1.0 : 0.0;
      continue;
    }
    const double lcs = static_cast<double>(lcs_length(p, r));
    sum += harmonic_mean(lcs / static_cast<double>(p.size()), lcs / static_cast<double>(r.size()));
  }
  return sum / static_cast<double>(predictions.size());
}

double exact_match(std::span<const std::string> predictions, std::span<const std::string> references) {
  check_pairs(predictions.size(), references.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    hits += normalize_spacing(nfc(predictions[i])) == normalize_spacing(nfc(references[i])) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

std::set<std::string> restored_word_set(std::span<const Utterance> context, const Utterance& current) {
  std::set<std::string> present;
  for (const auto& t : current.tokens) present.insert(t.text);
  std::set<std::string> restored;
  for (const auto& u : context) {
    for (const auto& t : u.tokens) {
      if (!present.contains(t.text)) restored.insert(t.text);
    }
  }
  return restored;
}

Prf RestorationCounts::prf() const {
  Prf out;
  if (predicted == 0 && reference == 0) return {1.0, 1.0, 1.0};
  if (predicted > 0) out.precision = static_cast<double>(matched) / static_cast<double>(predicted);
  if (reference > 0) out.recall = static_cast<double>(matched) / static_cast<double>(reference);
  out.f1 = harmonic_mean(out.precision, out.recall);
  return out;
}

namespace {

NGramCounts restored_ngrams(const std::vector<std::string>& tokens, const std::set<std::string>& restored, int n) {
  NGramCounts out;
  for (const auto& [gram, count] : count_ngrams(tokens, n)) {
    if (std::any_of(gram.begin(), gram.end(), [&](const std::string& w) { return restored.contains(w); })) {
      out.emplace(gram, count);
    }
  }
  return out;
}

}  // namespace

RestorationCounts restoration_counts(std::string_view prediction, std::string_view reference,
                                     const std::set<std::string>& restored, int n) {
  const auto gp = restored_ngrams(metric_tokens(prediction), restored, n);
  const auto gr = restored_ngrams(metric_tokens(reference), restored, n);
  return {clipped_overlap(gp, gr), total(gp), total(gr)};
}

Prf restoration_prf(std::string_view prediction, std::string_view reference, std::span<const Utterance> context,
                    const Utterance& current, int n) {
  return restoration_counts(prediction, reference, restored_word_set(context, current), n).prf();
}

MetricReport evaluate_corpus(std::span<const std::string> predictions, std::span<const Dialogue> dialogues) {
  check_pairs(predictions.size(), dialogues.size());
  std::vector<std::string> references;
  references.reserve(dialogues.size());
  for (const auto& d : dialogues) {
    if (!d.reference) throw Error(ErrorCode::InvalidArgument, "dialogue without reference in evaluation corpus");
    references.push_back(*d.reference);
  }

  MetricReport report;
  report.corpus_size = predictions.size();
  for (int n : {1, 2, 4}) report.bleu[n] = bleu_n(predictions, references, n);
  report.rouge["1"] = rouge_n(predictions, references, 1);
  report.rouge["2"] = rouge_n(predictions, references, 2);
  report.rouge["L"] = rouge_l(predictions, references);
  report.exact_match = exact_match(predictions, references);

  std::map<int, RestorationCounts> counts;
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    const auto& utts = dialogues[i].utterances;
    const auto restored = restored_word_set(std::span(utts).first(utts.size() - 1), utts.back());
    for (int n : {1, 2, 3}) counts[n] += restoration_counts(predictions[i], references[i], restored, n);
  }
  for (const auto& [n, c] : counts) report.restoration[n] = c.prf();
  return report;
}

std::string format_report_table(const MetricReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "examples: %zu\n", r.corpus_size);
  out += line;
  out += "  P1     R1     F1     P2     R2     F2     P3     R3     F3   |  B1     B2     B4     R1     R2     RL     EM\n";
  for (int n : {1, 2, 3}) {
    const Prf& p = r.restoration.at(n);
    std::snprintf(line, sizeof line, "%6.2f %6.2f %6.2f ", 100 * p.precision, 100 * p.recall, 100 * p.f1);
    out += line;
  }
  out += "|";
  for (int n : {1, 2, 4}) {
    std::snprintf(line, sizeof line, "%6.2f ", 100 * r.bleu.at(n));
    out += line;
  }
  for (const char* k : {"1", "2", "L"}) {
    std::snprintf(line, sizeof line, "%6.2f ", 100 * r.rouge.at(k));
    out += line;
  }
  std::snprintf(line, sizeof line, "%6.2f\n", 100 * r.exact_match);
  out += line;
  return out;
}

}  // namespace sgt
