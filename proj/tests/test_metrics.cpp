#include <cmath>
#include <map>

#include "doctest.h"
#include "sgt/error.hpp"
#include "sgt/metrics.hpp"
#include "synthetic.hpp"

using namespace sgt;

namespace {

const std::vector<std::string> kWeather = {"深圳最近天气怎么样？", "最近经常阴天下雨。", "冬天就是这样的。"};
const std::string kReference = "深圳冬天就是经常阴天下雨";

using Strings = std::vector<std::string>;

// Scalar reimplementations over plain token vectors.
std::size_t oracle_overlap(const Strings& p, const Strings& r, int n) {
  std::vector<bool> used(r.size() < static_cast<std::size_t>(n) ? 0 : r.size() - static_cast<std::size_t>(n) + 1, false);
  std::size_t hits = 0;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= p.size(); ++i) {
    for (std::size_t j = 0; j < used.size(); ++j) {
      if (used[j]) continue;
      bool same = true;
      for (int k = 0; k < n && same; ++k) same = p[i + static_cast<std::size_t>(k)] == r[j + static_cast<std::size_t>(k)];
      if (same) {
        used[j] = true;
        ++hits;
        break;
      }
    }
  }
  return hits;
}

std::size_t grams(const Strings& t, int n) {
  return t.size() < static_cast<std::size_t>(n) ? 0 : t.size() - static_cast<std::size_t>(n) + 1;
}

double oracle_bleu(const std::vector<Strings>& p, const std::vector<Strings>& r, int n) {
  double log_sum = 0;
  double pl = 0, rl = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pl += static_cast<double>(p[i].size());
    rl += static_cast<double>(r[i].size());
  }
  for (int k = 1; k <= n; ++k) {
    double m = 0, t = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m += static_cast<double>(oracle_overlap(p[i], r[i], k));
      t += static_cast<double>(grams(p[i], k));
    }
    if (m == 0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = pl >= rl ? 1.0 : std::exp(1.0 - rl / pl);
  return bp * std::exp(log_sum / n);
}

double oracle_f(double m, double a, double b) {
  if (m == 0) return 0.0;
  const double p = m / a, r = m / b;
  return 2 * p * r / (p + r);
}

double oracle_rouge_n(const std::vector<Strings>& p, const std::vector<Strings>& r, int n) {
  double sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (grams(p[i], n) == 0 && grams(r[i], n) == 0) {
      sum += 1.0;
      continue;
    }
    sum += oracle_f(static_cast<double>(oracle_overlap(p[i], r[i], n)), static_cast<double>(grams(p[i], n)),
                    static_cast<double>(grams(r[i], n)));
  }
  return sum / static_cast<double>(p.size());
}

// Memoized top-down recursion.
std::size_t oracle_lcs(const Strings& a, std::size_t i, const Strings& b, std::size_t j,
                       std::map<std::pair<std::size_t, std::size_t>, std::size_t>& memo) {
  if (i == a.size() || j == b.size()) return 0;
  if (auto it = memo.find({i, j}); it != memo.end()) return it->second;
  const std::size_t v = a[i] == b[j] ? 1 + oracle_lcs(a, i + 1, b, j + 1, memo)
                                     : std::max(oracle_lcs(a, i + 1, b, j, memo), oracle_lcs(a, i, b, j + 1, memo));
  memo[{i, j}] = v;
  return v;
}

std::size_t oracle_lcs_top(const Strings& a, const Strings& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  return oracle_lcs(a, 0, b, 0, memo);
}

Strings chars(const std::string& s) { return metric_tokens(s); }

}  // namespace

TEST_CASE("n-gram helpers") {
  const Strings t = {"a", "b", "a", "b"};
  const auto c2 = count_ngrams(t, 2);
  CHECK(c2.size() == 2);
  CHECK(c2.at({"a", "b"}) == 2);
  CHECK(c2.at({"b", "a"}) == 1);
  CHECK(count_ngrams(t, 5).empty());
  const Strings u = {"a", "b"};
  CHECK(clipped_overlap(c2, count_ngrams(u, 2)) == 1);
  CHECK(lcs_length(Strings{"a", "b"}, Strings{"b", "a"}) == 1);
}

TEST_CASE("identity corpus scores 1 everywhere") {
  const Strings refs = {kReference, "今天 天气 不错", "hello world 42", "好"};
  std::vector<Dialogue> ds;
  for (const auto& r : refs) ds.push_back(make_dialogue(kWeather, r));
  const auto rep = evaluate_corpus(refs, ds);
  for (const auto& [n, v] : rep.bleu) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& [n, v] : rep.rouge) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.exact_match == 1.0);
  for (const auto& [n, p] : rep.restoration) {
    CHECK(p.precision == 1.0);
    CHECK(p.recall == 1.0);
    CHECK(p.f1 == 1.0);
  }
}

TEST_CASE("brevity penalty case") {
  const Strings pred = {"冬天就是经常阴天下雨"};
  const Strings ref = {kReference};
  CHECK(bleu_n(pred, ref, 1) == doctest::Approx(std::exp(-0.2)).epsilon(1e-12));
  CHECK(std::abs(bleu_n(pred, ref, 1) - 0.8187) < 1e-4);
  // Longer prediction has no penalty.
  CHECK(bleu_n(ref, pred, 1) == doctest::Approx(10.0 / 12));
}

TEST_CASE("BLEU without smoothing") {
  const Strings pred = {"a b"};
  const Strings ref = {"b a"};
  CHECK(bleu_n(pred, ref, 1) == 1.0);
  CHECK(bleu_n(pred, ref, 2) == 0.0);
  CHECK_THROWS_AS(bleu_n(Strings{}, Strings{}, 1), Error);
  CHECK_THROWS_AS(bleu_n(pred, Strings{"x", "y"}, 1), Error);
}

TEST_CASE("ROUGE word order") {
  const Strings pred = {"a b"};
  const Strings ref = {"b a"};
  CHECK(rouge_n(pred, ref, 1) == 1.0);
  CHECK(rouge_n(pred, ref, 2) == 0.0);
  CHECK(rouge_l(pred, ref) == 0.5);
  CHECK(rouge_l(Strings{""}, Strings{""}) == 1.0);
  CHECK(rouge_l(Strings{""}, Strings{"x"}) == 0.0);
}

TEST_CASE("exact match normalizes spacing and composition") {
  const Strings pred = {"深 圳", "a  b", "e\xCC\x81", "x"};
  const Strings ref = {"深圳", "a b", "\xC3\xA9", "y"};
  CHECK(exact_match(pred, ref) == 0.75);
  CHECK(exact_match(Strings{"a", "b", "c", "d"}, Strings{"a", "x", "y", "z"}) == 0.25);
}

TEST_CASE("restored words for the weather dialogue") {
  const auto d = make_dialogue(kWeather, kReference);
  const auto restored = restored_word_set(std::span(d.utterances).first(2), d.current());
  CHECK(restored.contains("深"));
  CHECK(restored.contains("圳"));
  CHECK(restored.contains("经"));
  CHECK_FALSE(restored.contains("天"));
  CHECK_FALSE(restored.contains("。"));
  CHECK_FALSE(restored.contains("样"));
  CHECK(restored.size() == 13);
}

TEST_CASE("restoration on the dropped-shenzhen case") {
  const auto d = make_dialogue(kWeather, kReference);
  const auto ctx = std::span(d.utterances).first(2);
  const auto p1 = restoration_prf("冬天就是经常阴天下雨", kReference, ctx, d.current(), 1);
  CHECK(p1.precision == 1.0);
  CHECK(p1.recall == doctest::Approx(5.0 / 7).epsilon(1e-12));
  CHECK(std::abs(p1.f1 - 0.8333) < 1e-4);
  CHECK(p1.f1 == doctest::Approx(10.0 / 12).epsilon(1e-12));

  const auto full = restoration_prf(kReference, kReference, ctx, d.current(), 2);
  CHECK(full.f1 == 1.0);

  // Repeated restored n-grams are clipped.
  const std::set<std::string> r = {"x"};
  const auto c = restoration_counts("x x x", "x", r, 1);
  CHECK(c.matched == 1);
  CHECK(c.predicted == 3);
  CHECK(c.reference == 1);
}

TEST_CASE("adding a correct restored word never lowers recall") {
  const std::set<std::string> restored = {"深", "圳", "经", "常"};
  const auto before = restoration_counts("冬天", "深圳冬天经常", restored, 1).prf();
  const auto after = restoration_counts("深冬天", "深圳冬天经常", restored, 1).prf();
  CHECK(after.recall >= before.recall);
  CHECK(after.recall > before.recall);
}

TEST_CASE("evaluate_corpus agrees with scalar oracles") {
  Rng rng(23);
  const auto corpus = testing::generate_corpus(3, 40);
  std::vector<Dialogue> ds;
  Strings preds;
  for (const auto& s : corpus) {
    ds.push_back(s.dialogue);
    // Drop, shuffle or keep fragments.
    std::string pred;
    for (const auto& f : s.fragments) {
      if (rng.below(4) == 0) continue;
      pred = rng.below(2) == 0 ? pred + f : f + pred;
    }
    if (pred.empty()) pred = s.dialogue.current().raw_text;
    preds.push_back(pred);
  }
  std::vector<Strings> p, r;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    p.push_back(chars(preds[i]));
    r.push_back(chars(*ds[i].reference));
  }
  const auto rep = evaluate_corpus(preds, ds);
  for (int n : {1, 2, 4}) CHECK(rep.bleu.at(n) == doctest::Approx(oracle_bleu(p, r, n)).epsilon(1e-12));
  CHECK(rep.rouge.at("1") == doctest::Approx(oracle_rouge_n(p, r, 1)).epsilon(1e-12));
  CHECK(rep.rouge.at("2") == doctest::Approx(oracle_rouge_n(p, r, 2)).epsilon(1e-12));

  double rl = 0;
  std::size_t em = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double l = static_cast<double>(oracle_lcs_top(p[i], r[i]));
    rl += oracle_f(l, static_cast<double>(p[i].size()), static_cast<double>(r[i].size()));
    em += p[i] == r[i] ? 1 : 0;
  }
  CHECK(rep.rouge.at("L") == doctest::Approx(rl / static_cast<double>(p.size())).epsilon(1e-12));
  CHECK(rep.exact_match == doctest::Approx(static_cast<double>(em) / static_cast<double>(p.size())));

  for (int n : {1, 2, 3}) {
    double m = 0, tp = 0, tr = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto& utts = ds[i].utterances;
      std::set<std::string> in_current, restored;
      for (const auto& t : utts.back().tokens) in_current.insert(t.text);
      for (std::size_t u = 0; u + 1 < utts.size(); ++u) {
        for (const auto& t : utts[u].tokens) if (!in_current.contains(t.text)) restored.insert(t.text);
      }
      auto keep = [&](const Strings& toks) {
        std::vector<Strings> gs;
        for (std::size_t a = 0; a + static_cast<std::size_t>(n) <= toks.size(); ++a) {
          Strings g(toks.begin() + static_cast<std::ptrdiff_t>(a), toks.begin() + static_cast<std::ptrdiff_t>(a) + n);
          for (const auto& w : g) {
            if (restored.contains(w)) {
              gs.push_back(g);
              break;
            }
          }
        }
        return gs;
      };
      const auto gp = keep(p[i]);
      const auto gr = keep(r[i]);
      tp += static_cast<double>(gp.size());
      tr += static_cast<double>(gr.size());
      std::vector<bool> used(gr.size(), false);
      for (const auto& g : gp) {
        for (std::size_t j = 0; j < gr.size(); ++j) {
          if (!used[j] && gr[j] == g) {
            used[j] = true;
            ++m;
            break;
          }
        }
      }
    }
    const auto& got = rep.restoration.at(n);
    CHECK(got.precision == doctest::Approx(m / tp).epsilon(1e-12));
    CHECK(got.recall == doctest::Approx(m / tr).epsilon(1e-12));
  }

  CHECK_THROWS_AS(evaluate_corpus(Strings{}, std::span<const Dialogue>{}), Error);
  const auto table = format_report_table(rep);
  CHECK(table.find("examples: 40") != std::string::npos);
}
