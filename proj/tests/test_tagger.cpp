#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>

#include "doctest.h"
#include "sgt/error.hpp"
#include "sgt/tagger.hpp"
#include "synthetic.hpp"

using namespace sgt;

namespace {

ModelShape tiny_shape(int tag_classes = 11) {
  ModelShape s;
  s.encoder = {4, 3, 5, 16, 32};
  s.tag_classes = tag_classes;
  return s;
}

LabeledExample weather_example() {
  const auto d = make_dialogue({"深圳最近天气怎么样？", "最近经常阴天下雨。", "冬天就是这样的。"}, "深圳冬天就是经常阴天下雨");
  return *build_labeled_example(d, {}).example;
}

std::vector<int> ints(const std::vector<TagLabel>& tags) {
  std::vector<int> out;
  for (auto t : tags) out.push_back(t.value);
  return out;
}

std::vector<int> ints(const std::vector<std::uint8_t>& v) { return {v.begin(), v.end()}; }

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2 * rng.uniform() - 1) * scale;
  return m;
}

std::filesystem::path temp_path(const std::string& name) { return std::filesystem::temp_directory_path() / ("sgt_tagger_" + name); }

}  // namespace

TEST_CASE("encode with degenerate weights gives identical rows") {
  const auto ex = weather_example();
  auto p = TaggerParams::zeros(tiny_shape());
  p.mixer_bias << 0.5, -1.0, 0.0, 2.0, 0.1;
  const Matrix e = encode(ex.input, p);
  REQUIRE(e.rows() == static_cast<Eigen::Index>(ex.input.size()));
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    for (Eigen::Index k = 0; k < e.cols(); ++k) CHECK(e(i, k) == std::tanh(p.mixer_bias(k)));
  }
}

TEST_CASE("single-token input uses zero padding around the centre slot") {
  ModelShape shape = tiny_shape();
  shape.encoder.context_window = 5;
  const auto p = TaggerParams::random(shape, 3);
  const auto in = assemble_input(make_dialogue({"好"}), {}, 1);
  REQUIRE(in.size() == 1);
  const Matrix e = encode(in, p);
  const int d = shape.encoder.embedding_dim;
  const Eigen::RowVectorXd x = p.token_embeddings.row(static_cast<Eigen::Index>(token_bucket(in.tokens[0], 16))) +
                               p.position_embeddings.row(0);
  for (int k = 0; k < shape.encoder.hidden_dim; ++k) {
    double pre = p.mixer_bias(k);
    for (int j = 0; j < d; ++j) pre += x(j) * p.mixer_weights(2 * d + j, k);
    CHECK(e(0, k) == doctest::Approx(std::tanh(pre)).epsilon(1e-14));
  }
}

TEST_CASE("encode is deterministic and rejects long inputs") {
  const auto ex = weather_example();
  const auto p = TaggerParams::random(tiny_shape(), 11);
  CHECK(encode(ex.input, p) == encode(ex.input, p));
  auto shape = tiny_shape();
  shape.encoder.max_positions = 8;
  try {
    encode(ex.input, TaggerParams::zeros(shape));
    FAIL("expected SequenceTooLong");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SequenceTooLong);
  }
}

TEST_CASE("apply_speaker") {
  const auto ex = weather_example();
  const auto p = TaggerParams::random(tiny_shape(), 5);
  const Matrix e = encode(ex.input, p);
  const Matrix ea = apply_speaker(e, ex.input, 0.0, Mode::Train, nullptr);
  REQUIRE(ea.cols() == e.cols() + 1);
  CHECK(ea.leftCols(e.cols()) == e);
  for (Eigen::Index i = 0; i < ea.rows(); ++i) CHECK(ea(i, e.cols()) == ((i >= 11 && i < 20) ? 1.0 : 0.0));

  SUBCASE("all-zero track appends a zero column") {
    const auto one = assemble_input(make_dialogue({"你好吗"}), {}, 1);
    const Matrix e1 = encode(one, p);
    const Matrix ea1 = apply_speaker(e1, one, 0.0, Mode::Infer, nullptr);
    CHECK(ea1.col(e1.cols()).isZero());
  }
  SUBCASE("heavy dropout zeroes E but never the speaker column") {
    Rng rng(9);
    const double rate = 1.0 - 1e-3;
    std::size_t dropped = 0, total = 0;
    for (int draw = 0; draw < 200; ++draw) {
      const Matrix d = apply_speaker(e, ex.input, rate, Mode::Train, &rng);
      for (Eigen::Index i = 0; i < d.rows(); ++i) {
        CHECK(d(i, e.cols()) == ex.input.speaker_row(static_cast<std::size_t>(i))[0]);
        for (Eigen::Index k = 0; k < e.cols(); ++k) {
          ++total;
          if (d(i, k) == 0.0) ++dropped;
          else CHECK(d(i, k) == doctest::Approx(e(i, k) / (1.0 - rate)));
        }
      }
    }
    CHECK(static_cast<double>(dropped) / static_cast<double>(total) > 0.995);
  }
  SUBCASE("dropout rate 0.3 drops about 30% of coordinates") {
    Rng rng(10);
    const Matrix mask = make_dropout_mask(400, 50, 0.3, rng);
    const double frac = static_cast<double>((mask.array() == 0.0).count()) / static_cast<double>(mask.size());
    CHECK(frac == doctest::Approx(0.3).epsilon(0.05));
  }
  SUBCASE("infer mode ignores dropout") {
    CHECK(apply_speaker(e, ex.input, 0.3, Mode::Infer, nullptr) == ea);
  }
}

TEST_CASE("forward shapes and head independence") {
  const auto in = assemble_input(make_dialogue({"天气好"}), {}, 1);
  auto p = TaggerParams::random(tiny_shape(), 21);
  const auto t = forward(in, p, Mode::Infer);
  CHECK(t.logits_sgt.rows() == 3);
  CHECK(t.logits_sgt.cols() == 11);
  CHECK(t.logits_gd.cols() == 2);
  CHECK(t.logits_ged.cols() == 2);

  auto q = p;
  q.sgt.weights(0, 0) += 1.0;
  q.sgt.bias(3) -= 2.0;
  const auto u = forward(in, q, Mode::Infer);
  CHECK(u.logits_gd == t.logits_gd);
  CHECK(u.logits_ged == t.logits_ged);
  CHECK(u.logits_sgt != t.logits_sgt);

  const auto z = forward(in, TaggerParams::zeros(tiny_shape()), Mode::Infer);
  CHECK(z.logits_sgt.isZero());
  const Matrix probs = softmax_rows(z.logits_sgt);
  CHECK(probs(0, 0) == doctest::Approx(1.0 / 11));
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(4);
  const Matrix logits = random_matrix(rng, 20, 11, 30.0);
  const Matrix p = softmax_rows(logits);
  for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-12);
}

TEST_CASE("loss analytics") {
  const std::vector<double> unit(11, 1.0);
  const Matrix zeros11 = Matrix::Zero(4, 11);
  const std::vector<TagLabel> y = {TagLabel{0}, TagLabel{3}, TagLabel{10}, TagLabel{1}};
  CHECK(std::abs(loss_sgt(zeros11, y, unit) - std::log(11.0)) < 1e-12);
  const std::vector<std::uint8_t> b = {0, 1, 1, 0};
  CHECK(std::abs(loss_gd(Matrix::Zero(4, 2), b) - std::log(2.0)) < 1e-12);
  CHECK(std::abs(loss_ged(Matrix::Zero(4, 2), b) - std::log(2.0)) < 1e-12);

  Matrix saturated = Matrix::Zero(4, 11);
  for (int i = 0; i < 4; ++i) saturated(i, y[static_cast<std::size_t>(i)].value) = 1000.0;
  CHECK(loss_sgt(saturated, y, unit) < 1e-300);

  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix logits = random_matrix(rng, 4, 11, 3.0);
    std::vector<TagLabel> targets;
    std::vector<int> oracle_targets;
    for (int i = 0; i < 4; ++i) {
      const auto v = static_cast<std::uint8_t>(rng.below(11));
      targets.push_back(TagLabel{v});
      oracle_targets.push_back(v);
    }
    std::vector<double> w;
    for (int k = 0; k < 11; ++k) w.push_back(0.5 + rng.uniform() * 5);
    const double got = loss_sgt(logits, targets, w);
    const double want = testing::oracle_weighted_ce(logits, oracle_targets, w);
    CHECK(std::abs(got - want) <= 1e-12 * std::abs(want));

    const Matrix bl = random_matrix(rng, 4, 2, 3.0);
    std::vector<std::uint8_t> bt;
    std::vector<int> bo;
    for (int i = 0; i < 4; ++i) {
      bt.push_back(static_cast<std::uint8_t>(rng.below(2)));
      bo.push_back(bt.back());
    }
    const double gb = loss_binary(bl, bt);
    const double wb = testing::oracle_binary_ce(bl, bo);
    CHECK(std::abs(gb - wb) <= 1e-12 * std::abs(wb));
  }

  try {
    loss_sgt(zeros11, std::vector<TagLabel>{TagLabel{0}, TagLabel{1}, TagLabel{11}, TagLabel{0}}, unit);
    FAIL("expected LabelOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LabelOutOfRange);
  }
}

TEST_CASE("total loss is the unweighted sum") {
  const auto ex = weather_example();
  const std::vector<double> unit(11, 1.0);
  const auto zero = forward(ex.input, TaggerParams::zeros(tiny_shape()), Mode::Infer);
  const auto l = total_loss(zero, ex, unit);
  CHECK(std::abs(l.total - (std::log(11.0) + 2 * std::log(2.0))) < 1e-12);
  CHECK(l.total == l.sgt + l.gd + l.ged);

  const auto p = TaggerParams::random(tiny_shape(), 8);
  auto t = forward(ex.input, p, Mode::Infer);
  const auto r = total_loss(t, ex, unit);
  CHECK(r.total == loss_sgt(t.logits_sgt, ex.y_sgt, unit) + loss_gd(t.logits_gd, ex.y_gd) + loss_ged(t.logits_ged, ex.y_ged));

  // Saturating two heads leaves the third.
  for (Eigen::Index i = 0; i < t.logits_gd.rows(); ++i) {
    t.logits_gd.row(i).setZero();
    t.logits_gd(i, ex.y_gd[static_cast<std::size_t>(i)]) = 1e4;
    t.logits_ged.row(i).setZero();
    t.logits_ged(i, ex.y_ged[static_cast<std::size_t>(i)]) = 1e4;
  }
  const auto s = total_loss(t, ex, unit);
  CHECK(s.total == s.sgt);
}

namespace {

// Central differences over every parameter.
double max_relative_error(const LabeledExample& ex, TaggerParams params, const std::vector<double>& weights,
                          const Matrix& mask) {
  const TaggerParams analytic = gradient(ex, params, weights, mask);
  auto loss_at = [&](const TaggerParams& p) {
    const auto t = mask.size() == 0 ? forward(ex.input, p, Mode::Infer) : forward(ex.input, p, Mode::Train, 0.0, nullptr, &mask);
    return total_loss(t, ex, weights).total;
  };
  std::vector<std::pair<double*, std::size_t>> ps;
  std::vector<std::pair<const double*, std::size_t>> gs;
  params.for_each_tensor(std::function<void(double*, std::size_t)>([&](double* d, std::size_t n) { ps.emplace_back(d, n); }));
  analytic.for_each_tensor(std::function<void(const double*, std::size_t)>([&](const double* d, std::size_t n) { gs.emplace_back(d, n); }));
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t t = 0; t < ps.size(); ++t) {
    for (std::size_t i = 0; i < ps[t].second; ++i) {
      double& x = ps[t].first[i];
      const double saved = x;
      x = saved + h;
      const double up = loss_at(params);
      x = saved - h;
      const double down = loss_at(params);
      x = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = gs[t].first[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("gradient matches central finite differences") {
  Rng rng(31);
  const auto corpus = testing::generate_corpus(17, 12, {2, 2, 1, 2, 1, 2, 6});
  for (int trial = 0; trial < 12; ++trial) {
    const auto& ex_opt = build_labeled_example(corpus[static_cast<std::size_t>(trial)].dialogue, {}).example;
    REQUIRE(ex_opt);
    const auto& ex = *ex_opt;
    REQUIRE(ex.input.size() <= 6);
    const auto params = TaggerParams::random(tiny_shape(), 100 + static_cast<std::uint64_t>(trial));
    std::vector<double> w;
    for (int k = 0; k < 11; ++k) w.push_back(0.5 + 3 * rng.uniform());
    const Matrix mask = trial % 2 == 0 ? Matrix() : make_dropout_mask(static_cast<Eigen::Index>(ex.input.size()), 5, 0.3, rng);
    CHECK(max_relative_error(ex, params, w, mask) < 1e-4);
  }
}

TEST_CASE("gradient sparsity and weight linearity") {
  const auto ex = weather_example();
  const auto shape = tiny_shape();
  const auto params = TaggerParams::random(shape, 2);
  const std::vector<double> unit(11, 1.0);
  const auto g = gradient(ex, params, unit);

  std::set<std::size_t> used;
  for (const auto& t : ex.input.tokens) used.insert(token_bucket(t, shape.encoder.vocab_buckets));
  for (Eigen::Index r = 0; r < g.token_embeddings.rows(); ++r) {
    if (!used.contains(static_cast<std::size_t>(r))) CHECK(g.token_embeddings.row(r).isZero(0.0));
  }
  // Positions past M carry no gradient.
  CHECK(g.position_embeddings.bottomRows(shape.encoder.max_positions - static_cast<int>(ex.input.size())).isZero(0.0));

  // Zero point: unused rows stay exactly zero.
  const auto gz = gradient(ex, TaggerParams::zeros(shape), unit);
  for (Eigen::Index r = 0; r < gz.token_embeddings.rows(); ++r) {
    if (!used.contains(static_cast<std::size_t>(r))) CHECK(gz.token_embeddings.row(r).isZero(0.0));
  }

  // d L_sgt / d head_sgt scales with the class weights.
  const std::vector<double> tripled(11, 3.0);
  const auto g3 = gradient(ex, params, tripled);
  CHECK((g3.sgt.weights - 3.0 * g.sgt.weights).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((g3.sgt.bias - 3.0 * g.sgt.bias).cwiseAbs().maxCoeff() < 1e-12);
  // The GD head does not see the SGT weights.
  CHECK((g3.gd.weights - g.gd.weights).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("predict_tags") {
  const auto ex = weather_example();
  CHECK(predict_tags(ex.input, TaggerParams::zeros(tiny_shape())) == std::vector<TagLabel>(ex.input.size(), TagLabel::outside()));

  Matrix gold = Matrix::Zero(static_cast<Eigen::Index>(ex.y_sgt.size()), 11);
  for (std::size_t i = 0; i < ex.y_sgt.size(); ++i) gold(static_cast<Eigen::Index>(i), ex.y_sgt[i].value) = 50.0;
  CHECK(argmax_tags(gold) == ex.y_sgt);
  CHECK(argmax_tags((gold.array() + 7.5).matrix()) == ex.y_sgt);

  Rng rng(12);
  const Matrix logits = random_matrix(rng, 40, 11, 1.0);
  const auto tags = argmax_tags(logits);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int c = 0; c < 11; ++c) if (logits(i, c) > logits(i, best)) best = c;
    CHECK(tags[static_cast<std::size_t>(i)].value == best);
  }
  Matrix shifted = logits;
  shifted.rowwise() += random_matrix(rng, 1, 11, 0.0).row(0);
  for (Eigen::Index i = 0; i < shifted.rows(); ++i) shifted.row(i).array() += static_cast<double>(i) * 3.25;
  CHECK(argmax_tags(shifted) == tags);
}

TEST_CASE("default class weights") {
  const auto ex = weather_example();
  const auto w = default_class_weights(std::span(&ex, 1), 11);
  // 17 O tokens (incl. 2 separators), A=2, B=4, C=6.
  CHECK(w[0] == 1.0);
  CHECK(w[1] == doctest::Approx(17.0 / 2));
  CHECK(w[2] == doctest::Approx(17.0 / 4));
  CHECK(w[3] == doctest::Approx(17.0 / 6));
  CHECK(w[4] == 1.0);
}

TEST_CASE("training memorizes one example and is deterministic") {
  const auto ex = weather_example();
  ModelShape shape;
  shape.encoder = {16, 5, 32, 512, 64};
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 1;
  const auto a = train(std::span(&ex, 1), shape, cfg);
  REQUIRE(a.log.size() == 150);
  CHECK(a.log.back().token_accuracy == 1.0);
  CHECK(token_accuracy(std::span(&ex, 1), a.params) == 1.0);
  CHECK(a.log.back().loss.total < a.log.front().loss.total);

  const auto b = train(std::span(&ex, 1), shape, cfg);
  CHECK(a.final_params.bitwise_equal(b.final_params));
  CHECK(a.params.bitwise_equal(b.params));

  cfg.seed = 14;
  const auto c = train(std::span(&ex, 1), shape, cfg);
  CHECK_FALSE(a.final_params.bitwise_equal(c.final_params));
}

TEST_CASE("training rejects bad configuration") {
  const auto ex = weather_example();
  TrainConfig cfg;
  CHECK_THROWS_AS(train({}, tiny_shape(), cfg), Error);
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(train(std::span(&ex, 1), tiny_shape(), cfg), Error);
  cfg.dropout_rate = 0.3;
  cfg.class_weights = {1.0, 2.0};
  CHECK_THROWS_AS(train(std::span(&ex, 1), tiny_shape(), cfg), Error);
}

TEST_CASE("training aborts on non-finite loss with the last good checkpoint") {
  const auto ex = weather_example();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.class_weights.assign(11, std::numeric_limits<double>::max());
  const auto r = train(std::span(&ex, 1), tiny_shape(), cfg);
  CHECK(r.aborted);
  CHECK(r.params.all_finite());
  CHECK(r.log.empty());
}

TEST_CASE("parameter file round trip and corruption") {
  const auto params = TaggerParams::random(tiny_shape(), 99);
  const auto path = temp_path("params.bin");
  save_params(params, path);
  CHECK(load_params(path).bitwise_equal(params));
  CHECK(load_params(path, tiny_shape()).bitwise_equal(params));

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  CHECK(bytes.substr(0, 4) == "SGTM");
  auto expect_code = [](const std::filesystem::path& p, ErrorCode code, const ModelShape* shape = nullptr) {
    try {
      if (shape) load_params(p, *shape);
      else load_params(p);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };

  const auto truncated = temp_path("truncated.bin");
  std::ofstream(truncated, std::ios::binary) << bytes.substr(0, bytes.size() - 9);
  expect_code(truncated, ErrorCode::CorruptFile);

  const auto flipped = temp_path("flipped.bin");
  std::string f = bytes;
  f[f.size() - 3] ^= 0x40;
  std::ofstream(flipped, std::ios::binary) << f;
  expect_code(flipped, ErrorCode::CorruptFile);

  const auto version = temp_path("version.bin");
  std::string v = bytes;
  v[4] = 9;
  std::ofstream(version, std::ios::binary) << v;
  expect_code(version, ErrorCode::VersionMismatch);

  const auto other_n = temp_path("other_n.bin");
  save_params(TaggerParams::random(tiny_shape(5), 1), other_n);
  const auto shape = tiny_shape();
  expect_code(other_n, ErrorCode::VersionMismatch, &shape);

  expect_code(temp_path("missing.bin"), ErrorCode::IoFailure);
}
