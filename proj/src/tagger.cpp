#include "sgt/tagger.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "sgt/error.hpp"

namespace sgt {

void ModelShape::validate() const {
  const auto& e = encoder;
  if (e.embedding_dim < 1 || e.hidden_dim < 1 || e.vocab_buckets < 1 || e.max_positions < 1) {
    throw Error(ErrorCode::InvalidArgument, "encoder dimensions must be >= 1");
  }
  if (e.context_window < 1 || e.context_window % 2 == 0) {
    throw Error(ErrorCode::InvalidArgument, "context window must be a positive odd number");
  }
  if (tag_classes < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 tag classes");
  if (speaker_width < 1) throw Error(ErrorCode::InvalidArgument, "speaker width must be >= 1");
}

namespace {

LinearHead zero_head(int inputs, int classes) {
  return {Matrix::Zero(inputs, classes), Vector::Zero(classes)};
}

void fill_uniform(double* data, std::size_t n, double limit, Rng& rng) {
  for (std::size_t i = 0; i < n; ++i) data[i] = (2.0 * rng.uniform() - 1.0) * limit;
}

double xavier(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

TaggerParams TaggerParams::zeros(const ModelShape& shape) {
  shape.validate();
  const auto& e = shape.encoder;
  TaggerParams p;
  p.shape = shape;
  p.token_embeddings = Matrix::Zero(static_cast<Eigen::Index>(e.vocab_buckets), e.embedding_dim);
  p.position_embeddings = Matrix::Zero(e.max_positions, e.embedding_dim);
  p.mixer_weights = Matrix::Zero(e.context_window * e.embedding_dim, e.hidden_dim);
  p.mixer_bias = Vector::Zero(e.hidden_dim);
  const int ea_width = e.hidden_dim + shape.speaker_width;
  p.sgt = zero_head(ea_width, shape.tag_classes);
  p.gd = zero_head(ea_width, 2);
  p.ged = zero_head(ea_width, 2);
  return p;
}

TaggerParams TaggerParams::random(const ModelShape& shape, std::uint64_t seed) {
  TaggerParams p = zeros(shape);
  Rng rng(seed);
  fill_uniform(p.token_embeddings.data(), static_cast<std::size_t>(p.token_embeddings.size()), 0.1, rng);
  fill_uniform(p.position_embeddings.data(), static_cast<std::size_t>(p.position_embeddings.size()), 0.1, rng);
  fill_uniform(p.mixer_weights.data(), static_cast<std::size_t>(p.mixer_weights.size()),
               xavier(p.mixer_weights.rows(), p.mixer_weights.cols()), rng);
  for (LinearHead* head : {&p.sgt, &p.gd, &p.ged}) {
    fill_uniform(head->weights.data(), static_cast<std::size_t>(head->weights.size()),
                 xavier(head->weights.rows(), head->weights.cols()), rng);
  }
  return p;
}

void TaggerParams::for_each_tensor(const std::function<void(double*, std::size_t)>& fn) {
  auto visit = [&](auto& t) { fn(t.data(), static_cast<std::size_t>(t.size())); };
  visit(token_embeddings);
  visit(position_embeddings);
  visit(mixer_weights);
  visit(mixer_bias);
  for (LinearHead* head : {&sgt, &gd, &ged}) {
    visit(head->weights);
    visit(head->bias);
  }
}

void TaggerParams::for_each_tensor(const std::function<void(const double*, std::size_t)>& fn) const {
  const_cast<TaggerParams*>(this)->for_each_tensor(
      std::function<void(double*, std::size_t)>([&](double* d, std::size_t n) { fn(d, n); }));
}

std::size_t TaggerParams::parameter_count() const {
  std::size_t total = 0;
  for_each_tensor(std::function<void(const double*, std::size_t)>([&](const double*, std::size_t n) { total += n; }));
  return total;
}

bool TaggerParams::all_finite() const {
  bool finite = true;
  for_each_tensor(std::function<void(const double*, std::size_t)>([&](const double* d, std::size_t n) {
    for (std::size_t i = 0; i < n && finite; ++i) finite = std::isfinite(d[i]);
  }));
  return finite;
}

bool TaggerParams::bitwise_equal(const TaggerParams& other) const {
  if (!(shape == other.shape)) return false;
  std::vector<std::pair<const double*, std::size_t>> a, b;
  for_each_tensor(std::function<void(const double*, std::size_t)>([&](const double* d, std::size_t n) { a.emplace_back(d, n); }));
  other.for_each_tensor(std::function<void(const double*, std::size_t)>([&](const double* d, std::size_t n) { b.emplace_back(d, n); }));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].second != b[i].second || std::memcmp(a[i].first, b[i].first, a[i].second * sizeof(double)) != 0) return false;
  }
  return true;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t Rng::below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

std::size_t token_bucket(const Token& token, std::size_t buckets) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint8_t byte) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  };
  mix(token.separator ? 0xFF : static_cast<std::uint8_t>(token.granularity));
  for (char c : token.text) mix(static_cast<std::uint8_t>(c));
  return static_cast<std::size_t>(h % buckets);
}

namespace {

void check_length(const AssembledInput& input, const TaggerParams& params) {
  if (input.size() > static_cast<std::size_t>(params.shape.encoder.max_positions)) {
    throw Error(ErrorCode::SequenceTooLong, std::to_string(input.size()) + " tokens exceed the limit of " +
                                                std::to_string(params.shape.encoder.max_positions));
  }
  if (input.speaker_width != params.shape.speaker_width) {
    throw Error(ErrorCode::InvalidArgument, "speaker width of input does not match the model");
  }
}

Matrix window_inputs(const AssembledInput& input, const TaggerParams& params, std::vector<std::size_t>& ids) {
  const auto& cfg = params.shape.encoder;
  const Eigen::Index m = static_cast<Eigen::Index>(input.size());
  const int d = cfg.embedding_dim;
  const int half = cfg.context_window / 2;
  ids.resize(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) ids[i] = token_bucket(input.tokens[i], cfg.vocab_buckets);

  Matrix x = Matrix::Zero(m, static_cast<Eigen::Index>(cfg.context_window) * d);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (int j = 0; j < cfg.context_window; ++j) {
      const Eigen::Index src = i + j - half;
      if (src < 0 || src >= m) continue;
      x.block(i, static_cast<Eigen::Index>(j) * d, 1, d) =
          params.token_embeddings.row(static_cast<Eigen::Index>(ids[static_cast<std::size_t>(src)])) +
          params.position_embeddings.row(src);
    }
  }
  return x;
}

Matrix mix(const Matrix& x, const TaggerParams& params) {
  Matrix pre = x * params.mixer_weights;
  pre.rowwise() += params.mixer_bias.transpose();
  return pre.array().tanh().matrix();
}

Matrix head_logits(const Matrix& ea, const LinearHead& head) {
  Matrix logits = ea * head.weights;
  logits.rowwise() += head.bias.transpose();
  return logits;
}

}  // namespace

Matrix encode(const AssembledInput& input, const TaggerParams& params) {
  check_length(input, params);
  std::vector<std::size_t> ids;
  return mix(window_inputs(input, params, ids), params);
}

Matrix make_dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error(ErrorCode::InvalidArgument, "dropout rate must be in [0, 1)");
  Matrix mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

Matrix apply_speaker(const Matrix& encoded, const AssembledInput& input, const Matrix& mask) {
  if (static_cast<std::size_t>(encoded.rows()) != input.size()) {
    throw Error(ErrorCode::InvalidArgument, "speaker track length differs from E");
  }
  const int s = input.speaker_width;
  Matrix ea(encoded.rows(), encoded.cols() + s);
  if (mask.size() == 0) {
    ea.leftCols(encoded.cols()) = encoded;
  } else {
    ea.leftCols(encoded.cols()) = encoded.cwiseProduct(mask);
  }
  for (Eigen::Index i = 0; i < encoded.rows(); ++i) {
    const auto row = input.speaker_row(static_cast<std::size_t>(i));
    for (int k = 0; k < s; ++k) ea(i, encoded.cols() + k) = row[static_cast<std::size_t>(k)];
  }
  return ea;
}

Matrix apply_speaker(const Matrix& encoded, const AssembledInput& input, double dropout_rate, Mode mode, Rng* rng) {
  if (mode == Mode::Infer || dropout_rate == 0.0) return apply_speaker(encoded, input, Matrix());
  if (rng == nullptr) throw Error(ErrorCode::InvalidArgument, "train-mode dropout needs a random stream");
  return apply_speaker(encoded, input, make_dropout_mask(encoded.rows(), encoded.cols(), dropout_rate, *rng));
}

ForwardTrace forward(const AssembledInput& input, const TaggerParams& params, Mode mode, double dropout_rate,
                     Rng* rng, const Matrix* mask) {
  check_length(input, params);
  ForwardTrace t;
  t.window_inputs = window_inputs(input, params, t.ids);
  t.encoded = mix(t.window_inputs, params);
  if (mode == Mode::Train) {
    if (mask != nullptr) {
      t.dropout_mask = *mask;
    } else if (dropout_rate > 0.0) {
      if (rng == nullptr) throw Error(ErrorCode::InvalidArgument, "train-mode dropout needs a random stream");
      t.dropout_mask = make_dropout_mask(t.encoded.rows(), t.encoded.cols(), dropout_rate, *rng);
    }
  }
  t.ea = apply_speaker(t.encoded, input, t.dropout_mask);
  t.logits_sgt = head_logits(t.ea, params.sgt);
  t.logits_gd = head_logits(t.ea, params.gd);
  t.logits_ged = head_logits(t.ea, params.ged);
  return t;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

namespace {

// -log softmax(row)[target], computed with log-sum-exp.
double cross_entropy(const Matrix& logits, Eigen::Index row, Eigen::Index target) {
  const double mx = logits.row(row).maxCoeff();
  const double lse = mx + std::log((logits.row(row).array() - mx).exp().sum());
  return lse - logits(row, target);
}

void check_rows(const Matrix& logits, std::size_t targets) {
  if (static_cast<std::size_t>(logits.rows()) != targets) {
    throw Error(ErrorCode::LengthMismatch, "label count differs from logit rows");
  }
}

}  // namespace

double loss_sgt(const Matrix& logits, std::span<const TagLabel> targets, std::span<const double> class_weights) {
  check_rows(logits, targets.size());
  if (class_weights.size() != static_cast<std::size_t>(logits.cols())) {
    throw Error(ErrorCode::InvalidArgument, "class weight count differs from tag classes");
  }
  if (targets.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto y = static_cast<Eigen::Index>(targets[i].value);
    if (y >= logits.cols()) throw Error(ErrorCode::LabelOutOfRange, "tag " + std::to_string(y) + " out of range");
    sum += class_weights[static_cast<std::size_t>(y)] * cross_entropy(logits, static_cast<Eigen::Index>(i), y);
  }
  return sum / static_cast<double>(targets.size());
}

double loss_binary(const Matrix& logits, std::span<const std::uint8_t> targets) {
  check_rows(logits, targets.size());
  if (targets.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] > 1) throw Error(ErrorCode::LabelOutOfRange, "binary label out of range");
    sum += cross_entropy(logits, static_cast<Eigen::Index>(i), targets[i]);
  }
  return sum / static_cast<double>(targets.size());
}

LossBreakdown total_loss(const ForwardTrace& trace, const LabeledExample& labels, std::span<const double> class_weights) {
  LossBreakdown l;
  l.sgt = loss_sgt(trace.logits_sgt, labels.y_sgt, class_weights);
  l.gd = loss_gd(trace.logits_gd, labels.y_gd);
  l.ged = loss_ged(trace.logits_ged, labels.y_ged);
  l.total = l.sgt + l.gd + l.ged;
  return l;
}

namespace {

void head_backward(const Matrix& ea, const Matrix& dlogits, const LinearHead& head, LinearHead& grad, Matrix& dea) {
  grad.weights.noalias() += ea.transpose() * dlogits;
  grad.bias += dlogits.colwise().sum().transpose();
  dea.noalias() += dlogits * head.weights.transpose();
}

}  // namespace

LossBreakdown accumulate_gradient(const ForwardTrace& trace, const LabeledExample& labels, const TaggerParams& params,
                                  std::span<const double> class_weights, TaggerParams& grad) {
  const LossBreakdown loss = total_loss(trace, labels, class_weights);
  const Eigen::Index m = trace.rows();
  if (m == 0) return loss;
  const double inv_m = 1.0 / static_cast<double>(m);
  const auto& cfg = params.shape.encoder;

  Matrix d_sgt = softmax_rows(trace.logits_sgt);
  Matrix d_gd = softmax_rows(trace.logits_gd);
  Matrix d_ged = softmax_rows(trace.logits_ged);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto y = static_cast<Eigen::Index>(labels.y_sgt[idx].value);
    d_sgt(i, y) -= 1.0;
    d_sgt.row(i) *= class_weights[static_cast<std::size_t>(y)] * inv_m;
    d_gd(i, labels.y_gd[idx]) -= 1.0;
    d_gd.row(i) *= inv_m;
    d_ged(i, labels.y_ged[idx]) -= 1.0;
    d_ged.row(i) *= inv_m;
  }

  Matrix dea = Matrix::Zero(m, trace.ea.cols());
  head_backward(trace.ea, d_sgt, params.sgt, grad.sgt, dea);
  head_backward(trace.ea, d_gd, params.gd, grad.gd, dea);
  head_backward(trace.ea, d_ged, params.ged, grad.ged, dea);

  Matrix de = dea.leftCols(trace.encoded.cols());
  if (trace.dropout_mask.size() != 0) de = de.cwiseProduct(trace.dropout_mask);
  const Matrix dpre = de.array() * (1.0 - trace.encoded.array().square());
  grad.mixer_weights.noalias() += trace.window_inputs.transpose() * dpre;
  grad.mixer_bias += dpre.colwise().sum().transpose();

  const Matrix dx = dpre * params.mixer_weights.transpose();
  const int d = cfg.embedding_dim;
  const int half = cfg.context_window / 2;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (int j = 0; j < cfg.context_window; ++j) {
      const Eigen::Index src = i + j - half;
      if (src < 0 || src >= m) continue;
      const auto slot = dx.block(i, static_cast<Eigen::Index>(j) * d, 1, d);
      grad.token_embeddings.row(static_cast<Eigen::Index>(trace.ids[static_cast<std::size_t>(src)])) += slot;
      grad.position_embeddings.row(src) += slot;
    }
  }
  return loss;
}

TaggerParams gradient(const LabeledExample& example, const TaggerParams& params, std::span<const double> class_weights,
                      const Matrix& mask) {
  const ForwardTrace trace =
      mask.size() == 0 ? forward(example.input, params, Mode::Infer) : forward(example.input, params, Mode::Train, 0.0, nullptr, &mask);
  TaggerParams grad = TaggerParams::zeros(params.shape);
  accumulate_gradient(trace, example, params, class_weights, grad);
  if (!grad.all_finite()) throw Error(ErrorCode::NonFiniteGradient, "gradient has non-finite entries");
  return grad;
}

std::vector<double> default_class_weights(std::span<const LabeledExample> examples, int tag_classes) {
  std::vector<std::size_t> freq(static_cast<std::size_t>(tag_classes), 0);
  for (const auto& ex : examples) {
    for (const auto tag : ex.y_sgt) {
      if (tag.value < freq.size()) ++freq[tag.value];
    }
  }
  std::vector<double> weights(freq.size(), 1.0);
  for (std::size_t k = 1; k < freq.size(); ++k) {
    if (freq[k] == 0) continue;
    const double ratio = static_cast<double>(freq[0]) / static_cast<double>(freq[k]);
    weights[k] = std::clamp(ratio, 1.0, 20.0);
  }
  return weights;
}

std::vector<TagLabel> argmax_tags(const Matrix& logits) {
  std::vector<TagLabel> tags(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;  // strict: ties go to the lower index
    }
    tags[static_cast<std::size_t>(i)] = TagLabel{static_cast<std::uint8_t>(best)};
  }
  return tags;
}

std::vector<TagLabel> predict_tags(const AssembledInput& input, const TaggerParams& params) {
  return argmax_tags(forward(input, params, Mode::Infer).logits_sgt);
}

double token_accuracy(std::span<const LabeledExample> examples, const TaggerParams& params) {
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& ex : examples) {
    const auto tags = predict_tags(ex.input, params);
    for (std::size_t i = 0; i < tags.size(); ++i) correct += tags[i] == ex.y_sgt[i] ? 1 : 0;
    total += tags.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

struct AdamState {
  TaggerParams m;
  TaggerParams v;
  long step = 0;
};

std::vector<std::pair<double*, std::size_t>> tensors(TaggerParams& p) {
  std::vector<std::pair<double*, std::size_t>> out;
  p.for_each_tensor(std::function<void(double*, std::size_t)>([&](double* d, std::size_t n) { out.emplace_back(d, n); }));
  return out;
}

void adam_step(TaggerParams& params, TaggerParams& grad, AdamState& state, const TrainConfig& cfg) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto p = tensors(params);
  auto g = tensors(grad);
  auto m = tensors(state.m);
  auto v = tensors(state.v);
  for (std::size_t t = 0; t < p.size(); ++t) {
    double* pd = p[t].first;
    const double* gd = g[t].first;
    double* md = m[t].first;
    double* vd = v[t].first;
    for (std::size_t i = 0; i < p[t].second; ++i) {
      md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gd[i];
      vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gd[i] * gd[i];
      pd[i] -= cfg.learning_rate * (md[i] / c1) / (std::sqrt(vd[i] / c2) + cfg.epsilon);
    }
  }
}

void scale(TaggerParams& p, double factor) {
  p.for_each_tensor(std::function<void(double*, std::size_t)>([&](double* d, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) d[i] *= factor;
  }));
}

void set_zero(TaggerParams& p) {
  p.for_each_tensor(std::function<void(double*, std::size_t)>([](double* d, std::size_t n) { std::fill_n(d, n, 0.0); }));
}

}  // namespace

TrainResult train(std::span<const LabeledExample> examples, const ModelShape& shape, const TrainConfig& config,
                  std::span<const LabeledExample> dev, const EpochCallback& on_epoch) {
  if (examples.empty()) throw Error(ErrorCode::InvalidArgument, "training needs at least one example");
  if (config.batch_size < 1 || config.epochs < 0) throw Error(ErrorCode::InvalidArgument, "bad batch size or epochs");
  if (config.dropout_rate < 0.0 || config.dropout_rate >= 1.0) {
    throw Error(ErrorCode::InvalidArgument, "dropout rate must be in [0, 1)");
  }
  const std::vector<double> weights =
      config.class_weights.empty() ? default_class_weights(examples, shape.tag_classes) : config.class_weights;
  if (weights.size() != static_cast<std::size_t>(shape.tag_classes)) {
    throw Error(ErrorCode::InvalidArgument, "class weight count differs from tag classes");
  }
  for (double w : weights) {
    if (!(w > 0.0)) throw Error(ErrorCode::InvalidArgument, "class weights must be positive");
  }

  TrainResult result;
  result.final_params = TaggerParams::random(shape, config.seed);
  TaggerParams& params = result.final_params;
  AdamState adam{TaggerParams::zeros(shape), TaggerParams::zeros(shape), 0};
  TaggerParams grad = TaggerParams::zeros(shape);
  Rng rng(config.seed * 0x9E3779B97F4A7C15ULL + 1);

  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double best_score = -1.0;
  result.params = params;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    LossBreakdown sum;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(config.batch_size));
      set_zero(grad);
      LossBreakdown batch;
      for (std::size_t k = b; k < end; ++k) {
        const auto& ex = examples[order[k]];
        const ForwardTrace trace = forward(ex.input, params, Mode::Train, config.dropout_rate, &rng);
        const LossBreakdown l = accumulate_gradient(trace, ex, params, weights, grad);
        batch.sgt += l.sgt;
        batch.gd += l.gd;
        batch.ged += l.ged;
        batch.total += l.total;
      }
      if (!std::isfinite(batch.total) || !grad.all_finite()) {
        result.aborted = true;
        if (best_score < 0.0) result.params = params;
        return result;
      }
      scale(grad, 1.0 / static_cast<double>(end - b));
      adam_step(params, grad, adam, config);
      sum.sgt += batch.sgt;
      sum.gd += batch.gd;
      sum.ged += batch.ged;
      sum.total += batch.total;
    }
    const double n = static_cast<double>(examples.size());
    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = {sum.sgt / n, sum.gd / n, sum.ged / n, sum.total / n};
    stats.token_accuracy = token_accuracy(examples, params);
    if (!dev.empty()) stats.dev_token_accuracy = token_accuracy(dev, params);
    const double score = stats.dev_token_accuracy.value_or(stats.token_accuracy);
    if (score > best_score) {
      best_score = score;
      result.best_epoch = epoch;
      result.params = params;
    }
    result.log.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Parameter file: "SGTM", u32 version, config block, u64 checksum, tensors.

namespace {

constexpr char kMagic[4] = {'S', 'G', 'T', 'M'};

template <class T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    out.append(bytes.data(), bytes.size());
  } else {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.append(bytes, sizeof(T));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) throw Error(ErrorCode::CorruptFile, "parameter file is truncated");
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
      std::reverse(bytes.begin(), bytes.end());
      value = std::bit_cast<T>(bytes);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::size_t position() const { return pos_; }
  std::string_view rest() const { return data_.substr(pos_); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_block(const ModelShape& s) {
  std::string out;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.encoder.embedding_dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.encoder.context_window));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.encoder.hidden_dim));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(s.encoder.vocab_buckets));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.encoder.max_positions));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.tag_classes));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.speaker_width));
  return out;
}

}  // namespace

void save_params(const TaggerParams& params, const std::filesystem::path& path) {
  std::string payload;
  payload.reserve(params.parameter_count() * sizeof(double));
  params.for_each_tensor(std::function<void(const double*, std::size_t)>([&](const double* d, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) put<double>(payload, d[i]);
  }));
  const std::string config = config_block(params.shape);

  std::string header(kMagic, 4);
  put<std::uint32_t>(header, kParamFormatVersion);
  header += config;
  put<std::uint64_t>(header, fnv1a(payload, fnv1a(config)));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

TaggerParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 8 || std::memcmp(data.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::CorruptFile, path.string() + " is not a parameter file");
  }
  Reader r(std::string_view(data).substr(4));
  const auto version = r.get<std::uint32_t>();
  if (version != kParamFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "format version " + std::to_string(version) + ", expected " +
                                                std::to_string(kParamFormatVersion));
  }
  const std::size_t config_begin = r.position();
  ModelShape shape;
  shape.encoder.embedding_dim = static_cast<int>(r.get<std::uint32_t>());
  shape.encoder.context_window = static_cast<int>(r.get<std::uint32_t>());
  shape.encoder.hidden_dim = static_cast<int>(r.get<std::uint32_t>());
  shape.encoder.vocab_buckets = static_cast<std::size_t>(r.get<std::uint64_t>());
  shape.encoder.max_positions = static_cast<int>(r.get<std::uint32_t>());
  shape.tag_classes = static_cast<int>(r.get<std::uint32_t>());
  shape.speaker_width = static_cast<int>(r.get<std::uint32_t>());
  const std::string_view config = std::string_view(data).substr(4 + config_begin, r.position() - config_begin);
  const auto checksum = r.get<std::uint64_t>();
  try {
    shape.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptFile, e.what());
  }

  TaggerParams params = TaggerParams::zeros(shape);
  const std::string_view payload = r.rest();
  if (payload.size() != params.parameter_count() * sizeof(double)) {
    throw Error(ErrorCode::CorruptFile, "payload size does not match the declared shape");
  }
  if (fnv1a(payload, fnv1a(config)) != checksum) throw Error(ErrorCode::CorruptFile, "checksum mismatch");
  Reader pr(payload);
  params.for_each_tensor(std::function<void(double*, std::size_t)>([&](double* d, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) d[i] = pr.get<double>();
  }));
  return params;
}

TaggerParams load_params(const std::filesystem::path& path, const ModelShape& expected) {
  TaggerParams params = load_params(path);
  if (!(params.shape == expected)) {
    throw Error(ErrorCode::VersionMismatch, "model file shape (N=" + std::to_string(params.shape.tag_classes) +
                                                ") differs from the configured shape (N=" +
                                                std::to_string(expected.tag_classes) + ")");
  }
  return params;
}

}  // namespace sgt
