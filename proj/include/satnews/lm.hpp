#pragma once

// Word-level LSTM language model: embedding -> stacked LSTM -> linear decoder,
// trained with truncated BPTT and clipped SGD.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "satnews/corpus.hpp"
#include "satnews/error.hpp"

namespace satnews {

static_assert(std::endian::native == std::endian::little,
              "model files are written in host byte order, which must be little-endian");

struct LmConfig {
  int embed_dim = 200;
  int hidden_dim = 200;
  int num_layers = 2;
  double dropout = 0.2;
  int epochs = 6;
  int bptt_len = 35;
  int batch_size = 1;  // parallel streams; 1 is a single sequential stream
  double learning_rate = 20.0;
  double lr_decay = 0.25;
  double grad_clip = 0.25;
  double init_range = 0.1;
  std::uint64_t seed = 1;

  void validate() const {
    if (embed_dim < 1 || hidden_dim < 1 || num_layers < 1)
      throw ConfigError("LM dimensions must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (bptt_len < 1 || batch_size < 1) throw ConfigError("bptt_len and batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
    if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0 (0 disables clipping)");
    if (!(init_range >= 0.0)) throw ConfigError("init_range must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const LmConfig& c) {
  j = nlohmann::json{{"embed_dim", c.embed_dim},   {"hidden_dim", c.hidden_dim},
                     {"num_layers", c.num_layers}, {"dropout", c.dropout},
                     {"epochs", c.epochs},         {"bptt_len", c.bptt_len},
                     {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
                     {"lr_decay", c.lr_decay},     {"grad_clip", c.grad_clip},
                     {"init_range", c.init_range}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, LmConfig& c) {
  j.at("embed_dim").get_to(c.embed_dim);
  j.at("hidden_dim").get_to(c.hidden_dim);
  j.at("num_layers").get_to(c.num_layers);
  j.at("dropout").get_to(c.dropout);
  j.at("epochs").get_to(c.epochs);
  j.at("bptt_len").get_to(c.bptt_len);
  j.at("batch_size").get_to(c.batch_size);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("lr_decay").get_to(c.lr_decay);
  j.at("grad_clip").get_to(c.grad_clip);
  j.at("init_range").get_to(c.init_range);
  j.at("seed").get_to(c.seed);
}

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// One LSTM layer. Gate rows are stacked in the order input, forget, cell, output.
struct LstmLayer {
  MatrixXd w_input;   // 4H x in
  MatrixXd w_hidden;  // 4H x H
  MatrixXd bias;      // 4H x 1
};

struct LmParams {
  MatrixXd embedding;  // d x |V|, one column per token
  std::vector<LstmLayer> layers;
  MatrixXd decoder_w;  // |V| x H
  MatrixXd decoder_b;  // |V| x 1

  static LmParams zeros(const LmConfig& cfg, std::size_t vocab_size) {
    const auto v = static_cast<Eigen::Index>(vocab_size);
    const Eigen::Index h = cfg.hidden_dim;
    LmParams p;
    p.embedding = MatrixXd::Zero(cfg.embed_dim, v);
    for (int l = 0; l < cfg.num_layers; ++l) {
      const Eigen::Index in = l == 0 ? cfg.embed_dim : h;
      p.layers.push_back({MatrixXd::Zero(4 * h, in), MatrixXd::Zero(4 * h, h), MatrixXd::Zero(4 * h, 1)});
    }
    p.decoder_w = MatrixXd::Zero(v, h);
    p.decoder_b = MatrixXd::Zero(v, 1);
    return p;
  }

  /// Visits every tensor in serialization order as f(name, matrix).
  template <typename F>
  void for_each(F&& f) {
    f(std::string("embedding"), embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string prefix = "lstm." + std::to_string(l) + ".";
      f(prefix + "w_input", layers[l].w_input);
      f(prefix + "w_hidden", layers[l].w_hidden);
      f(prefix + "bias", layers[l].bias);
    }
    f(std::string("decoder.weight"), decoder_w);
    f(std::string("decoder.bias"), decoder_b);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<LmParams*>(this)->for_each(
        [&](const std::string& name, MatrixXd& m) { f(name, static_cast<const MatrixXd&>(m)); });
  }
};

struct LmModel {
  LmConfig config;
  LmParams params;
  std::string vocab_fingerprint;

  std::size_t vocab_size() const { return static_cast<std::size_t>(params.embedding.cols()); }
};

/// Recurrent state, one column per parallel stream.
struct LmState {
  std::vector<MatrixXd> h;
  std::vector<MatrixXd> c;

  static LmState zeros(const LmConfig& cfg, Eigen::Index streams = 1) {
    LmState s;
    for (int l = 0; l < cfg.num_layers; ++l) {
      s.h.push_back(MatrixXd::Zero(cfg.hidden_dim, streams));
      s.c.push_back(MatrixXd::Zero(cfg.hidden_dim, streams));
    }
    return s;
  }
};

using TokenLossSeq = std::vector<double>;

/// Uniform(-init_range, init_range) weights, zero biases.
inline LmModel init_model(const LmConfig& cfg, const Vocabulary& vocab) {
  cfg.validate();
  LmModel model{cfg, LmParams::zeros(cfg, vocab.size()), vocab.fingerprint()};
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> dist(-cfg.init_range, cfg.init_range);
  model.params.for_each([&](const std::string& name, MatrixXd& m) {
    if (name.ends_with("bias")) return;
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  });
  return model;
}

// ---------------------------------------------------------------------------
// Loss

/// -log softmax(logits)[target], via log-sum-exp.
inline double cross_entropy(const Eigen::Ref<const VectorXd>& logits, TokenId target) {
  if (target < 0 || target >= logits.size())
    throw VocabMismatch("target id " + std::to_string(target) + " outside logit vector");
  if (!logits.allFinite()) throw NumericalError("non-finite logits in cross_entropy");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return std::max(0.0, lse - logits(target));
}

// ---------------------------------------------------------------------------
// Chunk forward/backward over T time steps x B streams. Column t*B + b holds
// stream b at step t.

struct DropoutSource {
  std::mt19937_64* rng = nullptr;
  double rate = 0.0;
};

namespace detail {

// Both go through Eigen's packet exp so they vectorize; they saturate
// correctly for large |x|.
template <typename Derived>
void sigmoid_in_place(Eigen::ArrayBase<Derived>& a) {
  a = ((-a).exp() + 1.0).inverse();
}
template <typename Derived>
void tanh_in_place(Eigen::ArrayBase<Derived>& a) {
  a = 1.0 - 2.0 / ((2.0 * a).exp() + 1.0);
}

struct ChunkCache {
  Eigen::Index steps = 0;
  Eigen::Index streams = 0;
  std::vector<MatrixXd> inputs;  // per layer, after dropout
  std::vector<MatrixXd> masks;   // per layer, empty when dropout is off
  std::vector<MatrixXd> gates;   // per layer, activated, 4H x TB
  std::vector<MatrixXd> cells;   // per layer, H x TB
  std::vector<MatrixXd> hidden;  // per layer, H x TB
  std::vector<MatrixXd> h0, c0;  // per layer, H x B
};

inline void check_ids(const LmModel& model, std::span<const TokenId> ids) {
  const auto v = static_cast<TokenId>(model.vocab_size());
  for (auto id : ids)
    if (id < 0 || id >= v)
      throw VocabMismatch("token id " + std::to_string(id) + " outside model vocabulary of size " +
                          std::to_string(v));
}

// Runs the network and returns the V x TB logit matrix; advances `state`.
inline MatrixXd forward_chunk(const LmModel& model, std::span<const TokenId> inputs,
                              Eigen::Index streams, LmState& state, ChunkCache* cache,
                              DropoutSource dropout) {
  const auto& p = model.params;
  const Eigen::Index cols = static_cast<Eigen::Index>(inputs.size());
  const Eigen::Index steps = streams > 0 ? cols / streams : 0;
  const Eigen::Index hd = model.config.hidden_dim;
  const bool drop = dropout.rng != nullptr && dropout.rate > 0.0;
  const std::size_t n_layers = p.layers.size();

  if (cache) {
    cache->steps = steps;
    cache->streams = streams;
    cache->inputs.assign(n_layers, {});
    cache->masks.assign(n_layers, {});
    cache->gates.assign(n_layers, {});
    cache->cells.assign(n_layers, {});
    cache->hidden.assign(n_layers, {});
    cache->h0 = state.h;
    cache->c0 = state.c;
  }

  MatrixXd x(p.embedding.rows(), cols);
  for (Eigen::Index k = 0; k < cols; ++k) x.col(k) = p.embedding.col(inputs[static_cast<std::size_t>(k)]);

  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = p.layers[l];
    if (drop) {
      const double keep = 1.0 - dropout.rate;
      std::uniform_real_distribution<double> u(0.0, 1.0);
      MatrixXd mask(x.rows(), x.cols());
      for (Eigen::Index j = 0; j < mask.cols(); ++j)
        for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = u(*dropout.rng) < keep ? 1.0 / keep : 0.0;
      x.array() *= mask.array();
      if (cache) cache->masks[l] = std::move(mask);
    }

    MatrixXd z(4 * hd, cols);
    z.noalias() = layer.w_input * x;
    z.colwise() += layer.bias.col(0);

    MatrixXd hidden(hd, cols);
    MatrixXd cells(hd, cols);
    MatrixXd& h = state.h[l];
    MatrixXd& c = state.c[l];
    MatrixXd zt(4 * hd, streams);
    Eigen::ArrayXXd tc(hd, streams);
    for (Eigen::Index t = 0; t < steps; ++t) {
      zt = z.middleCols(t * streams, streams);
      zt.noalias() += layer.w_hidden * h;
      auto zif = zt.topRows(2 * hd).array();
      auto zg = zt.middleRows(2 * hd, hd).array();
      auto zo = zt.bottomRows(hd).array();
      sigmoid_in_place(zif);
      tanh_in_place(zg);
      sigmoid_in_place(zo);
      c.array() = zt.middleRows(hd, hd).array() * c.array() + zt.topRows(hd).array() * zg;
      tc = c.array();
      tanh_in_place(tc);
      h.array() = zo * tc;
      hidden.middleCols(t * streams, streams) = h;
      cells.middleCols(t * streams, streams) = c;
      if (cache) z.middleCols(t * streams, streams) = zt;
    }
    if (cache) {
      cache->inputs[l] = std::move(x);
      cache->gates[l] = std::move(z);
      cache->cells[l] = cells;
      cache->hidden[l] = hidden;
    }
    x = std::move(hidden);
  }

  MatrixXd logits(p.decoder_w.rows(), cols);
  logits.noalias() = p.decoder_w * x;
  logits.colwise() += p.decoder_b.col(0);
  return logits;
}

// Turns logits into per-column losses and, when `dlogits` is non-null, the
// gradient of scale * (sum of losses) with respect to the logits.
inline std::vector<double> softmax_losses(const MatrixXd& logits, std::span<const TokenId> targets,
                                          MatrixXd* dlogits, double scale) {
  std::vector<double> losses(targets.size());
  if (dlogits) dlogits->resize(logits.rows(), logits.cols());
  for (Eigen::Index k = 0; k < logits.cols(); ++k) {
    auto col = logits.col(k);
    const double m = col.maxCoeff();
    if (!std::isfinite(m)) throw NumericalError("non-finite logits");
    const double lse = m + std::log((col.array() - m).exp().sum());
    const TokenId target = targets[static_cast<std::size_t>(k)];
    losses[static_cast<std::size_t>(k)] = std::max(0.0, lse - col(target));
    if (dlogits) {
      dlogits->col(k) = ((col.array() - lse).exp() * scale).matrix();
      (*dlogits)(target, k) -= scale;
    }
  }
  return losses;
}

// Accumulates parameter gradients for the chunk into `grads`.
inline void backward_chunk(const LmModel& model, std::span<const TokenId> inputs,
                           const ChunkCache& cache, const MatrixXd& dlogits, LmParams& grads) {
  const auto& p = model.params;
  const Eigen::Index hd = model.config.hidden_dim;
  const Eigen::Index steps = cache.steps;
  const Eigen::Index streams = cache.streams;
  const Eigen::Index cols = steps * streams;
  const std::size_t n_layers = p.layers.size();

  const MatrixXd& top = cache.hidden[n_layers - 1];
  grads.decoder_w.noalias() += dlogits * top.transpose();
  grads.decoder_b.col(0) += dlogits.rowwise().sum();
  MatrixXd dx(hd, cols);
  dx.noalias() = p.decoder_w.transpose() * dlogits;

  for (std::size_t li = n_layers; li-- > 0;) {
    const auto& layer = p.layers[li];
    const MatrixXd& gates = cache.gates[li];
    const MatrixXd& cells = cache.cells[li];
    const MatrixXd& hidden = cache.hidden[li];

    MatrixXd dz(4 * hd, cols);
    MatrixXd dh_next = MatrixXd::Zero(hd, streams);
    MatrixXd dc_next = MatrixXd::Zero(hd, streams);
    MatrixXd dc(hd, streams);
    Eigen::ArrayXXd i(hd, streams), f(hd, streams), g(hd, streams), o(hd, streams), tc(hd, streams),
        dh(hd, streams);
    for (Eigen::Index t = steps; t-- > 0;) {
      const Eigen::Index col = t * streams;
      i = gates.block(0, col, hd, streams);
      f = gates.block(hd, col, hd, streams);
      g = gates.block(2 * hd, col, hd, streams);
      o = gates.block(3 * hd, col, hd, streams);
      tc = cells.middleCols(col, streams).array();
      tanh_in_place(tc);
      const MatrixXd& c_prev_src = t > 0 ? cells : cache.c0[li];
      const auto c_prev = c_prev_src.middleCols(t > 0 ? col - streams : 0, streams).array();

      dh = dx.middleCols(col, streams).array() + dh_next.array();
      dc.array() = dc_next.array() + dh * o * (1.0 - tc * tc);
      dz.block(0, col, hd, streams).array() = dc.array() * g * i * (1.0 - i);
      dz.block(hd, col, hd, streams).array() = dc.array() * c_prev * f * (1.0 - f);
      dz.block(2 * hd, col, hd, streams).array() = dc.array() * i * (1.0 - g * g);
      dz.block(3 * hd, col, hd, streams).array() = dh * tc * o * (1.0 - o);
      dc_next.array() = dc.array() * f;
      dh_next.noalias() = layer.w_hidden.transpose() * dz.middleCols(col, streams);
    }

    MatrixXd h_prev(hd, cols);
    h_prev.leftCols(streams) = cache.h0[li];
    if (steps > 1) h_prev.rightCols(cols - streams) = hidden.leftCols(cols - streams);

    auto& gl = grads.layers[li];
    gl.w_input.noalias() += dz * cache.inputs[li].transpose();
    gl.w_hidden.noalias() += dz * h_prev.transpose();
    gl.bias.col(0) += dz.rowwise().sum();

    MatrixXd dinput(layer.w_input.cols(), cols);
    dinput.noalias() = layer.w_input.transpose() * dz;
    if (cache.masks[li].size() > 0) dinput.array() *= cache.masks[li].array();
    dx = std::move(dinput);
  }

  for (Eigen::Index k = 0; k < cols; ++k) grads.embedding.col(inputs[static_cast<std::size_t>(k)]) += dx.col(k);
}

}  // namespace detail

/// Sum of token losses over a chunk and its gradient. `inputs`/`targets` are
/// laid out step-major (column t*streams + b). Dropout is applied when
/// `dropout.rng` is set. Gradients are accumulated into `grads` scaled by
/// `grad_scale`.
inline double chunk_loss_and_grad(const LmModel& model, std::span<const TokenId> inputs,
                                  std::span<const TokenId> targets, Eigen::Index streams,
                                  LmState& state, LmParams& grads, double grad_scale = 1.0,
                                  DropoutSource dropout = {}) {
  detail::check_ids(model, inputs);
  detail::check_ids(model, targets);
  detail::ChunkCache cache;
  MatrixXd logits = detail::forward_chunk(model, inputs, streams, state, &cache, dropout);
  MatrixXd dlogits;
  auto losses = detail::softmax_losses(logits, targets, &dlogits, grad_scale);
  detail::backward_chunk(model, inputs, cache, dlogits, grads);
  double sum = 0.0;
  for (double v : losses) sum += v;
  return sum;
}

struct ForwardResult {
  MatrixXd logits;  // |V| x len, one column per input position
  LmState state;
};

/// Runs a single stream. With `train_mode` set and an rng supplied, dropout
/// is active after the embedding and between layers.
inline ForwardResult forward(const LmModel& model, std::span<const TokenId> token_ids,
                             const LmState& state, bool train_mode = false,
                             std::mt19937_64* rng = nullptr) {
  detail::check_ids(model, token_ids);
  if (state.h.size() != model.params.layers.size())
    throw ConfigError("state layer count does not match model");
  for (std::size_t l = 0; l < state.h.size(); ++l)
    if (state.h[l].rows() != model.config.hidden_dim || state.c[l].rows() != model.config.hidden_dim ||
        state.h[l].cols() != 1 || state.c[l].cols() != 1)
      throw ConfigError("state dimensions do not match model");
  ForwardResult out{MatrixXd(static_cast<Eigen::Index>(model.vocab_size()), 0), state};
  if (token_ids.empty()) return out;
  DropoutSource dropout{train_mode ? rng : nullptr, model.config.dropout};
  out.logits = detail::forward_chunk(model, token_ids, 1, out.state, nullptr, dropout);
  return out;
}

/// Per-token losses of one sentence in evaluation mode: the first prediction
/// is conditioned on <eos>, and <eos> is the final target. State starts at zero.
inline TokenLossSeq token_losses(const LmModel& model, std::span<const TokenId> sentence_ids) {
  if (sentence_ids.empty()) throw EmptyDocument("cannot score an empty sentence");
  detail::check_ids(model, sentence_ids);
  std::vector<TokenId> inputs;
  inputs.reserve(sentence_ids.size() + 1);
  inputs.push_back(Vocabulary::kEos);
  inputs.insert(inputs.end(), sentence_ids.begin(), sentence_ids.end());
  std::vector<TokenId> targets(sentence_ids.begin(), sentence_ids.end());
  targets.push_back(Vocabulary::kEos);

  LmState state = LmState::zeros(model.config);
  MatrixXd logits = detail::forward_chunk(model, inputs, 1, state, nullptr, {});
  return detail::softmax_losses(logits, targets, nullptr, 0.0);
}

// ---------------------------------------------------------------------------
// Training

struct EpochReport {
  int epoch = 0;
  double train_loss = 0.0;                // mean nats per token, training mode
  std::optional<double> heldout_loss;     // mean nats per token, evaluation mode
  double learning_rate = 0.0;             // rate used during this epoch
  std::size_t tokens = 0;
  double seconds = 0.0;
};

struct TrainOptions {
  std::span<const Document> heldout;  // drives learning-rate annealing when nonempty
  std::function<void(const EpochReport&)> on_epoch;
};

struct TrainResult {
  LmModel model;
  std::vector<EpochReport> epochs;
};

namespace detail {

// <eos> s1 <eos> s2 <eos> ...
inline std::vector<TokenId> token_stream(std::span<const Document> docs) {
  std::vector<TokenId> stream{Vocabulary::kEos};
  for (const auto& doc : docs)
    for (const auto& sentence : doc.sentences) {
      stream.insert(stream.end(), sentence.begin(), sentence.end());
      stream.push_back(Vocabulary::kEos);
    }
  return stream;
}

// Splits the stream into `streams` contiguous columns and yields chunks of at
// most bptt_len steps as (inputs, targets) laid out step-major.
struct Batcher {
  std::span<const TokenId> stream;
  Eigen::Index streams;
  Eigen::Index length;  // steps per column

  Batcher(std::span<const TokenId> s, int batch_size) : stream(s) {
    const auto predictable = static_cast<Eigen::Index>(s.size()) - 1;
    streams = std::max<Eigen::Index>(1, std::min<Eigen::Index>(batch_size, predictable));
    length = predictable / streams;
  }

  void chunk(Eigen::Index start, Eigen::Index steps, std::vector<TokenId>& inputs,
             std::vector<TokenId>& targets) const {
    inputs.resize(static_cast<std::size_t>(steps * streams));
    targets.resize(inputs.size());
    for (Eigen::Index t = 0; t < steps; ++t)
      for (Eigen::Index b = 0; b < streams; ++b) {
        const auto pos = static_cast<std::size_t>(b * length + start + t);
        inputs[static_cast<std::size_t>(t * streams + b)] = stream[pos];
        targets[static_cast<std::size_t>(t * streams + b)] = stream[pos + 1];
      }
  }
};

}  // namespace detail

/// Mean per-token loss of a stream in evaluation mode, state carried across chunks.
inline double stream_loss(const LmModel& model, std::span<const Document> docs) {
  auto stream = detail::token_stream(docs);
  if (stream.size() < 2) throw EmptyCorpus("no tokens to evaluate");
  detail::check_ids(model, stream);
  detail::Batcher batcher(stream, model.config.batch_size);
  LmState state = LmState::zeros(model.config, batcher.streams);
  std::vector<TokenId> inputs, targets;
  double total = 0.0;
  std::size_t count = 0;
  for (Eigen::Index start = 0; start < batcher.length; start += model.config.bptt_len) {
    const Eigen::Index steps = std::min<Eigen::Index>(model.config.bptt_len, batcher.length - start);
    batcher.chunk(start, steps, inputs, targets);
    MatrixXd logits = detail::forward_chunk(model, inputs, batcher.streams, state, nullptr, {});
    for (double v : detail::softmax_losses(logits, targets, nullptr, 0.0)) total += v;
    count += targets.size();
  }
  return total / static_cast<double>(count);
}

/// Trains for exactly config.epochs passes of truncated-BPTT SGD over the
/// concatenated token stream. The learning rate is multiplied by lr_decay
/// after any epoch whose held-out loss (training loss when no held-out set is
/// given) fails to improve on the best so far.
inline TrainResult train(std::span<const Document> lm_docs, const Vocabulary& vocab,
                         const LmConfig& config, const TrainOptions& options = {}) {
  config.validate();
  auto stream = detail::token_stream(lm_docs);
  if (stream.size() < 2) throw EmptyCorpus("cannot train a language model on an empty corpus");
  for (const auto& doc : lm_docs)
    if (!doc.vocab_fingerprint.empty() && doc.vocab_fingerprint != vocab.fingerprint())
      throw VocabMismatch("document '" + doc.id + "' was encoded with a different vocabulary");

  TrainResult result{init_model(config, vocab), {}};
  LmModel& model = result.model;
  detail::check_ids(model, stream);

  std::mt19937_64 dropout_rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  const DropoutSource dropout{&dropout_rng, config.dropout};
  detail::Batcher batcher(stream, config.batch_size);
  double lr = config.learning_rate;
  std::optional<double> best;
  std::vector<TokenId> inputs, targets;
  LmParams grads = LmParams::zeros(config, vocab.size());
  std::vector<std::pair<MatrixXd*, MatrixXd*>> dense;  // (weight, gradient), embedding excluded
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    dense.emplace_back(&model.params.layers[l].w_input, &grads.layers[l].w_input);
    dense.emplace_back(&model.params.layers[l].w_hidden, &grads.layers[l].w_hidden);
    dense.emplace_back(&model.params.layers[l].bias, &grads.layers[l].bias);
  }
  dense.emplace_back(&model.params.decoder_w, &grads.decoder_w);
  dense.emplace_back(&model.params.decoder_b, &grads.decoder_b);
  std::vector<TokenId> touched;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    LmState state = LmState::zeros(config, batcher.streams);
    double total = 0.0;
    std::size_t count = 0;
    std::size_t batch_index = 0;
    for (Eigen::Index start = 0; start < batcher.length; start += config.bptt_len, ++batch_index) {
      const Eigen::Index steps = std::min<Eigen::Index>(config.bptt_len, batcher.length - start);
      batcher.chunk(start, steps, inputs, targets);
      touched.assign(inputs.begin(), inputs.end());
      std::sort(touched.begin(), touched.end());
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
      const double n = static_cast<double>(targets.size());
      const auto where = " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index);
      double loss = 0.0;
      try {
        loss = chunk_loss_and_grad(model, inputs, targets, batcher.streams, state, grads, 1.0 / n, dropout);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + where);
      }
      if (!std::isfinite(loss))
        throw NumericalError("non-finite training loss" + where);
      total += loss;
      count += targets.size();

      // Embedding gradients are nonzero only in the columns of this chunk's inputs.
      double squared = 0.0;
      for (auto [w, g] : dense) squared += g->squaredNorm();
      for (TokenId id : touched) squared += grads.embedding.col(id).squaredNorm();
      const double norm = std::sqrt(squared);
      if (!std::isfinite(norm))
        throw NumericalError("non-finite gradient" + where);
      double scale = lr;
      if (config.grad_clip > 0.0 && norm > config.grad_clip) scale *= config.grad_clip / norm;
      for (auto [w, g] : dense) {
        double* wd = w->data();
        double* gd = g->data();
        for (Eigen::Index k = 0; k < g->size(); ++k) {
          wd[k] -= scale * gd[k];
          gd[k] = 0.0;
        }
      }
      for (TokenId id : touched) {
        model.params.embedding.col(id) -= scale * grads.embedding.col(id);
        grads.embedding.col(id).setZero();
      }
    }

    EpochReport report;
    report.epoch = epoch;
    report.train_loss = total / static_cast<double>(count);
    report.learning_rate = lr;
    report.tokens = count;
    double criterion = report.train_loss;
    if (!options.heldout.empty()) {
      report.heldout_loss = stream_loss(model, options.heldout);
      criterion = *report.heldout_loss;
    }
    if (!best || criterion < *best) {
      best = criterion;
    } else {
      lr *= config.lr_decay;
    }
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(report);
    if (options.on_epoch) options.on_epoch(report);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serialization: "LMD1" | u64 header length | JSON header | tensor data.

enum class StoragePrecision { f64, f32 };

inline void save_model(const std::string& path, const LmModel& model,
                       StoragePrecision precision = StoragePrecision::f64) {
  const std::size_t elem = precision == StoragePrecision::f64 ? 8 : 4;
  nlohmann::json header;
  header["config"] = model.config;
  header["vocab_size"] = model.vocab_size();
  header["vocab_fingerprint"] = model.vocab_fingerprint;
  header["dtype"] = precision == StoragePrecision::f64 ? "float64" : "float32";
  header["layout"] = "column-major";
  header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  model.params.for_each([&](const std::string& name, const MatrixXd& m) {
    header["tensors"].push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", offset}});
    offset += static_cast<std::size_t>(m.size()) * elem;
  });
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file " + path);
  out.write("LMD1", 4);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  model.params.for_each([&](const std::string&, const MatrixXd& m) {
    if (precision == StoragePrecision::f64) {
      out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * 8));
    } else {
      Eigen::MatrixXf f = m.cast<float>();
      out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * 4));
    }
  });
  if (!out) throw DataError("failed writing model file " + path);
}

inline LmModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path);
  char magic[4];
  std::uint64_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, "LMD1", 4) != 0) throw DataError(path + " is not an LMD1 model file");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError(path + ": truncated header");

  LmModel model;
  std::vector<char> data;
  try {
    const auto header = nlohmann::json::parse(text);
    model.config = header.at("config").get<LmConfig>();
    model.config.validate();
    model.vocab_fingerprint = header.at("vocab_fingerprint").get<std::string>();
    const auto vocab_size = header.at("vocab_size").get<std::size_t>();
    const std::string dtype = header.at("dtype").get<std::string>();
    if (dtype != "float64" && dtype != "float32") throw DataError(path + ": unknown dtype " + dtype);
    const std::size_t elem = dtype == "float64" ? 8 : 4;
    model.params = LmParams::zeros(model.config, vocab_size);
    data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());

    const auto& tensors = header.at("tensors");
    std::size_t k = 0;
    model.params.for_each([&](const std::string& name, MatrixXd& m) {
      if (k >= tensors.size()) throw DataError(path + ": missing tensor " + name);
      const auto& t = tensors[k++];
      const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
      if (t.at("name").get<std::string>() != name || shape.size() != 2 || shape[0] != m.rows() ||
          shape[1] != m.cols())
        throw DataError(path + ": tensor manifest does not match config at " + name);
      const auto offset = t.at("offset").get<std::size_t>();
      const std::size_t bytes = static_cast<std::size_t>(m.size()) * elem;
      if (offset + bytes > data.size()) throw DataError(path + ": truncated tensor data at " + name);
      if (elem == 8) {
        std::memcpy(m.data(), data.data() + offset, bytes);
      } else {
        Eigen::MatrixXf f(m.rows(), m.cols());
        std::memcpy(f.data(), data.data() + offset, bytes);
        m = f.cast<double>();
      }
      if (!m.allFinite()) throw NumericalError(path + ": non-finite values in tensor " + name);
    });
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed header (" + e.what() + ")");
  }
  return model;
}

}  // namespace satnews
