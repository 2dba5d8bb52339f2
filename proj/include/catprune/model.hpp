#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "catprune/errors.hpp"
#include "catprune/prng.hpp"
#include "catprune/sha256.hpp"
#include "catprune/vocab.hpp"

namespace catprune {

enum class Optimizer { sgd, adam };

inline const char* optimizer_name(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

// Conditional feed-forward scorer: mean-pooled source embedding concatenated
// with the embeddings of the previous context_k target tokens (BOS-padded),
// one tanh hidden layer, affine output, log-softmax over the target
// vocabulary. Double precision throughout.
struct ModelConfig {
    std::int64_t embed_dim = 32;
    std::int64_t hidden_dim = 64;
    std::int64_t context_k = 2;
    std::int64_t src_vocab_size = 0;
    std::int64_t tgt_vocab_size = 0;
    std::uint64_t seed = 1;
    Optimizer optimizer = Optimizer::sgd;
    double learning_rate = 0.1; // 5e-4 is the sensible default for adam
    std::int64_t epochs = 5;
    std::int64_t batch_size = 64;
    double label_smoothing = 0.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.98;
    double adam_eps = 1e-8;

    static double default_learning_rate(Optimizer o) { return o == Optimizer::sgd ? 0.1 : 5e-4; }

    void validate() const {
        if (embed_dim < 1 || hidden_dim < 1 || context_k < 1)
            throw UsageError("model dimensions must be >= 1");
        if (src_vocab_size < 1 || tgt_vocab_size < 1)
            throw UsageError("vocabulary sizes must be set before training");
        if (!(learning_rate > 0)) throw UsageError("learning rate must be > 0");
        if (epochs < 1) throw UsageError("epochs must be >= 1");
        if (batch_size < 1) throw UsageError("batch size must be >= 1");
        if (label_smoothing < 0 || label_smoothing >= 1)
            throw UsageError("label smoothing must lie in [0, 1)");
    }

    std::int64_t input_dim() const { return (context_k + 1) * embed_dim; }

    std::string canonical_json() const {
        std::string s = "{";
        s += "\"embed_dim\":" + std::to_string(embed_dim);
        s += ",\"hidden_dim\":" + std::to_string(hidden_dim);
        s += ",\"context_k\":" + std::to_string(context_k);
        s += ",\"src_vocab_size\":" + std::to_string(src_vocab_size);
        s += ",\"tgt_vocab_size\":" + std::to_string(tgt_vocab_size);
        s += ",\"seed\":" + std::to_string(seed);
        s += ",\"optimizer\":\"" + std::string(optimizer_name(optimizer)) + "\"";
        s += ",\"learning_rate\":" + format_g17(learning_rate);
        s += ",\"epochs\":" + std::to_string(epochs);
        s += ",\"batch_size\":" + std::to_string(batch_size);
        s += ",\"label_smoothing\":" + format_g17(label_smoothing);
        s += ",\"adam_beta1\":" + format_g17(adam_beta1);
        s += ",\"adam_beta2\":" + format_g17(adam_beta2);
        s += ",\"adam_eps\":" + format_g17(adam_eps);
        s += "}";
        return s;
    }

    // First 8 bytes of the SHA-256 of the canonical config rendering.
    std::uint64_t hash() const {
        const std::string hex = sha256_hex(canonical_json());
        std::uint64_t h = 0;
        for (int i = 0; i < 16; ++i) {
            const char c = hex[static_cast<std::size_t>(i)];
            h = (h << 4) | static_cast<std::uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
        }
        return h;
    }
};

// Frozen parameters after a given epoch (0 = freshly initialized). Treated
// as immutable once trained; safe to share across scoring workers.
struct ModelSnapshot {
    std::int64_t epoch = 0;
    ModelConfig config;
    std::uint64_t config_hash = 0;

    std::vector<double> src_embed; // V_s x E, row-major
    std::vector<double> tgt_embed; // V_t x E
    std::vector<double> hidden_w;  // H x (k+1)E
    std::vector<double> hidden_b;  // H
    std::vector<double> out_w;     // V_t x H
    std::vector<double> out_b;     // V_t

    static ModelSnapshot zeros(const ModelConfig& cfg) {
        cfg.validate();
        ModelSnapshot s;
        s.config = cfg;
        s.config_hash = cfg.hash();
        const auto e = static_cast<std::size_t>(cfg.embed_dim);
        const auto h = static_cast<std::size_t>(cfg.hidden_dim);
        const auto f = static_cast<std::size_t>(cfg.input_dim());
        s.src_embed.assign(static_cast<std::size_t>(cfg.src_vocab_size) * e, 0.0);
        s.tgt_embed.assign(static_cast<std::size_t>(cfg.tgt_vocab_size) * e, 0.0);
        s.hidden_w.assign(h * f, 0.0);
        s.hidden_b.assign(h, 0.0);
        s.out_w.assign(static_cast<std::size_t>(cfg.tgt_vocab_size) * h, 0.0);
        s.out_b.assign(static_cast<std::size_t>(cfg.tgt_vocab_size), 0.0);
        return s;
    }

    std::vector<std::vector<double>*> tensors() {
        return {&src_embed, &tgt_embed, &hidden_w, &hidden_b, &out_w, &out_b};
    }
    std::vector<const std::vector<double>*> tensors() const {
        return {&src_embed, &tgt_embed, &hidden_w, &hidden_b, &out_w, &out_b};
    }

    bool all_finite() const {
        for (const auto* t : tensors())
            for (const double v : *t)
                if (!std::isfinite(v)) return false;
        return true;
    }
};

// Parameters drawn from uniform(-0.1, 0.1) by the xoshiro256** stream
// derived from config.seed; fill order is the tensors() order, row-major.
inline ModelSnapshot init_model(const ModelConfig& cfg) {
    ModelSnapshot s = ModelSnapshot::zeros(cfg);
    Prng rng = Prng::derive(cfg.seed, std::uint64_t{0x1217u});
    for (auto* t : s.tensors())
        for (auto& v : *t) v = rng.next_double(-0.1, 0.1);
    return s;
}

namespace detail {

inline void check_pair_in_vocab(const ModelSnapshot& m, const TokenizedPair& pair) {
    for (const auto id : pair.source_tokens)
        if (id < 0 || id >= m.config.src_vocab_size)
            throw UsageError("vocabulary mismatch: source token id " + std::to_string(id) +
                             " outside [0, " + std::to_string(m.config.src_vocab_size) + ")");
    for (const auto id : pair.target_tokens)
        if (id < 0 || id >= m.config.tgt_vocab_size)
            throw UsageError("vocabulary mismatch: target token id " + std::to_string(id) +
                             " outside [0, " + std::to_string(m.config.tgt_vocab_size) + ")");
    if (pair.source_tokens.empty()) throw UsageError("empty source token sequence");
    if (pair.target_tokens.empty()) throw UsageError("empty target token sequence");
}

} // namespace detail

// Scratch buffers for one forward (and optionally backward) pass. Reusable
// across calls; each worker thread owns one.
struct ModelWorkspace {
    std::vector<double> src_mean; // E
    std::vector<double> input;    // (k+1)E
    std::vector<double> hidden;   // H
    std::vector<double> logits;   // V_t
    std::vector<double> logp;     // V_t

    void resize(const ModelConfig& cfg) {
        src_mean.resize(static_cast<std::size_t>(cfg.embed_dim));
        input.resize(static_cast<std::size_t>(cfg.input_dim()));
        hidden.resize(static_cast<std::size_t>(cfg.hidden_dim));
        logits.resize(static_cast<std::size_t>(cfg.tgt_vocab_size));
        logp.resize(static_cast<std::size_t>(cfg.tgt_vocab_size));
    }
};

namespace detail {

inline void mean_source_embedding(const ModelSnapshot& m, std::span<const TokenId> source,
                                  std::vector<double>& out) {
    const auto e = static_cast<std::size_t>(m.config.embed_dim);
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto id : source) {
        const double* row = m.src_embed.data() + static_cast<std::size_t>(id) * e;
        for (std::size_t d = 0; d < e; ++d) out[d] += row[d];
    }
    const double inv = 1.0 / static_cast<double>(source.size());
    for (std::size_t d = 0; d < e; ++d) out[d] *= inv;
}

// input = [src_mean || emb(prev_1) || ... || emb(prev_k)], prev_1 being the
// immediately preceding target token, BOS-padded before position 0.
inline void build_input(const ModelSnapshot& m, const std::vector<double>& src_mean,
                        std::span<const TokenId> target, std::size_t pos,
                        std::vector<double>& input, TokenId* context_ids) {
    const auto e = static_cast<std::size_t>(m.config.embed_dim);
    const auto k = static_cast<std::size_t>(m.config.context_k);
    std::copy(src_mean.begin(), src_mean.end(), input.begin());
    for (std::size_t j = 1; j <= k; ++j) {
        const TokenId prev = pos >= j ? target[pos - j] : Vocabulary::kBos;
        context_ids[j - 1] = prev;
        const double* row = m.tgt_embed.data() + static_cast<std::size_t>(prev) * e;
        std::copy(row, row + e, input.begin() + static_cast<std::ptrdiff_t>(j * e));
    }
}

// hidden = tanh(W1 x + b1); logits = W2 hidden + b2; logp = log_softmax(logits).
// Returns log Z's max-shifted pieces through ws.logp.
inline void forward_from_input(const ModelSnapshot& m, ModelWorkspace& ws) {
    const auto f = static_cast<std::size_t>(m.config.input_dim());
    const auto h = static_cast<std::size_t>(m.config.hidden_dim);
    const auto v = static_cast<std::size_t>(m.config.tgt_vocab_size);

    for (std::size_t i = 0; i < h; ++i) {
        const double* row = m.hidden_w.data() + i * f;
        double acc = m.hidden_b[i];
        for (std::size_t j = 0; j < f; ++j) acc += row[j] * ws.input[j];
        ws.hidden[i] = std::tanh(acc);
    }
    for (std::size_t o = 0; o < v; ++o) {
        const double* row = m.out_w.data() + o * h;
        double acc = m.out_b[o];
        for (std::size_t j = 0; j < h; ++j) acc += row[j] * ws.hidden[j];
        ws.logits[o] = acc;
    }
    double max_logit = ws.logits[0];
    for (std::size_t o = 1; o < v; ++o) max_logit = std::max(max_logit, ws.logits[o]);
    double sum = 0.0;
    for (std::size_t o = 0; o < v; ++o) sum += std::exp(ws.logits[o] - max_logit);
    const double lse = max_logit + std::log(sum);
    for (std::size_t o = 0; o < v; ++o) ws.logp[o] = ws.logits[o] - lse;
}

} // namespace detail

// Natural-log probability of each target token given the source and the
// preceding target context. Returns exactly T values, each <= 0.
inline std::vector<double> log_prob(const ModelSnapshot& m, const TokenizedPair& pair,
                                    ModelWorkspace& ws) {
    detail::check_pair_in_vocab(m, pair);
    ws.resize(m.config);
    detail::mean_source_embedding(m, pair.source_tokens, ws.src_mean);

    std::vector<TokenId> context(static_cast<std::size_t>(m.config.context_k));
    std::vector<double> out(pair.target_tokens.size());
    for (std::size_t t = 0; t < pair.target_tokens.size(); ++t) {
        detail::build_input(m, ws.src_mean, pair.target_tokens, t, ws.input, context.data());
        detail::forward_from_input(m, ws);
        out[t] = std::min(ws.logp[static_cast<std::size_t>(pair.target_tokens[t])], 0.0);
    }
    return out;
}

inline std::vector<double> log_prob(const ModelSnapshot& m, const TokenizedPair& pair) {
    ModelWorkspace ws;
    return log_prob(m, pair, ws);
}

// Gradient buffers matching the snapshot's parameter layout.
struct Gradients {
    std::vector<double> src_embed, tgt_embed, hidden_w, hidden_b, out_w, out_b;

    explicit Gradients(const ModelConfig& cfg) {
        const ModelSnapshot z = ModelSnapshot::zeros(cfg);
        src_embed = z.src_embed;
        tgt_embed = z.tgt_embed;
        hidden_w = z.hidden_w;
        hidden_b = z.hidden_b;
        out_w = z.out_w;
        out_b = z.out_b;
    }

    std::vector<std::vector<double>*> tensors() {
        return {&src_embed, &tgt_embed, &hidden_w, &hidden_b, &out_w, &out_b};
    }

    void zero() {
        for (auto* t : tensors()) std::fill(t->begin(), t->end(), 0.0);
    }
};

// Mean per-token cross-entropy of a batch, with uniform-redistribution label
// smoothing when enabled: q = (1-eps) * onehot + eps / V. Accumulates the
// gradient of that mean into `grads` (which the caller zeroes); iteration
// order is fixed, so the result is independent of available parallelism.
inline double loss_and_gradients(const ModelSnapshot& m, std::span<const TokenizedPair> batch,
                                 Gradients* grads) {
    const auto e = static_cast<std::size_t>(m.config.embed_dim);
    const auto f = static_cast<std::size_t>(m.config.input_dim());
    const auto h = static_cast<std::size_t>(m.config.hidden_dim);
    const auto v = static_cast<std::size_t>(m.config.tgt_vocab_size);
    const auto k = static_cast<std::size_t>(m.config.context_k);
    const double eps = m.config.label_smoothing;

    std::int64_t total_tokens = 0;
    for (const auto& pair : batch) {
        detail::check_pair_in_vocab(m, pair);
        total_tokens += static_cast<std::int64_t>(pair.target_tokens.size());
    }
    if (total_tokens == 0) throw UsageError("batch has no target tokens");
    const double inv_tokens = 1.0 / static_cast<double>(total_tokens);

    ModelWorkspace ws;
    ws.resize(m.config);
    std::vector<TokenId> context(k);
    std::vector<double> dlogits(v), dhidden(h), dpre(h), dinput(f);

    double loss = 0.0;
    for (const auto& pair : batch) {
        detail::mean_source_embedding(m, pair.source_tokens, ws.src_mean);
        const double inv_src = 1.0 / static_cast<double>(pair.source_tokens.size());

        for (std::size_t t = 0; t < pair.target_tokens.size(); ++t) {
            detail::build_input(m, ws.src_mean, pair.target_tokens, t, ws.input, context.data());
            detail::forward_from_input(m, ws);

            const auto y = static_cast<std::size_t>(pair.target_tokens[t]);
            if (eps == 0.0) {
                loss -= ws.logp[y] * inv_tokens;
            } else {
                double smooth_sum = 0.0;
                for (std::size_t o = 0; o < v; ++o) smooth_sum += ws.logp[o];
                loss -= ((1.0 - eps) * ws.logp[y] + eps / static_cast<double>(v) * smooth_sum) *
                        inv_tokens;
            }
            if (grads == nullptr) continue;

            // dL/dlogits = softmax - q, scaled by 1/total_tokens
            const double eps_v = eps / static_cast<double>(v);
            for (std::size_t o = 0; o < v; ++o)
                dlogits[o] = (std::exp(ws.logp[o]) - eps_v) * inv_tokens;
            dlogits[y] -= (1.0 - eps) * inv_tokens;

            for (std::size_t o = 0; o < v; ++o) {
                const double g = dlogits[o];
                if (g == 0.0) continue;
                double* wrow = grads->out_w.data() + o * h;
                for (std::size_t j = 0; j < h; ++j) wrow[j] += g * ws.hidden[j];
                grads->out_b[o] += g;
            }
            for (std::size_t j = 0; j < h; ++j) {
                double acc = 0.0;
                for (std::size_t o = 0; o < v; ++o) acc += m.out_w[o * h + j] * dlogits[o];
                dhidden[j] = acc;
                dpre[j] = acc * (1.0 - ws.hidden[j] * ws.hidden[j]);
            }
            for (std::size_t i = 0; i < h; ++i) {
                const double g = dpre[i];
                double* wrow = grads->hidden_w.data() + i * f;
                for (std::size_t j = 0; j < f; ++j) wrow[j] += g * ws.input[j];
                grads->hidden_b[i] += g;
            }
            for (std::size_t j = 0; j < f; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < h; ++i) acc += m.hidden_w[i * f + j] * dpre[i];
                dinput[j] = acc;
            }
            for (const auto sid : pair.source_tokens) {
                double* row = grads->src_embed.data() + static_cast<std::size_t>(sid) * e;
                for (std::size_t d = 0; d < e; ++d) row[d] += dinput[d] * inv_src;
            }
            for (std::size_t j = 1; j <= k; ++j) {
                double* row =
                    grads->tgt_embed.data() + static_cast<std::size_t>(context[j - 1]) * e;
                const double* src = dinput.data() + j * e;
                for (std::size_t d = 0; d < e; ++d) row[d] += src[d];
            }
        }
    }
    return loss;
}

inline double batch_loss(const ModelSnapshot& m, std::span<const TokenizedPair> batch) {
    return loss_and_gradients(m, batch, nullptr);
}

struct TrainReport {
    std::vector<double> epoch_mean_loss;
    std::vector<double> epoch_seconds;
    std::vector<std::int64_t> snapshot_epochs;
};

struct TrainResult {
    ModelSnapshot final_snapshot;
    std::map<std::int64_t, ModelSnapshot> snapshots; // epoch -> snapshot
    TrainReport report;
};

// Full-corpus training with per-epoch seeded shuffling, batched updates in a
// fixed order, and a snapshot after each requested epoch. Same (seed,
// config, corpus) reproduces bit-identical snapshots.
inline TrainResult train(const std::vector<TokenizedPair>& corpus, const ModelConfig& cfg,
                         const std::set<std::int64_t>& snapshot_epochs) {
    cfg.validate();
    if (corpus.empty()) throw UsageError("cannot train on an empty corpus");
    for (const auto e : snapshot_epochs)
        if (e < 1 || e > cfg.epochs) throw UsageError("snapshot epoch beyond training");

    TrainResult result;
    ModelSnapshot model = init_model(cfg);
    Gradients grads(cfg);
    Gradients adam_m(cfg), adam_v(cfg);
    std::int64_t adam_step = 0;

    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<TokenizedPair> batch;

    for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Prng shuffler = Prng::derive(cfg.seed, std::uint64_t{0x5affeu}, static_cast<std::uint64_t>(epoch));
        shuffler.shuffle(order);

        double loss_weighted = 0.0;
        std::int64_t tokens_seen = 0;
        const auto n = order.size();
        const auto bs = static_cast<std::size_t>(cfg.batch_size);
        std::int64_t batch_index = 0;

        for (std::size_t begin = 0; begin < n; begin += bs, ++batch_index) {
            const std::size_t end = std::min(begin + bs, n);
            batch.clear();
            for (std::size_t i = begin; i < end; ++i) batch.push_back(corpus[order[i]]);

            grads.zero();
            const double loss = loss_and_gradients(model, batch, &grads);
            if (!std::isfinite(loss))
                throw Error("diverged at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));

            std::int64_t batch_tokens = 0;
            for (const auto& p : batch) batch_tokens += static_cast<std::int64_t>(p.target_tokens.size());
            loss_weighted += loss * static_cast<double>(batch_tokens);
            tokens_seen += batch_tokens;

            if (cfg.optimizer == Optimizer::sgd) {
                auto params = model.tensors();
                auto gs = grads.tensors();
                for (std::size_t ti = 0; ti < params.size(); ++ti) {
                    auto& p = *params[ti];
                    const auto& g = *gs[ti];
                    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.learning_rate * g[i];
                }
            } else {
                ++adam_step;
                const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
                const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam_step));
                const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam_step));
                auto params = model.tensors();
                auto gs = grads.tensors();
                auto ms = adam_m.tensors();
                auto vs = adam_v.tensors();
                for (std::size_t ti = 0; ti < params.size(); ++ti) {
                    auto& p = *params[ti];
                    const auto& g = *gs[ti];
                    auto& mm = *ms[ti];
                    auto& vv = *vs[ti];
                    for (std::size_t i = 0; i < p.size(); ++i) {
                        mm[i] = b1 * mm[i] + (1.0 - b1) * g[i];
                        vv[i] = b2 * vv[i] + (1.0 - b2) * g[i] * g[i];
                        const double mhat = mm[i] / bc1;
                        const double vhat = vv[i] / bc2;
                        p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
                    }
                }
            }
        }

        const auto t1 = std::chrono::steady_clock::now();
        result.report.epoch_mean_loss.push_back(loss_weighted / static_cast<double>(tokens_seen));
        result.report.epoch_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());

        if (snapshot_epochs.count(epoch)) {
            ModelSnapshot snap = model;
            snap.epoch = epoch;
            result.snapshots.emplace(epoch, std::move(snap));
            result.report.snapshot_epochs.push_back(epoch);
        }
    }

    model.epoch = cfg.epochs;
    result.final_snapshot = std::move(model);
    return result;
}

// Greedy decoding: argmax token per step (ties to the lowest token id),
// stopping at EOS or after max_len emitted tokens. EOS is not emitted.
inline std::vector<TokenId> greedy_decode(const ModelSnapshot& m,
                                          std::span<const TokenId> source_tokens,
                                          std::int64_t max_len) {
    if (source_tokens.empty()) throw UsageError("empty source token sequence");
    for (const auto id : source_tokens)
        if (id < 0 || id >= m.config.src_vocab_size)
            throw UsageError("vocabulary mismatch: source token id " + std::to_string(id) +
                             " outside [0, " + std::to_string(m.config.src_vocab_size) + ")");

    ModelWorkspace ws;
    ws.resize(m.config);
    detail::mean_source_embedding(m, source_tokens, ws.src_mean);

    std::vector<TokenId> out;
    std::vector<TokenId> context(static_cast<std::size_t>(m.config.context_k));
    for (std::int64_t step = 0; step < max_len; ++step) {
        detail::build_input(m, ws.src_mean, out, out.size(), ws.input, context.data());
        detail::forward_from_input(m, ws);
        std::size_t best = 0;
        for (std::size_t o = 1; o < ws.logits.size(); ++o)
            if (ws.logits[o] > ws.logits[best]) best = o;
        if (static_cast<TokenId>(best) == Vocabulary::kEos) break;
        out.push_back(static_cast<TokenId>(best));
    }
    return out;
}

} // namespace catprune
