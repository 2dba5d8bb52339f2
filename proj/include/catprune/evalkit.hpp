#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "catprune/corpus.hpp"
#include "catprune/errors.hpp"
#include "catprune/prng.hpp"
#include "catprune/text.hpp"

namespace catprune {

// ---------------------------------------------------------------- noise ---

enum class NoiseFlag { clean, misaligned, copied, truncated };

inline const char* noise_flag_name(NoiseFlag f) {
    switch (f) {
        case NoiseFlag::clean: return "clean";
        case NoiseFlag::misaligned: return "misaligned";
        case NoiseFlag::copied: return "copied";
        case NoiseFlag::truncated: return "truncated";
    }
    return "?";
}

inline NoiseFlag parse_noise_flag(const std::string& s) {
    if (s == "clean") return NoiseFlag::clean;
    if (s == "misaligned") return NoiseFlag::misaligned;
    if (s == "copied") return NoiseFlag::copied;
    if (s == "truncated") return NoiseFlag::truncated;
    throw UsageError("unknown noise flag \"" + s + "\"");
}

struct NoiseFractions {
    double misaligned = 0.0;
    double copied = 0.0;
    double truncated = 0.0;

    void validate() const {
        for (const double f : {misaligned, copied, truncated})
            if (!(f >= 0.0) || f > 1.0) throw UsageError("noise fractions must lie in [0, 1]");
        if (misaligned + copied + truncated > 1.0 + 1e-12)
            throw UsageError("noise fractions must sum to at most 1");
    }
};

struct NoiseManifest {
    std::uint64_t seed = 0;
    NoiseFractions fractions;
    std::vector<NoiseFlag> flags; // indexed by id, covers all ids

    std::int64_t count(NoiseFlag f) const {
        std::int64_t n = 0;
        for (const auto x : flags) n += x == f ? 1 : 0;
        return n;
    }
    std::int64_t noisy_count() const {
        return static_cast<std::int64_t>(flags.size()) - count(NoiseFlag::clean);
    }
};

struct NoiseResult {
    std::vector<SentencePair> pairs;
    NoiseManifest manifest;
};

inline std::int64_t round_half_up_count(double fraction, std::size_t n) {
    return static_cast<std::int64_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
}

// Misaligned targets are permuted by a Sattolo cycle over the flagged subset
// (a single cycle, hence a derangement: no flagged pair keeps its own
// target index). Copied pairs get target := source; truncated pairs keep
// the first ceil(T/2) whitespace tokens. Clean pairs are untouched bytes.
inline NoiseResult inject_noise(const std::vector<SentencePair>& pairs, NoiseFractions fractions,
                                std::uint64_t seed) {
    fractions.validate();
    if (pairs.empty()) throw UsageError("cannot inject noise into an empty corpus");
    const std::size_t n = pairs.size();

    const std::int64_t n_mis = round_half_up_count(fractions.misaligned, n);
    const std::int64_t n_cop = round_half_up_count(fractions.copied, n);
    const std::int64_t n_tru = round_half_up_count(fractions.truncated, n);
    if (n_mis + n_cop + n_tru > static_cast<std::int64_t>(n))
        throw UsageError("rounded noise counts exceed corpus size");
    if (n_mis == 1) throw UsageError("cannot misalign a single pair (derangement impossible)");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Prng rng = Prng::derive(seed, std::uint64_t{0x4015Eu});
    rng.shuffle(order);

    NoiseResult result;
    result.pairs = pairs;
    result.manifest.seed = seed;
    result.manifest.fractions = fractions;
    result.manifest.flags.assign(n, NoiseFlag::clean);

    std::vector<std::size_t> mis(order.begin(), order.begin() + n_mis);
    std::sort(mis.begin(), mis.end());
    if (!mis.empty()) {
        std::vector<std::size_t> donors = mis;
        rng.sattolo_cycle(donors);
        std::vector<std::string> originals;
        originals.reserve(mis.size());
        for (const auto i : mis) originals.push_back(pairs[i].target);
        std::unordered_map<std::size_t, std::size_t> slot;
        for (std::size_t j = 0; j < mis.size(); ++j) slot[mis[j]] = j;
        for (std::size_t j = 0; j < mis.size(); ++j) {
            result.pairs[mis[j]].target = originals[slot.at(donors[j])];
            result.manifest.flags[mis[j]] = NoiseFlag::misaligned;
        }
    }
    for (std::int64_t j = 0; j < n_cop; ++j) {
        const std::size_t i = order[static_cast<std::size_t>(n_mis + j)];
        result.pairs[i].target = result.pairs[i].source;
        result.manifest.flags[i] = NoiseFlag::copied;
    }
    for (std::int64_t j = 0; j < n_tru; ++j) {
        const std::size_t i = order[static_cast<std::size_t>(n_mis + n_cop + j)];
        const auto toks = split_ws(pairs[i].target);
        const std::size_t keep = (toks.size() + 1) / 2;
        std::string cut;
        for (std::size_t t = 0; t < keep; ++t) {
            if (t) cut += ' ';
            cut += toks[t];
        }
        result.pairs[i].target = cut;
        result.manifest.flags[i] = NoiseFlag::truncated;
    }
    return result;
}

inline nlohmann::json noise_manifest_to_json(const NoiseManifest& m) {
    nlohmann::json flags = nlohmann::json::array();
    for (const auto f : m.flags) flags.push_back(noise_flag_name(f));
    return {{"seed", m.seed},
            {"fractions",
             {{"misaligned", m.fractions.misaligned},
              {"copied", m.fractions.copied},
              {"truncated", m.fractions.truncated}}},
            {"counts",
             {{"clean", m.count(NoiseFlag::clean)},
              {"misaligned", m.count(NoiseFlag::misaligned)},
              {"copied", m.count(NoiseFlag::copied)},
              {"truncated", m.count(NoiseFlag::truncated)}}},
            {"n", m.flags.size()},
            {"flags", flags}};
}

inline void write_noise_manifest(const NoiseManifest& m, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    os << noise_manifest_to_json(m).dump(2) << '\n';
    os.flush();
    if (!os) throw Error("write failed for " + path);
}

inline NoiseManifest read_noise_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(path + ": bad noise manifest: " + e.what());
    }
    NoiseManifest m;
    try {
        m.seed = j.at("seed").get<std::uint64_t>();
        m.fractions.misaligned = j.at("fractions").at("misaligned").get<double>();
        m.fractions.copied = j.at("fractions").at("copied").get<double>();
        m.fractions.truncated = j.at("fractions").at("truncated").get<double>();
        for (const auto& f : j.at("flags"))
            m.flags.push_back(parse_noise_flag(f.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(path + ": bad noise manifest: " + e.what());
    }
    return m;
}

// ------------------------------------------------------------ retention ---

struct TypeRetention {
    std::int64_t total = 0;
    std::int64_t removed = 0;
    double recall = 1.0; // 1.0 when nothing of this type was injected
};

struct RetentionMetrics {
    double clean_precision = 0.0;
    double noise_recall = 1.0;
    std::map<std::string, TypeRetention> per_type;
};

// clean_precision = |kept and clean| / |kept|;
// noise_recall = |removed and noisy| / |noisy| (1.0 when nothing is noisy).
inline RetentionMetrics retention_metrics(const std::vector<std::int64_t>& kept,
                                          const NoiseManifest& manifest) {
    if (kept.empty()) throw UsageError("empty selection");
    const auto n = static_cast<std::int64_t>(manifest.flags.size());
    std::vector<bool> is_kept(static_cast<std::size_t>(n), false);
    for (const auto id : kept) {
        if (id < 0 || id >= n)
            throw UsageError("kept id " + std::to_string(id) + " outside manifest of size " +
                             std::to_string(n));
        is_kept[static_cast<std::size_t>(id)] = true;
    }

    RetentionMetrics r;
    std::int64_t kept_clean = 0, noisy = 0, removed_noisy = 0;
    for (const auto type : {NoiseFlag::misaligned, NoiseFlag::copied, NoiseFlag::truncated})
        r.per_type[noise_flag_name(type)] = TypeRetention{};

    for (std::int64_t id = 0; id < n; ++id) {
        const NoiseFlag f = manifest.flags[static_cast<std::size_t>(id)];
        const bool k = is_kept[static_cast<std::size_t>(id)];
        if (f == NoiseFlag::clean) {
            if (k) ++kept_clean;
            continue;
        }
        ++noisy;
        auto& t = r.per_type[noise_flag_name(f)];
        ++t.total;
        if (!k) {
            ++removed_noisy;
            ++t.removed;
        }
    }
    r.clean_precision = static_cast<double>(kept_clean) / static_cast<double>(kept.size());
    r.noise_recall =
        noisy == 0 ? 1.0 : static_cast<double>(removed_noisy) / static_cast<double>(noisy);
    for (auto& [name, t] : r.per_type) {
        (void)name;
        t.recall = t.total == 0 ? 1.0 : static_cast<double>(t.removed) / static_cast<double>(t.total);
    }
    return r;
}

inline nlohmann::json retention_to_json(const RetentionMetrics& r) {
    nlohmann::json per_type;
    for (const auto& [name, t] : r.per_type)
        per_type[name] = {{"total", t.total}, {"removed", t.removed}, {"recall", t.recall}};
    return {{"clean_precision", r.clean_precision},
            {"noise_recall", r.noise_recall},
            {"per_type", per_type}};
}

// ----------------------------------------------------------------- BLEU ---

inline constexpr int kBleuMaxOrder = 4;

// Per-segment sufficient statistics, whitespace tokens:
// [correct_1..correct_4, total_1..total_4, hyp_len, ref_len].
using BleuStats = std::array<std::int64_t, 2 * kBleuMaxOrder + 2>;

namespace detail {

inline void count_ngrams(const std::vector<std::string_view>& toks, int n,
                         std::map<std::string, std::int64_t>& out) {
    if (static_cast<int>(toks.size()) < n) return;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i) {
        std::string key;
        for (int j = 0; j < n; ++j) {
            if (j) key += '\x1f';
            key += toks[i + static_cast<std::size_t>(j)];
        }
        ++out[key];
    }
}

} // namespace detail

inline BleuStats bleu_segment_stats(const std::string& hyp, const std::string& ref) {
    BleuStats s{};
    const auto hyp_toks = split_ws(hyp);
    const auto ref_toks = split_ws(ref);
    s[2 * kBleuMaxOrder] = static_cast<std::int64_t>(hyp_toks.size());
    s[2 * kBleuMaxOrder + 1] = static_cast<std::int64_t>(ref_toks.size());
    for (int n = 1; n <= kBleuMaxOrder; ++n) {
        std::map<std::string, std::int64_t> hyp_counts, ref_counts;
        detail::count_ngrams(hyp_toks, n, hyp_counts);
        detail::count_ngrams(ref_toks, n, ref_counts);
        std::int64_t correct = 0, total = 0;
        for (const auto& [gram, count] : hyp_counts) {
            total += count;
            const auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) correct += std::min(count, it->second);
        }
        s[static_cast<std::size_t>(n - 1)] = correct;
        s[static_cast<std::size_t>(kBleuMaxOrder + n - 1)] = total;
    }
    return s;
}

struct BleuScore {
    double value = 0.0;
    std::array<double, kBleuMaxOrder> precisions{}; // percentages, post-smoothing
    double brevity_penalty = 1.0;
    std::int64_t hyp_len = 0;
    std::int64_t ref_len = 0;
    std::array<std::int64_t, kBleuMaxOrder> correct{};
    std::array<std::int64_t, kBleuMaxOrder> total{};

    // value re-derived from the breakdown; equal to `value` within 1e-9
    double recombined() const {
        for (const double p : precisions)
            if (p == 0.0) return 0.0;
        double log_sum = 0.0;
        for (const double p : precisions) log_sum += std::log(p / 100.0);
        return 100.0 * brevity_penalty * std::exp(log_sum / kBleuMaxOrder);
    }
};

// Corpus BLEU over summed statistics: exponential smoothing replaces the
// k-th zero numerator with 1/2^k of its denominator; any empty denominator
// zeroes the score; brevity penalty applies when the hypothesis side is
// shorter overall.
inline BleuScore bleu_from_stats(const BleuStats& agg) {
    BleuScore b;
    b.hyp_len = agg[2 * kBleuMaxOrder];
    b.ref_len = agg[2 * kBleuMaxOrder + 1];
    double smooth = 1.0;
    for (int n = 1; n <= kBleuMaxOrder; ++n) {
        const std::int64_t correct = agg[static_cast<std::size_t>(n - 1)];
        const std::int64_t total = agg[static_cast<std::size_t>(kBleuMaxOrder + n - 1)];
        b.correct[static_cast<std::size_t>(n - 1)] = correct;
        b.total[static_cast<std::size_t>(n - 1)] = total;
        double p = 0.0;
        if (total > 0) {
            if (correct > 0) {
                p = 100.0 * static_cast<double>(correct) / static_cast<double>(total);
            } else {
                smooth *= 2.0;
                p = 100.0 / (smooth * static_cast<double>(total));
            }
        }
        b.precisions[static_cast<std::size_t>(n - 1)] = p;
    }
    if (b.hyp_len < b.ref_len)
        b.brevity_penalty =
            b.hyp_len > 0
                ? std::exp(1.0 - static_cast<double>(b.ref_len) / static_cast<double>(b.hyp_len))
                : 0.0;
    b.value = b.recombined();
    return b;
}

inline std::vector<BleuStats> bleu_corpus_stats(const std::vector<std::string>& hyps,
                                                const std::vector<std::string>& refs) {
    if (hyps.size() != refs.size())
        throw UsageError("hypothesis count " + std::to_string(hyps.size()) +
                         " does not match reference count " + std::to_string(refs.size()));
    if (hyps.empty()) throw UsageError("cannot score an empty segment list");
    std::vector<BleuStats> stats(hyps.size());
    for (std::size_t i = 0; i < hyps.size(); ++i) stats[i] = bleu_segment_stats(hyps[i], refs[i]);
    return stats;
}

inline BleuScore bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
    const auto stats = bleu_corpus_stats(hyps, refs);
    BleuStats agg{};
    for (const auto& s : stats)
        for (std::size_t i = 0; i < agg.size(); ++i) agg[i] += s[i];
    return bleu_from_stats(agg);
}

// --------------------------------------------------------------- chrF++ ---

inline constexpr int kChrfCharOrder = 6;
inline constexpr int kChrfWordOrder = 2;
inline constexpr int kChrfOrders = kChrfCharOrder + kChrfWordOrder;
inline constexpr double kChrfBeta = 2.0;

// Per order: [hyp_ngrams, ref_ngrams, matched]; char orders 1..6 over the
// whitespace-stripped segment, then word orders 1..2 over whitespace tokens.
using ChrfStats = std::array<std::int64_t, 3 * kChrfOrders>;

namespace detail {

inline void count_char_ngrams(const std::string& stripped, int n,
                              std::map<std::string, std::int64_t>& out) {
    if (static_cast<int>(stripped.size()) < n) return;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= stripped.size(); ++i)
        ++out[stripped.substr(i, static_cast<std::size_t>(n))];
}

inline void accumulate_order(const std::map<std::string, std::int64_t>& hyp,
                             const std::map<std::string, std::int64_t>& ref, std::int64_t* slot) {
    std::int64_t n_hyp = 0, n_ref = 0, match = 0;
    for (const auto& [g, c] : hyp) {
        (void)g;
        n_hyp += c;
    }
    for (const auto& [g, c] : ref) {
        (void)g;
        n_ref += c;
    }
    for (const auto& [g, c] : hyp) {
        const auto it = ref.find(g);
        if (it != ref.end()) match += std::min(c, it->second);
    }
    slot[0] += n_hyp;
    slot[1] += n_ref;
    slot[2] += match;
}

} // namespace detail

// Char n-grams are taken over the segment with ALL whitespace removed; word
// n-grams over plain whitespace tokens (no punctuation splitting; divergence
// from tokenizer-equipped implementations is documented).
inline ChrfStats chrf_segment_stats(const std::string& hyp, const std::string& ref) {
    ChrfStats s{};
    std::string hyp_stripped, ref_stripped;
    for (const char c : hyp)
        if (!is_ascii_space(c)) hyp_stripped += c;
    for (const char c : ref)
        if (!is_ascii_space(c)) ref_stripped += c;

    for (int n = 1; n <= kChrfCharOrder; ++n) {
        std::map<std::string, std::int64_t> h, r;
        detail::count_char_ngrams(hyp_stripped, n, h);
        detail::count_char_ngrams(ref_stripped, n, r);
        detail::accumulate_order(h, r, s.data() + 3 * (n - 1));
    }
    const auto hyp_toks = split_ws(hyp);
    const auto ref_toks = split_ws(ref);
    for (int n = 1; n <= kChrfWordOrder; ++n) {
        std::map<std::string, std::int64_t> h, r;
        detail::count_ngrams(hyp_toks, n, h);
        detail::count_ngrams(ref_toks, n, r);
        detail::accumulate_order(h, r, s.data() + 3 * (kChrfCharOrder + n - 1));
    }
    return s;
}

struct ChrfScore {
    double value = 0.0;
    std::array<double, kChrfOrders> f_scores{}; // 0..1 per order
    std::array<bool, kChrfOrders> active{};     // both sides had n-grams
    double beta = kChrfBeta;

    double recombined() const {
        double sum = 0.0;
        int orders = 0;
        for (int i = 0; i < kChrfOrders; ++i) {
            if (!active[static_cast<std::size_t>(i)]) continue;
            sum += f_scores[static_cast<std::size_t>(i)];
            ++orders;
        }
        return orders == 0 ? 0.0 : 100.0 * sum / static_cast<double>(orders);
    }
};

// Per-order F_beta from corpus-summed counts, averaged over the orders where
// both hypothesis and reference produced n-grams.
inline ChrfScore chrf_from_stats(const ChrfStats& agg) {
    ChrfScore c;
    const double factor = kChrfBeta * kChrfBeta;
    for (int i = 0; i < kChrfOrders; ++i) {
        const std::int64_t n_hyp = agg[static_cast<std::size_t>(3 * i)];
        const std::int64_t n_ref = agg[static_cast<std::size_t>(3 * i + 1)];
        const std::int64_t match = agg[static_cast<std::size_t>(3 * i + 2)];
        if (n_hyp <= 0 || n_ref <= 0) continue;
        c.active[static_cast<std::size_t>(i)] = true;
        if (match > 0) {
            const double prec = static_cast<double>(match) / static_cast<double>(n_hyp);
            const double rec = static_cast<double>(match) / static_cast<double>(n_ref);
            c.f_scores[static_cast<std::size_t>(i)] =
                (1.0 + factor) * prec * rec / (factor * prec + rec);
        }
    }
    c.value = c.recombined();
    return c;
}

inline std::vector<ChrfStats> chrf_corpus_stats(const std::vector<std::string>& hyps,
                                                const std::vector<std::string>& refs) {
    if (hyps.size() != refs.size())
        throw UsageError("hypothesis count " + std::to_string(hyps.size()) +
                         " does not match reference count " + std::to_string(refs.size()));
    if (hyps.empty()) throw UsageError("cannot score an empty segment list");
    std::vector<ChrfStats> stats(hyps.size());
    for (std::size_t i = 0; i < hyps.size(); ++i) stats[i] = chrf_segment_stats(hyps[i], refs[i]);
    return stats;
}

inline ChrfScore chrf_pp(const std::vector<std::string>& hyps,
                         const std::vector<std::string>& refs) {
    const auto stats = chrf_corpus_stats(hyps, refs);
    ChrfStats agg{};
    for (const auto& s : stats)
        for (std::size_t i = 0; i < agg.size(); ++i) agg[i] += s[i];
    return chrf_from_stats(agg);
}

inline nlohmann::json bleu_to_json(const BleuScore& b) {
    return {{"metric", "bleu"},
            {"value", b.value},
            {"precisions", b.precisions},
            {"brevity_penalty", b.brevity_penalty},
            {"hyp_len", b.hyp_len},
            {"ref_len", b.ref_len},
            {"correct", b.correct},
            {"total", b.total},
            {"tokenization", "whitespace"},
            {"smoothing", "exp"}};
}

inline nlohmann::json chrf_to_json(const ChrfScore& c) {
    return {{"metric", "chrfpp"},
            {"value", c.value},
            {"char_order", kChrfCharOrder},
            {"word_order", kChrfWordOrder},
            {"beta", c.beta},
            {"f_scores", c.f_scores},
            {"active_orders", c.active}};
}

// ------------------------------------------------------------ bootstrap ---

enum class MetricKind { bleu, chrfpp };

inline MetricKind parse_metric(const std::string& s) {
    if (s == "bleu") return MetricKind::bleu;
    if (s == "chrfpp" || s == "chrf++") return MetricKind::chrfpp;
    throw UsageError("unknown metric \"" + s + "\"");
}

inline double metric_value(MetricKind kind, const std::vector<std::string>& hyps,
                           const std::vector<std::string>& refs) {
    return kind == MetricKind::bleu ? bleu(hyps, refs).value : chrf_pp(hyps, refs).value;
}

struct BootstrapResult {
    double p_value = 1.0;   // fraction of resamples with A <= B (ties count against A)
    double win_rate = 0.0;  // fraction with A strictly > B
    double tie_rate = 0.0;
    std::int64_t resamples = 0;
    double score_a = 0.0; // full-corpus scores, not resampled
    double score_b = 0.0;
};

// Paired bootstrap: per resample, draw segment indices with replacement from
// a stream derived from (seed, resample index) and compare the two systems
// on the recombined corpus metric. Per-segment statistics are precomputed,
// so each resample is pure integer accumulation.
inline BootstrapResult paired_bootstrap(MetricKind metric, const std::vector<std::string>& hyp_a,
                                        const std::vector<std::string>& hyp_b,
                                        const std::vector<std::string>& refs,
                                        std::int64_t resamples, std::uint64_t seed) {
    if (resamples < 1) throw UsageError("bootstrap needs at least 1 resample");
    if (hyp_a.size() != refs.size() || hyp_b.size() != refs.size())
        throw UsageError("bootstrap requires aligned segment counts");
    if (refs.empty()) throw UsageError("cannot score an empty segment list");

    BootstrapResult out;
    out.resamples = resamples;

    const std::size_t n = refs.size();
    std::int64_t wins = 0, ties = 0;

    if (metric == MetricKind::bleu) {
        const auto stats_a = bleu_corpus_stats(hyp_a, refs);
        const auto stats_b = bleu_corpus_stats(hyp_b, refs);
        BleuStats full_a{}, full_b{};
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < full_a.size(); ++j) {
                full_a[j] += stats_a[i][j];
                full_b[j] += stats_b[i][j];
            }
        out.score_a = bleu_from_stats(full_a).value;
        out.score_b = bleu_from_stats(full_b).value;
        for (std::int64_t r = 0; r < resamples; ++r) {
            Prng rng = Prng::derive(seed, std::uint64_t{0xB007u}, static_cast<std::uint64_t>(r));
            BleuStats agg_a{}, agg_b{};
            for (std::size_t i = 0; i < n; ++i) {
                const auto idx = static_cast<std::size_t>(rng.next_below(n));
                for (std::size_t j = 0; j < agg_a.size(); ++j) {
                    agg_a[j] += stats_a[idx][j];
                    agg_b[j] += stats_b[idx][j];
                }
            }
            const double a = bleu_from_stats(agg_a).value;
            const double b = bleu_from_stats(agg_b).value;
            if (a > b)
                ++wins;
            else if (a == b)
                ++ties;
        }
    } else {
        const auto stats_a = chrf_corpus_stats(hyp_a, refs);
        const auto stats_b = chrf_corpus_stats(hyp_b, refs);
        ChrfStats full_a{}, full_b{};
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < full_a.size(); ++j) {
                full_a[j] += stats_a[i][j];
                full_b[j] += stats_b[i][j];
            }
        out.score_a = chrf_from_stats(full_a).value;
        out.score_b = chrf_from_stats(full_b).value;
        for (std::int64_t r = 0; r < resamples; ++r) {
            Prng rng = Prng::derive(seed, std::uint64_t{0xB007u}, static_cast<std::uint64_t>(r));
            ChrfStats agg_a{}, agg_b{};
            for (std::size_t i = 0; i < n; ++i) {
                const auto idx = static_cast<std::size_t>(rng.next_below(n));
                for (std::size_t j = 0; j < agg_a.size(); ++j) {
                    agg_a[j] += stats_a[idx][j];
                    agg_b[j] += stats_b[idx][j];
                }
            }
            const double a = chrf_from_stats(agg_a).value;
            const double b = chrf_from_stats(agg_b).value;
            if (a > b)
                ++wins;
            else if (a == b)
                ++ties;
        }
    }

    out.win_rate = static_cast<double>(wins) / static_cast<double>(resamples);
    out.tie_rate = static_cast<double>(ties) / static_cast<double>(resamples);
    out.p_value = static_cast<double>(resamples - wins) / static_cast<double>(resamples);
    return out;
}

inline nlohmann::json bootstrap_to_json(const BootstrapResult& r) {
    return {{"p_value", r.p_value},     {"win_rate", r.win_rate}, {"tie_rate", r.tie_rate},
            {"resamples", r.resamples}, {"score_a", r.score_a},   {"score_b", r.score_b}};
}

} // namespace catprune
