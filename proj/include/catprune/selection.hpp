#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "catprune/errors.hpp"
#include "catprune/prng.hpp"
#include "catprune/scoring.hpp"
#include "catprune/text.hpp"

namespace catprune {

enum class SelectionMethod { cat_diff, cat_var, random, ext_top, ext_band };

inline const char* method_name(SelectionMethod m) {
    switch (m) {
        case SelectionMethod::cat_diff: return "cat-diff";
        case SelectionMethod::cat_var: return "cat-var";
        case SelectionMethod::random: return "random";
        case SelectionMethod::ext_top: return "ext-top";
        case SelectionMethod::ext_band: return "ext-band";
    }
    return "?";
}

inline SelectionMethod parse_method(const std::string& s) {
    if (s == "cat-diff" || s == "cat_diff") return SelectionMethod::cat_diff;
    if (s == "cat-var" || s == "cat_var") return SelectionMethod::cat_var;
    if (s == "random") return SelectionMethod::random;
    if (s == "ext-top" || s == "ext_top") return SelectionMethod::ext_top;
    if (s == "ext-band" || s == "ext_band") return SelectionMethod::ext_band;
    throw UsageError("unknown selection method \"" + s + "\"");
}

struct SelectionSpec {
    SelectionMethod method = SelectionMethod::cat_diff;
    double keep_fraction = 0.5;
    std::int64_t ck_early = 1; // cat_diff
    std::int64_t ck_late = 5;  // cat_diff
    std::vector<std::int64_t> checkpoints = {1, 3, 5}; // cat_var
    std::uint64_t seed = 1;    // random
    ScoreDirection direction = ScoreDirection::higher_better; // ext methods

    void validate() const {
        if (!(keep_fraction > 0.0) || keep_fraction > 1.0)
            throw UsageError("keep fraction must lie in (0, 1]");
        if (method == SelectionMethod::cat_diff && ck_early == ck_late)
            throw UsageError("cat-diff needs two distinct checkpoints");
        if (method == SelectionMethod::cat_var && checkpoints.size() < 2)
            throw UsageError("cat-var needs at least 2 checkpoints");
    }
};

struct SelectionResult {
    SelectionSpec spec;
    std::size_t n = 0;
    std::int64_t k = 0;
    std::vector<std::int64_t> kept;  // ascending
    std::vector<double> keys;        // indexed by id; empty for random
};

// k = round_half_up(p * N), never below 1.
inline std::int64_t selection_size(std::size_t n, double keep_fraction) {
    const double scaled = keep_fraction * static_cast<double>(n);
    const auto k = static_cast<std::int64_t>(std::floor(scaled + 0.5));
    return std::max<std::int64_t>(1, std::min<std::int64_t>(k, static_cast<std::int64_t>(n)));
}

namespace detail {

// Ranks [0, N) by key with ascending-id tie-break.
inline std::vector<std::int64_t> rank_ids(const std::vector<double>& keys, bool descending) {
    std::vector<std::int64_t> order(keys.size());
    std::iota(order.begin(), order.end(), std::int64_t{0});
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        const double ka = keys[static_cast<std::size_t>(a)];
        const double kb = keys[static_cast<std::size_t>(b)];
        if (ka != kb) return descending ? ka > kb : ka < kb;
        return a < b;
    });
    return order;
}

inline SelectionResult take_top(const SelectionSpec& spec, std::vector<double> keys,
                                bool descending) {
    SelectionResult r;
    r.spec = spec;
    r.n = keys.size();
    r.k = selection_size(r.n, spec.keep_fraction);
    const auto order = rank_ids(keys, descending);
    r.kept.assign(order.begin(), order.begin() + r.k);
    std::sort(r.kept.begin(), r.kept.end());
    r.keys = std::move(keys);
    return r;
}

// Contiguous rank window of size k starting at floor((N-k)/2) over
// ascending-key ranks: the centered median band.
inline SelectionResult take_band(const SelectionSpec& spec, std::vector<double> keys) {
    SelectionResult r;
    r.spec = spec;
    r.n = keys.size();
    r.k = selection_size(r.n, spec.keep_fraction);
    const auto order = rank_ids(keys, false);
    const auto start = static_cast<std::size_t>((static_cast<std::int64_t>(r.n) - r.k) / 2);
    r.kept.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                  order.begin() + static_cast<std::ptrdiff_t>(start) + r.k);
    std::sort(r.kept.begin(), r.kept.end());
    r.keys = std::move(keys);
    return r;
}

} // namespace detail

// Per-example perplexity drop between an early and a later checkpoint:
// key[i] = ppl_early[i] - ppl_late[i]. Larger = learned sooner.
inline std::vector<double> delta_ppl(const ScoreMatrix& m, std::int64_t ck_early,
                                     std::int64_t ck_late) {
    const auto early = m.require_column(std::to_string(ck_early));
    const auto late = m.require_column(std::to_string(ck_late));
    std::vector<double> keys(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        keys[r] = m.cell(r, early).ppl - m.cell(r, late).ppl;
    return keys;
}

// Population variance of each example's perplexity across the chosen
// checkpoints (mean over that example's own row).
inline std::vector<double> ppl_variance(const ScoreMatrix& m,
                                        const std::vector<std::int64_t>& checkpoints) {
    if (checkpoints.size() < 2) throw UsageError("variance needs at least 2 checkpoints");
    std::vector<std::size_t> cols;
    for (const auto ck : checkpoints) cols.push_back(m.require_column(std::to_string(ck)));
    std::vector<double> keys(m.rows());
    const double inv = 1.0 / static_cast<double>(cols.size());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double mean = 0.0;
        for (const auto c : cols) mean += m.cell(r, c).ppl;
        mean *= inv;
        double var = 0.0;
        for (const auto c : cols) {
            const double d = m.cell(r, c).ppl - mean;
            var += d * d;
        }
        keys[r] = var * inv;
    }
    return keys;
}

// Keep the k highest perplexity drops (descending key, ascending id on ties).
inline SelectionResult cat_diff_select(const ScoreMatrix& m, const SelectionSpec& spec) {
    spec.validate();
    return detail::take_top(spec, delta_ppl(m, spec.ck_early, spec.ck_late), true);
}

// Keep the centered band of cross-checkpoint variance ranks.
inline SelectionResult cat_var_select(const ScoreMatrix& m, const SelectionSpec& spec) {
    spec.validate();
    return detail::take_band(spec, ppl_variance(m, spec.checkpoints));
}

// Seeded Fisher-Yates shuffle of [0, N); keep the first k, in ascending
// order. The generator is xoshiro256** seeded via splitmix64, so the same
// seed selects the same ids on every platform.
inline SelectionResult random_select(std::size_t n, const SelectionSpec& spec) {
    spec.validate();
    if (n == 0) throw UsageError("cannot select from an empty corpus");
    SelectionResult r;
    r.spec = spec;
    r.n = n;
    r.k = selection_size(n, spec.keep_fraction);
    std::vector<std::int64_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::int64_t{0});
    Prng rng(spec.seed);
    rng.shuffle(ids);
    r.kept.assign(ids.begin(), ids.begin() + r.k);
    std::sort(r.kept.begin(), r.kept.end());
    return r;
}

// ext_top keeps the k best scores per the direction flag; ext_band keeps the
// centered median band (for score families where both tails are suspect).
inline SelectionResult ext_select(const ExternalScoreFile& scores, const SelectionSpec& spec) {
    spec.validate();
    if (scores.scores.empty()) throw UsageError("cannot select from an empty score file");
    if (spec.method == SelectionMethod::ext_band || spec.direction == ScoreDirection::band)
        return detail::take_band(spec, scores.scores);
    if (spec.method != SelectionMethod::ext_top)
        throw UsageError("ext_select requires an ext-top or ext-band spec");
    return detail::take_top(spec, scores.scores,
                            spec.direction == ScoreDirection::higher_better);
}

// Kept-id file: one ascending id per line.
inline void write_selection(const SelectionResult& r, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    for (const auto id : r.kept) os << id << '\n';
    os.flush();
    if (!os) throw Error("write failed for " + path);
}

inline std::vector<std::int64_t> read_indices(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);
    std::vector<std::int64_t> ids;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        ids.push_back(parse_int_strict(std::string(trim(line)),
                                       path + ": line " + std::to_string(line_no)));
    }
    return ids;
}

inline void write_keys(const SelectionResult& r, const std::string& path) {
    if (r.keys.empty()) throw UsageError("method " + std::string(method_name(r.spec.method)) +
                                         " has no per-id keys to emit");
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    os << "id\tkey\n";
    for (std::size_t i = 0; i < r.keys.size(); ++i)
        os << i << '\t' << format_g17(r.keys[i]) << '\n';
    os.flush();
    if (!os) throw Error("write failed for " + path);
}

} // namespace catprune
