#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "catprune/corpus.hpp"
#include "catprune/errors.hpp"
#include "catprune/scoring.hpp"
#include "catprune/text.hpp"
#include "catprune/vocab.hpp"

namespace catprune {

struct LengthStats {
    std::int64_t n = 0;
    double mean = 0.0;
    double median = 0.0;
    double stddev = 0.0; // population
    std::int64_t min = 0;
    std::int64_t max = 0;
    std::int64_t bin_width = 1;
    std::vector<std::pair<std::int64_t, std::int64_t>> histogram; // bin_lo -> count
};

struct LexicalStats {
    std::int64_t total_tokens = 0;
    std::int64_t type_count = 0;
    std::int64_t rare_word_count = 0; // types with full-corpus frequency <= threshold
    std::int64_t rare_threshold = 2;
    double mean_word_frequency = 0.0; // full-corpus frequency averaged over occurrences
};

struct SideReport {
    LengthStats lengths;
    LexicalStats lexical;
};

struct CorpusReport {
    std::int64_t n_pairs = 0;
    SideReport source;
    SideReport target;
};

inline constexpr std::int64_t kDefaultRareThreshold = 2;

using FrequencyTable = std::map<std::string, std::int64_t>;

inline FrequencyTable build_frequency_table(const std::vector<SentencePair>& pairs, Side side) {
    FrequencyTable table;
    for (const auto& p : pairs)
        for (const auto& tok : split_ws(side == Side::source ? p.source : p.target))
            ++table[std::string(tok)];
    return table;
}

inline std::vector<std::int64_t> token_lengths(const std::vector<SentencePair>& pairs, Side side) {
    std::vector<std::int64_t> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs)
        out.push_back(static_cast<std::int64_t>(
            split_ws(side == Side::source ? p.source : p.target).size()));
    return out;
}

// Whitespace-token length statistics; integer sums keep the results
// independent of accumulation order.
inline LengthStats length_stats(const std::vector<std::int64_t>& lengths,
                                std::int64_t bin_width = 1) {
    if (lengths.empty()) throw UsageError("empty selection");
    if (bin_width < 1) throw UsageError("histogram bin width must be >= 1");

    LengthStats s;
    s.n = static_cast<std::int64_t>(lengths.size());
    s.bin_width = bin_width;

    std::int64_t sum = 0;
    s.min = lengths[0];
    s.max = lengths[0];
    for (const auto len : lengths) {
        sum += len;
        s.min = std::min(s.min, len);
        s.max = std::max(s.max, len);
    }
    s.mean = static_cast<double>(sum) / static_cast<double>(s.n);

    // population variance via integer moments: E[x^2] - E[x]^2 scaled by n^2
    std::int64_t sum_sq = 0;
    for (const auto len : lengths) sum_sq += len * len;
    const double var =
        (static_cast<double>(sum_sq) * static_cast<double>(s.n) -
         static_cast<double>(sum) * static_cast<double>(sum)) /
        (static_cast<double>(s.n) * static_cast<double>(s.n));
    s.stddev = std::sqrt(std::max(0.0, var));

    std::vector<std::int64_t> sorted = lengths;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    s.median = sorted.size() % 2 == 1
                   ? static_cast<double>(sorted[mid])
                   : (static_cast<double>(sorted[mid - 1]) + static_cast<double>(sorted[mid])) / 2.0;

    std::map<std::int64_t, std::int64_t> bins;
    for (const auto len : lengths) ++bins[(len / bin_width) * bin_width];
    s.histogram.assign(bins.begin(), bins.end());
    return s;
}

// Lexical profile of a subset against the FULL corpus frequency table: which
// words the selector prefers, not how often they recur inside the subset.
inline LexicalStats lexical_stats(const std::vector<SentencePair>& subset, Side side,
                                  const FrequencyTable& full_corpus_freqs,
                                  std::int64_t rare_threshold = kDefaultRareThreshold) {
    if (subset.empty()) throw UsageError("empty selection");
    if (rare_threshold < 0) throw UsageError("rare threshold must be >= 0");

    LexicalStats s;
    s.rare_threshold = rare_threshold;
    std::map<std::string, std::int64_t> seen;
    std::int64_t freq_sum = 0;
    for (const auto& p : subset) {
        for (const auto tok : split_ws(side == Side::source ? p.source : p.target)) {
            const auto it = full_corpus_freqs.find(std::string(tok));
            if (it == full_corpus_freqs.end())
                throw Error("token \"" + std::string(tok) + "\" absent from frequency table");
            ++s.total_tokens;
            freq_sum += it->second;
            ++seen[it->first];
        }
    }
    s.type_count = static_cast<std::int64_t>(seen.size());
    for (const auto& [tok, n] : seen) {
        (void)n;
        if (full_corpus_freqs.at(tok) <= rare_threshold) ++s.rare_word_count;
    }
    s.mean_word_frequency = static_cast<double>(freq_sum) / static_cast<double>(s.total_tokens);
    return s;
}

inline CorpusReport corpus_report(const std::vector<SentencePair>& subset,
                                  const FrequencyTable& src_freqs,
                                  const FrequencyTable& tgt_freqs, std::int64_t bin_width = 1,
                                  std::int64_t rare_threshold = kDefaultRareThreshold) {
    CorpusReport r;
    r.n_pairs = static_cast<std::int64_t>(subset.size());
    r.source.lengths = length_stats(token_lengths(subset, Side::source), bin_width);
    r.source.lexical = lexical_stats(subset, Side::source, src_freqs, rare_threshold);
    r.target.lengths = length_stats(token_lengths(subset, Side::target), bin_width);
    r.target.lexical = lexical_stats(subset, Side::target, tgt_freqs, rare_threshold);
    return r;
}

inline nlohmann::json length_stats_to_json(const LengthStats& s) {
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& [lo, count] : s.histogram) hist.push_back({{"bin_lo", lo}, {"count", count}});
    return {{"n", s.n},         {"mean", s.mean},           {"median", s.median},
            {"stddev", s.stddev}, {"min", s.min},           {"max", s.max},
            {"bin_width", s.bin_width}, {"histogram", hist}};
}

inline nlohmann::json lexical_stats_to_json(const LexicalStats& s) {
    return {{"total_tokens", s.total_tokens},
            {"type_count", s.type_count},
            {"rare_word_count", s.rare_word_count},
            {"rare_threshold", s.rare_threshold},
            {"mean_word_frequency", s.mean_word_frequency}};
}

inline nlohmann::json report_to_json(const CorpusReport& r) {
    return {{"n_pairs", r.n_pairs},
            {"tokenization", "whitespace"},
            {"mean_word_frequency_basis", "full-corpus frequencies"},
            {"source",
             {{"lengths", length_stats_to_json(r.source.lengths)},
              {"lexical", lexical_stats_to_json(r.source.lexical)}}},
            {"target",
             {{"lengths", length_stats_to_json(r.target.lengths)},
              {"lexical", lexical_stats_to_json(r.target.lexical)}}}};
}

// Plot-ready join: per id, whitespace lengths of both sides plus every score
// column (or a single selection key column).
inline void write_score_length_join(const ScoreMatrix& m, const std::vector<SentencePair>& pairs,
                                    const std::string& path) {
    if (m.rows() != pairs.size())
        throw UsageError("score matrix covers " + std::to_string(m.rows()) +
                         " ids but corpus has " + std::to_string(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i)
        if (m.ids[i] != pairs[i].id)
            throw UsageError("score matrix id " + std::to_string(m.ids[i]) +
                             " does not match corpus id " + std::to_string(pairs[i].id));

    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    os << "id\tsource_len\ttarget_len";
    for (const auto& l : m.labels) {
        const auto stem = detail::column_stem(l);
        os << '\t' << "nll_" << stem << '\t' << "ppl_" << stem;
    }
    os << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        os << m.ids[r] << '\t' << split_ws(pairs[r].source).size() << '\t'
           << split_ws(pairs[r].target).size();
        for (std::size_t c = 0; c < m.cols(); ++c)
            os << '\t' << format_g17(m.cell(r, c).mean_nll) << '\t'
               << format_g17(m.cell(r, c).ppl);
        os << '\n';
    }
    os.flush();
    if (!os) throw Error("write failed for " + path);
}

} // namespace catprune
