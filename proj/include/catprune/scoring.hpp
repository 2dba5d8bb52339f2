#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "catprune/errors.hpp"
#include "catprune/model.hpp"
#include "catprune/text.hpp"
#include "catprune/vocab.hpp"

namespace catprune {

// Clamp on mean negative log-likelihood before exponentiation; exp(30) keeps
// perplexity differences finite for hard examples early in training.
inline constexpr double kDefaultNllClamp = 30.0;

struct PerplexityScore {
    double mean_nll = 0.0;
    double ppl = 1.0;
};

// ppl = exp(-1/T sum log P), computed as exp(clamp(mean_nll)).
inline PerplexityScore perplexity(std::span<const double> log_probs,
                                  double nll_clamp = kDefaultNllClamp) {
    if (log_probs.empty()) throw Error("perplexity of an empty token sequence");
    double sum = 0.0;
    for (const double lp : log_probs) {
        if (!std::isfinite(lp)) throw Error("non-finite log-probability");
        if (lp > 0.0) throw Error("positive log-probability " + format_g17(lp));
        sum += lp;
    }
    PerplexityScore s;
    s.mean_nll = -sum / static_cast<double>(log_probs.size());
    s.ppl = std::exp(std::min(s.mean_nll, nll_clamp));
    return s;
}

struct ScoreCell {
    double mean_nll = 0.0;
    double ppl = 1.0;
};

// Per-example, per-checkpoint scores. Column labels are 1-based epoch
// numbers rendered as decimal strings ("1", "3", "5"), or the single literal
// label "ext" for an external score column; ids always cover [0, N).
struct ScoreMatrix {
    std::vector<std::int64_t> ids;
    std::vector<std::string> labels;
    std::vector<ScoreCell> cells; // row-major, ids.size() x labels.size()

    std::size_t rows() const { return ids.size(); }
    std::size_t cols() const { return labels.size(); }

    ScoreCell& cell(std::size_t row, std::size_t col) { return cells[row * cols() + col]; }
    const ScoreCell& cell(std::size_t row, std::size_t col) const {
        return cells[row * cols() + col];
    }

    std::optional<std::size_t> column_of(const std::string& label) const {
        for (std::size_t c = 0; c < labels.size(); ++c)
            if (labels[c] == label) return c;
        return std::nullopt;
    }

    std::size_t require_column(const std::string& label) const {
        const auto c = column_of(label);
        if (!c) throw UsageError("checkpoint " + label + " not present in score matrix");
        return *c;
    }
};

namespace detail {

inline bool is_all_digits(const std::string& s) {
    if (s.empty()) return false;
    for (const char c : s)
        if (c < '0' || c > '9') return false;
    return true;
}

inline void validate_labels(const std::vector<std::string>& labels) {
    if (labels.empty()) throw UsageError("score matrix has no checkpoint columns");
    if (labels.size() == 1 && labels[0] == "ext") return;
    std::int64_t prev = 0;
    for (const auto& l : labels) {
        if (!is_all_digits(l))
            throw UsageError("bad checkpoint label \"" + l + "\" in score matrix");
        const std::int64_t v = std::stoll(l);
        if (v <= prev) throw UsageError("checkpoint labels must be ascending");
        prev = v;
    }
}

} // namespace detail

// Fills one matrix column per snapshot: mean_nll and ppl of every example
// under that checkpoint. Examples are statically partitioned over workers
// and written into preallocated rows, so any worker count yields the same
// matrix. workers = 0 picks hardware concurrency.
inline ScoreMatrix score_corpus(const std::vector<TokenizedPair>& corpus,
                                const std::map<std::int64_t, ModelSnapshot>& snapshots,
                                unsigned workers = 0, double nll_clamp = kDefaultNllClamp) {
    if (snapshots.empty()) throw UsageError("no snapshots to score with");
    if (corpus.empty()) throw UsageError("cannot score an empty corpus");

    ScoreMatrix m;
    m.ids.reserve(corpus.size());
    for (const auto& pair : corpus) m.ids.push_back(pair.id);
    for (const auto& [epoch, snap] : snapshots) {
        m.labels.push_back(std::to_string(epoch));
        (void)snap;
    }
    detail::validate_labels(m.labels);
    m.cells.assign(corpus.size() * snapshots.size(), ScoreCell{});

    unsigned n_workers = workers == 0 ? std::thread::hardware_concurrency() : workers;
    if (n_workers == 0) n_workers = 1;
    n_workers = std::min<unsigned>(n_workers, static_cast<unsigned>(corpus.size()));

    struct WorkerFailure {
        std::size_t row;
        bool usage;
        std::string message;
    };
    std::vector<std::optional<WorkerFailure>> failures(n_workers);

    auto run_range = [&](unsigned w, std::size_t begin, std::size_t end) {
        ModelWorkspace ws;
        std::size_t row = begin;
        try {
            for (; row < end; ++row) {
                std::size_t col = 0;
                for (const auto& [epoch, snap] : snapshots) {
                    (void)epoch;
                    const auto lp = log_prob(snap, corpus[row], ws);
                    const auto s = perplexity(lp, nll_clamp);
                    m.cell(row, col) = ScoreCell{s.mean_nll, s.ppl};
                    ++col;
                }
            }
        } catch (const UsageError& e) {
            failures[w] = WorkerFailure{row, true, e.what()};
        } catch (const Error& e) {
            failures[w] = WorkerFailure{row, false, e.what()};
        }
    };

    if (n_workers == 1) {
        run_range(0, 0, corpus.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t per = (corpus.size() + n_workers - 1) / n_workers;
        for (unsigned w = 0; w < n_workers; ++w) {
            const std::size_t begin = std::min(corpus.size(), static_cast<std::size_t>(w) * per);
            const std::size_t end = std::min(corpus.size(), begin + per);
            pool.emplace_back(run_range, w, begin, end);
        }
        for (auto& t : pool) t.join();
    }

    std::optional<WorkerFailure> first;
    for (const auto& f : failures)
        if (f && (!first || f->row < first->row)) first = f;
    if (first) {
        const std::string msg =
            "example id " + std::to_string(corpus[first->row].id) + ": " + first->message;
        if (first->usage) throw UsageError(msg);
        throw Error(msg);
    }
    return m;
}

namespace detail {

inline std::string column_stem(const std::string& label) {
    return label == "ext" ? std::string("ext") : "ck" + label;
}

} // namespace detail

// TSV: id TAB nll_ck1 TAB ppl_ck1 TAB ... one row per example, 17
// significant digits so doubles round trip exactly.
inline void write_matrix(const ScoreMatrix& m, const std::string& path) {
    detail::validate_labels(m.labels);
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    os << "id";
    for (const auto& l : m.labels) {
        const auto stem = detail::column_stem(l);
        os << '\t' << "nll_" << stem << '\t' << "ppl_" << stem;
    }
    os << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        os << m.ids[r];
        for (std::size_t c = 0; c < m.cols(); ++c) {
            const auto& cell = m.cell(r, c);
            os << '\t' << format_g17(cell.mean_nll) << '\t' << format_g17(cell.ppl);
        }
        os << '\n';
    }
    os.flush();
    if (!os) throw Error("write failed for " + path);
}

inline ScoreMatrix read_matrix(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);

    std::string line;
    if (!std::getline(is, line)) throw UsageError(path + ": empty score matrix file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        header.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    if (header.size() < 3 || header[0] != "id" || (header.size() - 1) % 2 != 0)
        throw UsageError(path + ": malformed score matrix header");

    ScoreMatrix m;
    for (std::size_t i = 1; i + 1 < header.size(); i += 2) {
        const std::string& nll_col = header[i];
        const std::string& ppl_col = header[i + 1];
        if (nll_col.rfind("nll_", 0) != 0 || ppl_col.rfind("ppl_", 0) != 0 ||
            nll_col.substr(4) != ppl_col.substr(4))
            throw UsageError(path + ": malformed score matrix header");
        std::string stem = nll_col.substr(4);
        if (stem == "ext") {
            m.labels.push_back("ext");
        } else if (stem.rfind("ck", 0) == 0) {
            m.labels.push_back(stem.substr(2));
        } else {
            throw UsageError(path + ": bad column name \"" + nll_col + "\"");
        }
    }
    detail::validate_labels(m.labels);

    struct Row {
        std::int64_t id;
        std::vector<ScoreCell> cells;
    };
    std::vector<Row> raw;
    std::int64_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        start = 0;
        while (true) {
            const auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != header.size())
            throw UsageError(path + ": line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        Row row;
        row.id = parse_int_strict(fields[0], path + ": line " + std::to_string(line_no) + ": id");
        if (row.id < 0)
            throw UsageError(path + ": line " + std::to_string(line_no) + ": negative id");
        for (std::size_t c = 0; c < m.labels.size(); ++c) {
            const std::string where = path + ": line " + std::to_string(line_no);
            ScoreCell cell;
            cell.mean_nll = parse_double_strict(fields[1 + 2 * c], where + ": mean_nll");
            cell.ppl = parse_double_strict(fields[2 + 2 * c], where + ": ppl");
            if (!std::isfinite(cell.mean_nll) || cell.mean_nll < 0.0)
                throw UsageError(where + ": mean_nll must be finite and >= 0");
            if (!std::isfinite(cell.ppl) || cell.ppl <= 0.0)
                throw UsageError(where + ": ppl must be finite and > 0");
            row.cells.push_back(cell);
        }
        raw.push_back(std::move(row));
    }
    if (raw.empty()) throw UsageError(path + ": score matrix has no rows");

    std::sort(raw.begin(), raw.end(), [](const Row& a, const Row& b) { return a.id < b.id; });
    for (std::size_t i = 0; i + 1 < raw.size(); ++i)
        if (raw[i].id == raw[i + 1].id)
            throw UsageError(path + ": duplicate row for id " + std::to_string(raw[i].id));
    for (std::size_t i = 0; i < raw.size(); ++i)
        if (raw[i].id != static_cast<std::int64_t>(i))
            throw UsageError(path + ": row for id " + std::to_string(i) + " absent");

    m.ids.reserve(raw.size());
    m.cells.reserve(raw.size() * m.labels.size());
    for (auto& row : raw) {
        m.ids.push_back(row.id);
        for (const auto& cell : row.cells) m.cells.push_back(cell);
    }
    return m;
}

enum class ScoreDirection { higher_better, lower_better, band };

inline const char* direction_name(ScoreDirection d) {
    switch (d) {
        case ScoreDirection::higher_better: return "higher-better";
        case ScoreDirection::lower_better: return "lower-better";
        case ScoreDirection::band: return "band";
    }
    return "?";
}

// One finite score per corpus id, from a TSV of `id TAB score`.
struct ExternalScoreFile {
    std::vector<double> scores; // indexed by id, covers [0, N)
    ScoreDirection direction = ScoreDirection::higher_better;
};

inline ExternalScoreFile load_external_scores(const std::string& path, ScoreDirection direction,
                                              std::size_t corpus_size) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);

    std::vector<std::optional<double>> slots(corpus_size);
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        const std::string where = path + ": line " + std::to_string(line_no);
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
            throw UsageError(where + ": expected `id TAB score`");
        const std::int64_t id = parse_int_strict(line.substr(0, tab), where + ": id");
        if (id < 0 || static_cast<std::size_t>(id) >= corpus_size)
            throw UsageError(where + ": id " + std::to_string(id) + " outside corpus of size " +
                             std::to_string(corpus_size));
        const double score = parse_double_strict(line.substr(tab + 1), where + ": score");
        if (!std::isfinite(score)) throw UsageError(where + ": score must be finite");
        if (slots[static_cast<std::size_t>(id)])
            throw UsageError(where + ": duplicate score for id " + std::to_string(id));
        slots[static_cast<std::size_t>(id)] = score;
    }
    for (std::size_t i = 0; i < slots.size(); ++i)
        if (!slots[i]) throw UsageError(path + ": missing score for id " + std::to_string(i));

    ExternalScoreFile f;
    f.direction = direction;
    f.scores.reserve(corpus_size);
    for (const auto& s : slots) f.scores.push_back(*s);
    return f;
}

// Corpus size implied by an external score file: max id + 1. The subsequent
// load still checks density, so gaps surface as "missing score for id N".
inline std::size_t external_scores_extent(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);
    std::int64_t max_id = -1;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        const std::string where = path + ": line " + std::to_string(line_no);
        if (tab == std::string::npos) throw UsageError(where + ": expected `id TAB score`");
        const std::int64_t id = parse_int_strict(line.substr(0, tab), where + ": id");
        if (id < 0) throw UsageError(where + ": id must be non-negative");
        max_id = std::max(max_id, id);
    }
    if (max_id < 0) throw UsageError(path + ": no scores found");
    return static_cast<std::size_t>(max_id) + 1;
}

} // namespace catprune
