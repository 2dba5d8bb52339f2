#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "catprune/errors.hpp"
#include "catprune/text.hpp"

namespace catprune {

// One bitext example. Text is stored byte-for-byte as read (line terminator
// stripped); ids are contiguous in [0, N) after dropped lines.
struct SentencePair {
    std::int64_t id = 0;
    std::string source;
    std::string target;
};

struct LoadSummary {
    std::int64_t total = 0;             // line pairs examined
    std::int64_t kept = 0;
    std::int64_t dropped_empty = 0;     // blank source or target after trimming
    std::int64_t dropped_malformed = 0; // TAB inside a field / wrong TSV arity

    std::int64_t dropped() const { return dropped_empty + dropped_malformed; }
};

// Streaming reader over two parallel files or a single TSV. Single pass,
// one line pair in memory at a time. Policy for blank or malformed pairs is
// drop-and-count; ids stay contiguous over the kept pairs.
class CorpusReader {
public:
    static CorpusReader open_pair(const std::string& source_path, const std::string& target_path) {
        CorpusReader r;
        r.src_path_ = source_path;
        r.tgt_path_ = target_path;
        r.src_.open(source_path, std::ios::binary);
        if (!r.src_) throw UsageError("cannot open source file: " + source_path);
        r.tgt_.open(target_path, std::ios::binary);
        if (!r.tgt_) throw UsageError("cannot open target file: " + target_path);
        r.tsv_ = false;
        return r;
    }

    static CorpusReader open_tsv(const std::string& tsv_path) {
        CorpusReader r;
        r.src_path_ = tsv_path;
        r.src_.open(tsv_path, std::ios::binary);
        if (!r.src_) throw UsageError("cannot open tsv file: " + tsv_path);
        r.tsv_ = true;
        return r;
    }

    // Next kept pair, or nullopt at end of input. Throws UsageError on
    // invalid UTF-8 or a line-count mismatch between the two files.
    std::optional<SentencePair> next() {
        std::string src_line, tgt_line;
        for (;;) {
            const bool got_src = read_line(src_, src_line);
            if (!tsv_) {
                const bool got_tgt = read_line(tgt_, tgt_line);
                if (got_src != got_tgt) throw_count_mismatch(got_src);
                if (!got_src) return std::nullopt;
            } else {
                if (!got_src) return std::nullopt;
            }
            ++summary_.total;
            ++line_no_;

            if (tsv_) {
                const auto tab1 = src_line.find('\t');
                if (tab1 == std::string::npos || src_line.find('\t', tab1 + 1) != std::string::npos) {
                    ++summary_.dropped_malformed;
                    continue;
                }
                tgt_line = src_line.substr(tab1 + 1);
                src_line.resize(tab1);
            } else if (src_line.find('\t') != std::string::npos ||
                       tgt_line.find('\t') != std::string::npos) {
                ++summary_.dropped_malformed;
                continue;
            }

            if (!is_valid_utf8(src_line) || !is_valid_utf8(tgt_line))
                throw UsageError("invalid UTF-8 byte sequence at line " + std::to_string(line_no_) +
                                 " of " + src_path_);

            if (trim(src_line).empty() || trim(tgt_line).empty()) {
                ++summary_.dropped_empty;
                continue;
            }

            SentencePair pair;
            pair.id = summary_.kept++;
            pair.source = std::move(src_line);
            pair.target = std::move(tgt_line);
            last_line_ = line_no_;
            return pair;
        }
    }

    // 1-based input line number of the most recently yielded pair.
    std::int64_t last_line() const { return last_line_; }
    const LoadSummary& summary() const { return summary_; }
    bool is_tsv() const { return tsv_; }

private:
    CorpusReader() = default;

    static bool read_line(std::ifstream& in, std::string& line) {
        if (!std::getline(in, line)) return false;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    }

    [[noreturn]] void throw_count_mismatch(bool src_longer) {
        // Drain the longer stream so the error can name both exact counts.
        std::int64_t n_src = line_no_ + (src_longer ? 1 : 0);
        std::int64_t n_tgt = line_no_ + (src_longer ? 0 : 1);
        std::string dummy;
        while (read_line(src_longer ? src_ : tgt_, dummy)) src_longer ? ++n_src : ++n_tgt;
        throw UsageError("line count mismatch " + std::to_string(n_src) + "\xE2\x89\xA0" +
                         std::to_string(n_tgt));
    }

    std::ifstream src_, tgt_;
    std::string src_path_, tgt_path_;
    bool tsv_ = false;
    LoadSummary summary_;
    std::int64_t line_no_ = 0;   // lines consumed so far
    std::int64_t last_line_ = 0;
};

struct Corpus {
    std::vector<SentencePair> pairs;
    std::vector<std::int64_t> linemap; // linemap[id] = 1-based original line
    LoadSummary summary;
    bool from_tsv = false;

    std::int64_t size() const { return static_cast<std::int64_t>(pairs.size()); }
};

inline Corpus load_corpus(CorpusReader reader) {
    Corpus c;
    c.from_tsv = reader.is_tsv();
    while (auto pair = reader.next()) {
        c.linemap.push_back(reader.last_line());
        c.pairs.push_back(std::move(*pair));
    }
    c.summary = reader.summary();
    return c;
}

inline Corpus load_corpus(const std::string& source_path, const std::string& target_path) {
    return load_corpus(CorpusReader::open_pair(source_path, target_path));
}

inline Corpus load_corpus_tsv(const std::string& tsv_path) {
    return load_corpus(CorpusReader::open_tsv(tsv_path));
}

inline void check_indices(const std::vector<std::int64_t>& indices, std::int64_t n) {
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= n)
            throw UsageError("index " + std::to_string(indices[i]) + " out of range [0, " +
                             std::to_string(n) + ")");
        if (i > 0 && indices[i] <= indices[i - 1])
            throw UsageError("indices must be sorted ascending and unique");
    }
}

// Emits exactly |indices| pairs in original order, text byte-for-byte, LF
// line endings. Empty index list produces empty files.
inline void write_subset(const Corpus& corpus, const std::vector<std::int64_t>& indices,
                         const std::string& source_out, const std::string& target_out) {
    check_indices(indices, corpus.size());
    std::ofstream src(source_out, std::ios::binary);
    if (!src) throw Error("cannot write " + source_out);
    std::ofstream tgt(target_out, std::ios::binary);
    if (!tgt) throw Error("cannot write " + target_out);
    for (const auto idx : indices) {
        const auto& p = corpus.pairs[static_cast<std::size_t>(idx)];
        src << p.source << '\n';
        tgt << p.target << '\n';
    }
    if (!src.flush() || !tgt.flush()) throw Error("short write while materializing subset");
}

inline void write_subset_tsv(const Corpus& corpus, const std::vector<std::int64_t>& indices,
                             const std::string& tsv_out) {
    check_indices(indices, corpus.size());
    std::ofstream out(tsv_out, std::ios::binary);
    if (!out) throw Error("cannot write " + tsv_out);
    for (const auto idx : indices) {
        const auto& p = corpus.pairs[static_cast<std::size_t>(idx)];
        out << p.source << '\t' << p.target << '\n';
    }
    if (!out.flush()) throw Error("short write while materializing subset");
}

// Sidecar `<name>.linemap.tsv`: original_line_number TAB id.
inline void write_linemap(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    for (std::size_t id = 0; id < corpus.linemap.size(); ++id)
        out << corpus.linemap[id] << '\t' << id << '\n';
    if (!out.flush()) throw Error("short write: " + path);
}

} // namespace catprune
