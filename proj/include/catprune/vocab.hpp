#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "catprune/corpus.hpp"
#include "catprune/errors.hpp"
#include "catprune/text.hpp"

namespace catprune {

using TokenId = std::int32_t;

enum class Side { source, target };

// Whitespace-token vocabulary with four reserved ids. Construction is
// deterministic: tokens ranked by (frequency desc, token lexicographic asc).
class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kBos = 1;
    static constexpr TokenId kEos = 2;
    static constexpr TokenId kUnk = 3;
    static constexpr TokenId kReserved = 4;

    Vocabulary() {
        id_to_token_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
    }

    TokenId add(const std::string& token) {
        const auto id = static_cast<TokenId>(id_to_token_.size());
        token_to_id_.emplace(token, id);
        id_to_token_.push_back(token);
        return id;
    }

    TokenId lookup(std::string_view token) const {
        const auto it = token_to_id_.find(std::string(token));
        return it == token_to_id_.end() ? kUnk : it->second;
    }

    const std::string& token(TokenId id) const { return id_to_token_[static_cast<std::size_t>(id)]; }
    TokenId size() const { return static_cast<TokenId>(id_to_token_.size()); }

    // One non-reserved token per line, in id order starting at id 4.
    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot write " + path);
        for (std::size_t i = kReserved; i < id_to_token_.size(); ++i)
            out << id_to_token_[i] << '\n';
        if (!out.flush()) throw Error("short write: " + path);
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw UsageError("cannot open vocabulary file: " + path);
        Vocabulary v;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) throw UsageError("blank line in vocabulary file: " + path);
            v.add(line);
        }
        return v;
    }

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, TokenId> token_to_id_;
};

// max_size caps the total vocabulary size including the 4 reserved ids;
// tokens with corpus frequency < min_freq map to <unk>.
inline Vocabulary build_vocab(const Corpus& corpus, Side side, std::int64_t max_size = 32000,
                              std::int64_t min_freq = 1) {
    if (corpus.pairs.empty()) throw UsageError("cannot build vocabulary from an empty corpus");
    if (max_size < 5) throw UsageError("vocabulary max_size must be at least 5");

    std::unordered_map<std::string, std::int64_t> freq;
    for (const auto& pair : corpus.pairs) {
        const std::string& text = side == Side::source ? pair.source : pair.target;
        for (const auto tok : split_ws(text)) ++freq[std::string(tok)];
    }

    std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    for (const auto& [token, count] : ranked) {
        if (count < min_freq) break;
        if (vocab.size() >= max_size) break;
        vocab.add(token);
    }
    return vocab;
}

// Integer token sequences for one pair; target is EOS-terminated.
struct TokenizedPair {
    std::int64_t id = 0;
    std::vector<TokenId> source_tokens;
    std::vector<TokenId> target_tokens;
};

inline constexpr std::int64_t kDefaultMaxLen = 64;

// Whitespace tokenization, unknowns to <unk>, truncation to max_len tokens
// per side before the target EOS is appended.
inline TokenizedPair tokenize(const SentencePair& pair, const Vocabulary& src_vocab,
                              const Vocabulary& tgt_vocab, std::int64_t max_len = kDefaultMaxLen) {
    TokenizedPair out;
    out.id = pair.id;
    for (const auto tok : split_ws(pair.source)) {
        if (static_cast<std::int64_t>(out.source_tokens.size()) >= max_len) break;
        out.source_tokens.push_back(src_vocab.lookup(tok));
    }
    for (const auto tok : split_ws(pair.target)) {
        if (static_cast<std::int64_t>(out.target_tokens.size()) >= max_len) break;
        out.target_tokens.push_back(tgt_vocab.lookup(tok));
    }
    out.target_tokens.push_back(Vocabulary::kEos);
    return out;
}

inline std::vector<TokenizedPair> tokenize_corpus(const Corpus& corpus, const Vocabulary& src_vocab,
                                                  const Vocabulary& tgt_vocab,
                                                  std::int64_t max_len = kDefaultMaxLen) {
    std::vector<TokenizedPair> out;
    out.reserve(corpus.pairs.size());
    for (const auto& pair : corpus.pairs) out.push_back(tokenize(pair, src_vocab, tgt_vocab, max_len));
    return out;
}

} // namespace catprune
