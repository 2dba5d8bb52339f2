#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "catprune/corpus.hpp"
#include "catprune/vocab.hpp"
#include "test_util.hpp"

using namespace catprune;
using testutil::TempDir;
using testutil::read_file;
using testutil::write_file;

namespace {

Corpus corpus_from(const std::vector<std::pair<std::string, std::string>>& rows) {
    Corpus c;
    for (const auto& [s, t] : rows) {
        SentencePair p;
        p.id = c.size();
        p.source = s;
        p.target = t;
        c.pairs.push_back(std::move(p));
        c.linemap.push_back(c.size());
    }
    c.summary.total = c.size();
    c.summary.kept = c.size();
    return c;
}

} // namespace

TEST_CASE("reserved ids occupy the first four slots", "[vocab]") {
    Vocabulary v;
    CHECK(v.size() == 4);
    CHECK(v.token(Vocabulary::kPad) == "<pad>");
    CHECK(v.token(Vocabulary::kBos) == "<bos>");
    CHECK(v.token(Vocabulary::kEos) == "<eos>");
    CHECK(v.token(Vocabulary::kUnk) == "<unk>");
    CHECK(v.lookup("anything") == Vocabulary::kUnk);
}

TEST_CASE("tokens rank by frequency desc then lexicographic asc", "[vocab]") {
    const auto c = corpus_from({{"b a a", "x"}, {"a c b", "x"}, {"c", "x"}});
    // freqs: a=3, b=2, c=2
    const auto v = build_vocab(c, Side::source);
    REQUIRE(v.size() == 7);
    CHECK(v.token(4) == "a");
    CHECK(v.token(5) == "b");
    CHECK(v.token(6) == "c");
    CHECK(v.lookup("a") == 4);
    CHECK(v.lookup("b") == 5);
    CHECK(v.lookup("c") == 6);
}

TEST_CASE("build_vocab reads the requested side", "[vocab]") {
    const auto c = corpus_from({{"src only", "tgt words here"}});
    const auto vs = build_vocab(c, Side::source);
    const auto vt = build_vocab(c, Side::target);
    CHECK(vs.lookup("src") != Vocabulary::kUnk);
    CHECK(vs.lookup("tgt") == Vocabulary::kUnk);
    CHECK(vt.lookup("tgt") != Vocabulary::kUnk);
    CHECK(vt.lookup("src") == Vocabulary::kUnk);
}

TEST_CASE("min_freq excludes rare tokens", "[vocab]") {
    const auto c = corpus_from({{"a a a b b c", "x"}});
    const auto v = build_vocab(c, Side::source, 32000, 2);
    CHECK(v.lookup("a") != Vocabulary::kUnk);
    CHECK(v.lookup("b") != Vocabulary::kUnk);
    CHECK(v.lookup("c") == Vocabulary::kUnk);
    CHECK(v.size() == 6);
}

TEST_CASE("max_size caps the vocabulary including reserved ids", "[vocab]") {
    const auto c = corpus_from({{"e d c b a", "x"}, {"a b c d", "x"}, {"a b c", "x"}, {"a b", "x"}});
    // freqs: a=4 b=4 c=3 d=2 e=1
    const auto v = build_vocab(c, Side::source, 6);
    REQUIRE(v.size() == 6);
    CHECK(v.token(4) == "a");
    CHECK(v.token(5) == "b");
    CHECK(v.lookup("c") == Vocabulary::kUnk);
}

TEST_CASE("max_size below 5 is rejected", "[vocab]") {
    const auto c = corpus_from({{"a", "x"}});
    CHECK_THROWS_AS(build_vocab(c, Side::source, 4), UsageError);
    CHECK_NOTHROW(build_vocab(c, Side::source, 5));
}

TEST_CASE("empty corpus cannot produce a vocabulary", "[vocab]") {
    Corpus c;
    CHECK_THROWS_AS(build_vocab(c, Side::source), UsageError);
}

TEST_CASE("vocabulary save and load round trip", "[vocab]") {
    TempDir tmp;
    const auto c = corpus_from({{"gamma beta alpha gamma", "x"}});
    const auto v = build_vocab(c, Side::source);
    v.save(tmp.file("v.vocab"));
    CHECK(read_file(tmp.file("v.vocab")) == "gamma\nalpha\nbeta\n");

    const auto loaded = Vocabulary::load(tmp.file("v.vocab"));
    CHECK(loaded.size() == v.size());
    for (TokenId id = 0; id < v.size(); ++id) CHECK(loaded.token(id) == v.token(id));
    CHECK(loaded.lookup("gamma") == 4);
}

TEST_CASE("vocabulary load rejects blank lines and missing files", "[vocab]") {
    TempDir tmp;
    write_file(tmp.file("bad.vocab"), "a\n\nb\n");
    CHECK_THROWS_AS(Vocabulary::load(tmp.file("bad.vocab")), UsageError);
    CHECK_THROWS_AS(Vocabulary::load(tmp.file("absent.vocab")), UsageError);
}

TEST_CASE("tokenize appends exactly one target eos", "[vocab]") {
    const auto c = corpus_from({{"a b", "c d"}});
    const auto vs = build_vocab(c, Side::source);
    const auto vt = build_vocab(c, Side::target);
    const auto t = tokenize(c.pairs[0], vs, vt);
    CHECK(t.id == 0);
    CHECK(t.source_tokens == std::vector<TokenId>{4, 5});
    CHECK(t.target_tokens == std::vector<TokenId>{4, 5, Vocabulary::kEos});
}

TEST_CASE("tokenize maps unseen tokens to unk", "[vocab]") {
    const auto c = corpus_from({{"a b", "c d"}});
    const auto vs = build_vocab(c, Side::source);
    const auto vt = build_vocab(c, Side::target);
    SentencePair p;
    p.id = 7;
    p.source = "a mystery";
    p.target = "d unknown";
    const auto t = tokenize(p, vs, vt);
    CHECK(t.source_tokens == std::vector<TokenId>{4, Vocabulary::kUnk});
    CHECK(t.target_tokens == std::vector<TokenId>{5, Vocabulary::kUnk, Vocabulary::kEos});
}

TEST_CASE("tokenize truncates each side to max_len before the eos", "[vocab]") {
    const auto c = corpus_from({{"a a a a a a", "b b b b b b"}});
    const auto vs = build_vocab(c, Side::source);
    const auto vt = build_vocab(c, Side::target);
    const auto t = tokenize(c.pairs[0], vs, vt, 3);
    CHECK(t.source_tokens.size() == 3);
    REQUIRE(t.target_tokens.size() == 4);
    CHECK(t.target_tokens.back() == Vocabulary::kEos);
}

TEST_CASE("tokenize_corpus preserves ids and order", "[vocab]") {
    const auto c = corpus_from({{"a", "b"}, {"a a", "b b"}});
    const auto vs = build_vocab(c, Side::source);
    const auto vt = build_vocab(c, Side::target);
    const auto all = tokenize_corpus(c, vs, vt);
    REQUIRE(all.size() == 2);
    CHECK(all[0].id == 0);
    CHECK(all[1].id == 1);
    CHECK(all[1].source_tokens.size() == 2);
}
