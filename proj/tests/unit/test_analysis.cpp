#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "catprune/analysis.hpp"
#include "catprune/prng.hpp"
#include "test_util.hpp"

using namespace catprune;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinRel;
using testutil::TempDir;
using testutil::read_file;
using testutil::write_file;

namespace {

std::vector<SentencePair> pairs_from(const std::vector<std::pair<std::string, std::string>>& rows) {
    std::vector<SentencePair> out;
    for (const auto& [s, t] : rows) {
        SentencePair p;
        p.id = static_cast<std::int64_t>(out.size());
        p.source = s;
        p.target = t;
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace

TEST_CASE("length stats match hand arithmetic", "[analysis]") {
    const auto s = length_stats({2, 4});
    CHECK(s.n == 2);
    CHECK(s.mean == 3.0);
    CHECK(s.median == 3.0);
    CHECK(s.stddev == 1.0);
    CHECK(s.min == 2);
    CHECK(s.max == 4);
    REQUIRE(s.histogram.size() == 2);
    CHECK(s.histogram[0] == std::pair<std::int64_t, std::int64_t>{2, 1});
    CHECK(s.histogram[1] == std::pair<std::int64_t, std::int64_t>{4, 1});
}

TEST_CASE("median handles odd and even counts", "[analysis]") {
    CHECK(length_stats({5, 1, 3}).median == 3.0);
    CHECK(length_stats({1, 2, 3, 10}).median == 2.5);
    CHECK(length_stats({7}).median == 7.0);
    CHECK(length_stats({7}).stddev == 0.0);
}

TEST_CASE("histogram bins group by bin width", "[analysis]") {
    const auto s = length_stats({1, 2, 3, 4, 5, 9}, 3);
    // bins: 0 -> {1,2}, 3 -> {3,4,5}, 9 -> {9}
    REQUIRE(s.histogram.size() == 3);
    CHECK(s.histogram[0] == std::pair<std::int64_t, std::int64_t>{0, 2});
    CHECK(s.histogram[1] == std::pair<std::int64_t, std::int64_t>{3, 3});
    CHECK(s.histogram[2] == std::pair<std::int64_t, std::int64_t>{9, 1});

    std::int64_t total = 0;
    for (const auto& [lo, count] : s.histogram) total += count;
    CHECK(total == s.n);

    CHECK_THROWS_AS(length_stats({1}, 0), UsageError);
}

TEST_CASE("length stats reject an empty selection", "[analysis]") {
    CHECK_THROWS_WITH(length_stats({}), "empty selection");
}

TEST_CASE("length stats agree with a direct recomputation", "[analysis]") {
    Prng rng(31);
    std::vector<std::int64_t> lengths;
    for (int i = 0; i < 500; ++i) lengths.push_back(1 + static_cast<std::int64_t>(rng.next_below(60)));
    const auto s = length_stats(lengths);

    double mean = 0.0;
    for (const auto l : lengths) mean += static_cast<double>(l);
    mean /= static_cast<double>(lengths.size());
    double var = 0.0;
    for (const auto l : lengths) var += (static_cast<double>(l) - mean) * (static_cast<double>(l) - mean);
    var /= static_cast<double>(lengths.size());

    CHECK_THAT(s.mean, WithinRel(mean, 1e-12));
    CHECK_THAT(s.stddev, WithinRel(std::sqrt(var), 1e-12));
}

TEST_CASE("lexical stats match the worked example", "[analysis]") {
    // subset tokens {a, a, b}; full-corpus freqs a:10, b:1; threshold 2
    const auto subset = pairs_from({{"a a b", "ignored"}});
    FrequencyTable freqs{{"a", 10}, {"b", 1}};
    const auto s = lexical_stats(subset, Side::source, freqs, 2);
    CHECK(s.total_tokens == 3);
    CHECK(s.type_count == 2);
    CHECK(s.rare_word_count == 1);
    CHECK(s.rare_threshold == 2);
    CHECK_THAT(s.mean_word_frequency, WithinRel(7.0, 1e-15)); // (10+10+1)/3
}

TEST_CASE("mean word frequency uses the full corpus as basis", "[analysis]") {
    // the subset sees "rare" once, but its full-corpus frequency is what counts
    const auto full = pairs_from({{"common common common rare", "x"}, {"common common", "y"}});
    const auto freqs = build_frequency_table(full, Side::source);
    CHECK(freqs.at("common") == 5);
    CHECK(freqs.at("rare") == 1);

    const auto subset = pairs_from({{"common rare", "x"}});
    const auto s = lexical_stats(subset, Side::source, freqs, 1);
    CHECK(s.total_tokens == 2);
    CHECK_THAT(s.mean_word_frequency, WithinRel(3.0, 1e-15)); // (5+1)/2
    CHECK(s.rare_word_count == 1);
}

TEST_CASE("full-corpus mean word frequency equals sum of squares over sum", "[analysis]") {
    const auto full = pairs_from({{"a a a b b c", "x"}, {"a b c d", "y"}});
    const auto freqs = build_frequency_table(full, Side::source);

    std::int64_t sum_sq = 0, sum = 0;
    for (const auto& [tok, f] : freqs) {
        (void)tok;
        sum_sq += f * f;
        sum += f;
    }
    const auto s = lexical_stats(full, Side::source, freqs, 2);
    CHECK_THAT(s.mean_word_frequency,
               WithinRel(static_cast<double>(sum_sq) / static_cast<double>(sum), 1e-12));
}

TEST_CASE("lexical stats reject empties and unknown tokens", "[analysis]") {
    FrequencyTable freqs{{"a", 1}};
    CHECK_THROWS_WITH(lexical_stats({}, Side::source, freqs), "empty selection");

    const auto subset = pairs_from({{"a mystery", "x"}});
    CHECK_THROWS_WITH(lexical_stats(subset, Side::source, freqs),
                      "token \"mystery\" absent from frequency table");
}

TEST_CASE("corpus report covers both sides", "[analysis]") {
    const auto pairs = pairs_from({{"a a b", "xx yy"}, {"b c", "zz"}});
    const auto src_freqs = build_frequency_table(pairs, Side::source);
    const auto tgt_freqs = build_frequency_table(pairs, Side::target);
    const auto r = corpus_report(pairs, src_freqs, tgt_freqs);

    CHECK(r.n_pairs == 2);
    CHECK(r.source.lengths.n == 2);
    CHECK(r.source.lengths.mean == 2.5);
    CHECK(r.target.lengths.mean == 1.5);
    CHECK(r.source.lexical.type_count == 3);
    CHECK(r.target.lexical.type_count == 3);

    const auto doc = report_to_json(r);
    CHECK(doc["n_pairs"] == 2);
    CHECK(doc["tokenization"] == "whitespace");
    CHECK(doc["mean_word_frequency_basis"] == "full-corpus frequencies");
    CHECK(doc["source"]["lengths"]["mean"] == 2.5);
    CHECK(doc["source"]["lexical"]["type_count"] == 3);
    CHECK(doc["target"]["lengths"]["histogram"].is_array());
}

TEST_CASE("score length join writes one row per id", "[analysis]") {
    TempDir tmp;
    ScoreMatrix m;
    m.ids = {0, 1};
    m.labels = {"1", "5"};
    m.cells = {ScoreCell{1.0, 2.0}, ScoreCell{0.5, 1.5}, ScoreCell{2.0, 4.0},
               ScoreCell{1.5, 3.0}};
    const auto pairs = pairs_from({{"two words", "one"}, {"a b c", "x y"}});

    write_score_length_join(m, pairs, tmp.file("join.tsv"));
    const auto text = read_file(tmp.file("join.tsv"));
    CHECK(text ==
          "id\tsource_len\ttarget_len\tnll_ck1\tppl_ck1\tnll_ck5\tppl_ck5\n"
          "0\t2\t1\t1\t2\t0.5\t1.5\n"
          "1\t3\t2\t2\t4\t1.5\t3\n");
}

TEST_CASE("score length join validates id alignment", "[analysis]") {
    TempDir tmp;
    ScoreMatrix m;
    m.ids = {0};
    m.labels = {"1"};
    m.cells = {ScoreCell{1.0, 2.0}};

    const auto two = pairs_from({{"a", "b"}, {"c", "d"}});
    CHECK_THROWS_AS(write_score_length_join(m, two, tmp.file("j.tsv")), UsageError);

    auto misnumbered = pairs_from({{"a", "b"}});
    misnumbered[0].id = 5;
    CHECK_THROWS_AS(write_score_length_join(m, misnumbered, tmp.file("j.tsv")), UsageError);
}
