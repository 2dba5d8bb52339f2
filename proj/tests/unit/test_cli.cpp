#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "catprune/scoring.hpp"
#include "catprune/selection.hpp"
#include "catprune/sha256.hpp"
#include "test_util.hpp"

using namespace catprune;
using Catch::Matchers::ContainsSubstring;
using testutil::TempDir;
using testutil::read_file;
using testutil::write_file;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string q(const std::string& s) { return "'" + s + "'"; }

// Runs the installed binary through the shell, capturing exit code and both
// streams. CATPRUNE_BIN is injected by the test harness.
RunResult run_cli(const TempDir& tmp, const std::string& args, const std::string& env_prefix = "") {
    const char* bin = std::getenv("CATPRUNE_BIN");
    REQUIRE(bin != nullptr);
    static std::atomic<int> counter{0};
    const int id = counter.fetch_add(1);
    const std::string out_path = tmp.file("cli_stdout_" + std::to_string(id));
    const std::string err_path = tmp.file("cli_stderr_" + std::to_string(id));
    std::string cmd;
    if (!env_prefix.empty()) cmd += env_prefix + " ";
    cmd += q(bin) + " " + args + " > " + q(out_path) + " 2> " + q(err_path);
    const int status = std::system(cmd.c_str());
    RunResult r;
    if (status != -1 && WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    r.out = read_file(out_path);
    r.err = read_file(err_path);
    return r;
}

// Small aligned corpus with enough token reuse for a stable vocabulary.
const std::vector<std::string> kSrcLines = {
    "der hund lief schnell",      "die katze schlief tief",
    "der mann las ein buch",      "die frau trank kaffee",
    "ein kind spielte im park",   "der hund bellte laut",
    "die katze jagte den hund",   "der mann trank tee",
    "die frau las die zeitung",   "ein kind lachte laut",
    "der park war leer",          "das buch war gut",
    "der kaffee war heiss",       "die zeitung lag im park",
    "der tee schmeckte gut",      "das kind schlief tief",
};
const std::vector<std::string> kTgtLines = {
    "the dog ran fast",           "the cat slept deeply",
    "the man read a book",        "the woman drank coffee",
    "a child played in the park", "the dog barked loudly",
    "the cat chased the dog",     "the man drank tea",
    "the woman read the paper",   "a child laughed loudly",
    "the park was empty",         "the book was good",
    "the coffee was hot",         "the paper lay in the park",
    "the tea tasted good",        "the child slept deeply",
};

std::string joined(const std::vector<std::string>& lines) {
    std::string s;
    for (const auto& l : lines) s += l + "\n";
    return s;
}

void write_corpus(const TempDir& tmp) {
    write_file(tmp.file("c.src"), joined(kSrcLines));
    write_file(tmp.file("c.tgt"), joined(kTgtLines));
}

// Tiny but real training run shared by the score-dependent cases.
std::string score_args(const TempDir& tmp, const std::string& out_name,
                       const std::string& extra = "") {
    return "score --src " + q(tmp.file("c.src")) + " --tgt " + q(tmp.file("c.tgt")) + " --out " +
           q(tmp.file(out_name)) + " --embed-dim 4 --hidden-dim 6 --epochs 5 --batch-size 4" +
           " --seed 3 " + extra;
}

} // namespace

TEST_CASE("cli exit codes for help, version and bad usage", "[cli]") {
    TempDir tmp;

    CHECK(run_cli(tmp, "").exit_code == 2);

    const auto help = run_cli(tmp, "--help");
    CHECK(help.exit_code == 0);
    CHECK_THAT(help.out, ContainsSubstring("score"));
    CHECK_THAT(help.out, ContainsSubstring("select"));

    const auto version = run_cli(tmp, "--version");
    CHECK(version.exit_code == 0);
    CHECK_THAT(version.out, ContainsSubstring("catprune 0.1.0"));

    CHECK(run_cli(tmp, "frobnicate").exit_code == 2);

    const auto missing = run_cli(tmp, "score --src a --tgt b"); // no --out
    CHECK(missing.exit_code == 2);
    CHECK_THAT(missing.err, ContainsSubstring("error"));

    write_corpus(tmp);
    const auto absent = run_cli(tmp, "score --src " + q(tmp.file("absent.src")) + " --tgt " +
                                         q(tmp.file("c.tgt")) + " --out " + q(tmp.file("m.tsv")));
    CHECK(absent.exit_code == 2); // unreadable input is a usage error
    CHECK_THAT(absent.err, ContainsSubstring("cannot open"));
}

TEST_CASE("score writes the matrix and all sidecar artifacts", "[cli]") {
    TempDir tmp;
    write_corpus(tmp);

    const auto r = run_cli(tmp, score_args(tmp, "scores.tsv"));
    INFO(r.err);
    REQUIRE(r.exit_code == 0);

    const auto matrix = read_matrix(tmp.file("scores.tsv"));
    CHECK(matrix.rows() == kSrcLines.size());
    CHECK(matrix.labels == std::vector<std::string>{"1", "3", "5"});
    for (std::size_t row = 0; row < matrix.rows(); ++row)
        for (std::size_t col = 0; col < matrix.cols(); ++col)
            CHECK(matrix.cell(row, col).ppl > 0.0);

    for (const char* name : {"scores.ck1.catm", "scores.ck3.catm", "scores.ck5.catm",
                             "scores.src.vocab", "scores.tgt.vocab", "scores.linemap.tsv"})
        CHECK(std::filesystem::exists(tmp.file(name)));

    SECTION("manifest records config and hashes of every artifact") {
        const auto m = nlohmann::json::parse(read_file(tmp.file("scores.tsv.manifest.json")));
        CHECK(m.at("tool") == "catprune");
        CHECK(m.at("command") == "score");
        CHECK(m.at("config").at("model").at("embed_dim").get<int>() == 4);
        CHECK(m.at("config").at("seed").get<int>() == 3);
        CHECK(m.at("inputs").size() == 2);
        CHECK(m.at("outputs").size() == 7); // matrix, 3 snapshots, 2 vocabs, linemap
        const auto hash = m.at("outputs").at(tmp.file("scores.tsv")).get<std::string>();
        CHECK(hash == sha256_file_hex(tmp.file("scores.tsv")));
        CHECK(m.at("wall_seconds").get<double>() >= 0.0);
    }
    SECTION("rerunning with the same seed reproduces every artifact bit for bit") {
        std::filesystem::create_directories(tmp.file("again"));
        const auto r2 = run_cli(tmp, score_args(tmp, "again/scores.tsv"));
        REQUIRE(r2.exit_code == 0);
        for (const char* name : {"scores.tsv", "scores.ck5.catm", "scores.src.vocab"})
            CHECK(sha256_file_hex(tmp.file(name)) ==
                  sha256_file_hex(tmp.file(std::string("again/") + name)));
    }
    SECTION("worker count does not change the matrix") {
        std::filesystem::create_directories(tmp.file("t1"));
        std::filesystem::create_directories(tmp.file("t8"));
        const auto r1 = run_cli(tmp, score_args(tmp, "t1/scores.tsv"), "CAT_PRUNE_THREADS=1");
        const auto r8 = run_cli(tmp, score_args(tmp, "t8/scores.tsv"), "CAT_PRUNE_THREADS=8");
        REQUIRE(r1.exit_code == 0);
        REQUIRE(r8.exit_code == 0);
        CHECK(sha256_file_hex(tmp.file("t1/scores.tsv")) ==
              sha256_file_hex(tmp.file("t8/scores.tsv")));
    }
}

TEST_CASE("score validates snapshot epochs against the training length", "[cli]") {
    TempDir tmp;
    write_corpus(tmp);
    const auto r = run_cli(tmp, score_args(tmp, "m.tsv", "--snapshot-epochs 7"));
    CHECK(r.exit_code == 2);
    CHECK_THAT(r.err, ContainsSubstring("snapshot epoch beyond training"));
}

TEST_CASE("select turns a score matrix into a deterministic id file", "[cli]") {
    TempDir tmp;
    write_corpus(tmp);
    REQUIRE(run_cli(tmp, score_args(tmp, "scores.tsv")).exit_code == 0);
    const std::string scores = q(tmp.file("scores.tsv"));

    SECTION("cat-diff agrees with the library and is idempotent") {
        const auto r = run_cli(tmp, "select --method cat-diff --scores " + scores +
                                        " --keep 0.5 --out " + q(tmp.file("sel.txt")) +
                                        " --emit-keys " + q(tmp.file("keys.tsv")));
        INFO(r.err);
        REQUIRE(r.exit_code == 0);

        const auto ids = read_indices(tmp.file("sel.txt"));
        CHECK(ids.size() == selection_size(kSrcLines.size(), 0.5));
        CHECK(std::is_sorted(ids.begin(), ids.end()));

        SelectionSpec spec;
        spec.method = SelectionMethod::cat_diff;
        spec.keep_fraction = 0.5;
        const auto expected = cat_diff_select(read_matrix(tmp.file("scores.tsv")), spec);
        CHECK(ids == expected.kept);

        CHECK_THAT(read_file(tmp.file("keys.tsv")), ContainsSubstring("id\tkey\n"));

        const auto r2 = run_cli(tmp, "select --method cat-diff --scores " + scores +
                                         " --keep 0.5 --out " + q(tmp.file("sel2.txt")));
        REQUIRE(r2.exit_code == 0);
        CHECK(read_file(tmp.file("sel.txt")) == read_file(tmp.file("sel2.txt")));
    }
    SECTION("cat-var accepts explicit checkpoints") {
        const auto r = run_cli(tmp, "select --method cat-var --scores " + scores +
                                        " --keep 0.25 --checkpoints 1,3,5 --out " +
                                        q(tmp.file("sel.txt")));
        REQUIRE(r.exit_code == 0);
        CHECK(read_indices(tmp.file("sel.txt")).size() == selection_size(kSrcLines.size(), 0.25));
    }
    SECTION("random requires a seed") {
        const auto r = run_cli(tmp, "select --method random --scores " + scores +
                                        " --keep 0.5 --out " + q(tmp.file("sel.txt")));
        CHECK(r.exit_code == 2);
        CHECK_THAT(r.err, ContainsSubstring("method random requires --seed"));
    }
    SECTION("random from --n matches random from the matrix row count") {
        const auto a = run_cli(tmp, "select --method random --scores " + scores +
                                        " --keep 0.5 --seed 11 --out " + q(tmp.file("a.txt")));
        const auto b = run_cli(tmp, "select --method random --n 16 --keep 0.5 --seed 11 --out " +
                                        q(tmp.file("b.txt")));
        REQUIRE(a.exit_code == 0);
        REQUIRE(b.exit_code == 0);
        CHECK(read_file(tmp.file("a.txt")) == read_file(tmp.file("b.txt")));
    }
    SECTION("usage failures exit 2") {
        CHECK(run_cli(tmp, "select --method cat-diff --keep 0.5 --out x").exit_code == 2);
        CHECK(run_cli(tmp, "select --method cat-diff --scores " + scores +
                               " --keep 0.5 --checkpoints 1 --out x")
                  .exit_code == 2);
        CHECK(run_cli(tmp, "select --method cat-diff --scores " + scores +
                               " --keep 0 --out x")
                  .exit_code == 2);
        CHECK(run_cli(tmp, "select --method ext-top --keep 0.5 --out x").exit_code == 2);
        CHECK(run_cli(tmp, "select --method cat-diff --scores " + scores +
                               " --checkpoints 2,5 --keep 0.5 --out x")
                  .exit_code == 2); // checkpoint 2 was never snapshotted
    }
}

TEST_CASE("subset materializes kept pairs byte for byte", "[cli]") {
    TempDir tmp;
    write_corpus(tmp);
    write_file(tmp.file("keep.txt"), "1\n3\n7\n");

    const auto r = run_cli(tmp, "subset --src " + q(tmp.file("c.src")) + " --tgt " +
                                    q(tmp.file("c.tgt")) + " --indices " + q(tmp.file("keep.txt")) +
                                    " --out-src " + q(tmp.file("sub.src")) + " --out-tgt " +
                                    q(tmp.file("sub.tgt")));
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    CHECK(read_file(tmp.file("sub.src")) == kSrcLines[1] + "\n" + kSrcLines[3] + "\n" +
                                                kSrcLines[7] + "\n");
    CHECK(read_file(tmp.file("sub.tgt")) == kTgtLines[1] + "\n" + kTgtLines[3] + "\n" +
                                                kTgtLines[7] + "\n");
    CHECK(std::filesystem::exists(tmp.file("sub.linemap.tsv")));
    CHECK(std::filesystem::exists(tmp.file("sub.src.manifest.json")));

    SECTION("an empty selection warns but still writes empty files") {
        write_file(tmp.file("none.txt"), "");
        const auto e = run_cli(tmp, "subset --src " + q(tmp.file("c.src")) + " --tgt " +
                                        q(tmp.file("c.tgt")) + " --indices " +
                                        q(tmp.file("none.txt")) + " --out-src " +
                                        q(tmp.file("e.src")) + " --out-tgt " + q(tmp.file("e.tgt")));
        CHECK(e.exit_code == 0);
        CHECK_THAT(e.err, ContainsSubstring("empty selection"));
        CHECK(read_file(tmp.file("e.src")).empty());
    }
    SECTION("out-of-range indices exit 2") {
        write_file(tmp.file("bad.txt"), "99\n");
        const auto e = run_cli(tmp, "subset --src " + q(tmp.file("c.src")) + " --tgt " +
                                        q(tmp.file("c.tgt")) + " --indices " +
                                        q(tmp.file("bad.txt")) + " --out-src " +
                                        q(tmp.file("e.src")) + " --out-tgt " + q(tmp.file("e.tgt")));
        CHECK(e.exit_code == 2);
    }
}

TEST_CASE("noise command rewrites targets and records a manifest", "[cli]") {
    TempDir tmp;
    write_corpus(tmp);

    const auto r = run_cli(tmp, "noise --src " + q(tmp.file("c.src")) + " --tgt " +
                                    q(tmp.file("c.tgt")) + " --copied 0.25 --seed 9 --out-src " +
                                    q(tmp.file("n.src")) + " --out-tgt " + q(tmp.file("n.tgt")));
    INFO(r.err);
    REQUIRE(r.exit_code == 0);

    CHECK(read_file(tmp.file("n.src")) == joined(kSrcLines)); // sources never change

    const auto m = nlohmann::json::parse(read_file(tmp.file("n.noise.json")));
    CHECK(m.at("counts").at("copied").get<int>() == 4); // 0.25 of 16
    CHECK(m.at("counts").at("clean").get<int>() == 12);
    CHECK(m.at("flags").size() == 16);

    SECTION("same seed reproduces the same bytes") {
        const auto r2 = run_cli(tmp, "noise --src " + q(tmp.file("c.src")) + " --tgt " +
                                         q(tmp.file("c.tgt")) +
                                         " --copied 0.25 --seed 9 --out-src " +
                                         q(tmp.file("n2.src")) + " --out-tgt " +
                                         q(tmp.file("n2.tgt")));
        REQUIRE(r2.exit_code == 0);
        CHECK(read_file(tmp.file("n.tgt")) == read_file(tmp.file("n2.tgt")));
    }
    SECTION("impossible counts exit 2") {
        const auto e = run_cli(tmp, "noise --src " + q(tmp.file("c.src")) + " --tgt " +
                                        q(tmp.file("c.tgt")) +
                                        " --misaligned 0.06 --seed 9 --out-src " +
                                        q(tmp.file("x.src")) + " --out-tgt " + q(tmp.file("x.tgt")));
        CHECK(e.exit_code == 2); // rounds to a single misaligned pair
        CHECK_THAT(e.err, ContainsSubstring("derangement impossible"));
    }
}

TEST_CASE("eval prints metric json to stdout", "[cli]") {
    TempDir tmp;
    write_file(tmp.file("hyp.txt"), "the cat sat on the mat\nthe dog ran fast\n");
    write_file(tmp.file("ref.txt"), "the cat sat on the mat\nthe dog ran fast\n");
    write_file(tmp.file("base.txt"), "zz qq ww vv uu tt\nxx yy aa bb\n");

    SECTION("bleu on identical files is exactly 100") {
        const auto r = run_cli(tmp, "eval --hyp " + q(tmp.file("hyp.txt")) + " --ref " +
                                        q(tmp.file("ref.txt")));
        REQUIRE(r.exit_code == 0);
        const auto j = nlohmann::json::parse(r.out);
        CHECK(j.at("metric") == "bleu");
        CHECK(j.at("value").get<double>() == 100.0);
    }
    SECTION("chrfpp metric is selectable") {
        const auto r = run_cli(tmp, "eval --metric chrfpp --hyp " + q(tmp.file("hyp.txt")) +
                                        " --ref " + q(tmp.file("ref.txt")));
        REQUIRE(r.exit_code == 0);
        const auto j = nlohmann::json::parse(r.out);
        CHECK(j.at("metric") == "chrfpp");
        CHECK(j.at("value").get<double>() == 100.0);
    }
    SECTION("baseline comparison adds a bootstrap block") {
        const auto r = run_cli(tmp, "eval --hyp " + q(tmp.file("hyp.txt")) + " --ref " +
                                        q(tmp.file("ref.txt")) + " --baseline-hyp " +
                                        q(tmp.file("base.txt")) + " --bootstrap 50 --seed 4");
        REQUIRE(r.exit_code == 0);
        const auto j = nlohmann::json::parse(r.out);
        CHECK(j.at("bootstrap").at("p_value").get<double>() == 0.0);
        CHECK(j.at("bootstrap").at("resamples").get<int>() == 50);
    }
    SECTION("usage failures exit 2") {
        const auto zero = run_cli(tmp, "eval --hyp " + q(tmp.file("hyp.txt")) + " --ref " +
                                           q(tmp.file("ref.txt")) + " --bootstrap 0");
        CHECK(zero.exit_code == 2);
        CHECK_THAT(zero.err, ContainsSubstring("at least 1 resample"));

        write_file(tmp.file("short.txt"), "one line only\n");
        const auto mism = run_cli(tmp, "eval --hyp " + q(tmp.file("hyp.txt")) + " --ref " +
                                           q(tmp.file("short.txt")));
        CHECK(mism.exit_code == 2);
        CHECK_THAT(mism.err, ContainsSubstring("does not match reference count"));
    }
}

TEST_CASE("analyze writes a report and an optional score join", "[cli]") {
    TempDir tmp;
    write_corpus(tmp);

    const auto r = run_cli(tmp, "analyze --src " + q(tmp.file("c.src")) + " --tgt " +
                                    q(tmp.file("c.tgt")) + " --out " + q(tmp.file("rep.json")));
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    const auto j = nlohmann::json::parse(read_file(tmp.file("rep.json")));
    CHECK(j.at("n_pairs").get<std::size_t>() == 16);
    CHECK(j.at("subset").get<bool>() == false);
    CHECK(j.contains("source"));
    CHECK(j.contains("target"));
    CHECK(j.at("input_hashes").size() == 2);

    SECTION("subset analysis via an indices file") {
        write_file(tmp.file("keep.txt"), "0\n1\n2\n3\n");
        const auto s = run_cli(tmp, "analyze --src " + q(tmp.file("c.src")) + " --tgt " +
                                        q(tmp.file("c.tgt")) + " --indices " +
                                        q(tmp.file("keep.txt")) + " --out " +
                                        q(tmp.file("sub.json")));
        REQUIRE(s.exit_code == 0);
        const auto js = nlohmann::json::parse(read_file(tmp.file("sub.json")));
        CHECK(js.at("n_pairs").get<std::size_t>() == 4);
        CHECK(js.at("subset").get<bool>() == true);
    }
    SECTION("join requires scores") {
        const auto e = run_cli(tmp, "analyze --src " + q(tmp.file("c.src")) + " --tgt " +
                                        q(tmp.file("c.tgt")) + " --out " + q(tmp.file("x.json")) +
                                        " --join " + q(tmp.file("j.tsv")));
        CHECK(e.exit_code == 2);
        CHECK_THAT(e.err, ContainsSubstring("--join requires --scores"));
    }
    SECTION("join lines cover the corpus when scores are supplied") {
        REQUIRE(run_cli(tmp, score_args(tmp, "scores.tsv")).exit_code == 0);
        const auto s = run_cli(tmp, "analyze --src " + q(tmp.file("c.src")) + " --tgt " +
                                        q(tmp.file("c.tgt")) + " --scores " +
                                        q(tmp.file("scores.tsv")) + " --out " +
                                        q(tmp.file("rep2.json")) + " --join " +
                                        q(tmp.file("join.tsv")));
        REQUIRE(s.exit_code == 0);
        const auto join = read_file(tmp.file("join.tsv"));
        CHECK_THAT(join, ContainsSubstring("id\tsource_len\ttarget_len"));
        CHECK(std::count(join.begin(), join.end(), '\n') == 17); // header + 16 rows
    }
}

TEST_CASE("config files supply defaults that flags override", "[cli]") {
    TempDir tmp;
    write_corpus(tmp);
    write_file(tmp.file("cfg.json"), "{\"score\": {\"embed-dim\": 6, \"seed\": 123}}\n");

    const auto r = run_cli(tmp, "score --config " + q(tmp.file("cfg.json")) + " --src " +
                                    q(tmp.file("c.src")) + " --tgt " + q(tmp.file("c.tgt")) +
                                    " --epochs 5 --batch-size 4 --hidden-dim 6 --out " +
                                    q(tmp.file("a.tsv")));
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    const auto ma = nlohmann::json::parse(read_file(tmp.file("a.tsv.manifest.json")));
    CHECK(ma.at("config").at("model").at("embed_dim").get<int>() == 6);
    CHECK(ma.at("config").at("seed").get<int>() == 123);

    const auto r2 = run_cli(tmp, "score --config " + q(tmp.file("cfg.json")) + " --embed-dim 8" +
                                     " --src " + q(tmp.file("c.src")) + " --tgt " +
                                     q(tmp.file("c.tgt")) +
                                     " --epochs 5 --batch-size 4 --hidden-dim 6 --out " +
                                     q(tmp.file("b.tsv")));
    INFO(r2.err);
    REQUIRE(r2.exit_code == 0);
    const auto mb = nlohmann::json::parse(read_file(tmp.file("b.tsv.manifest.json")));
    CHECK(mb.at("config").at("model").at("embed_dim").get<int>() == 8); // flag wins
    CHECK(mb.at("config").at("seed").get<int>() == 123);

    SECTION("config may precede the subcommand") {
        const auto r3 = run_cli(tmp, "--config " + q(tmp.file("cfg.json")) + " score --src " +
                                         q(tmp.file("c.src")) + " --tgt " + q(tmp.file("c.tgt")) +
                                         " --epochs 5 --batch-size 4 --hidden-dim 6 --out " +
                                         q(tmp.file("d.tsv")));
        INFO(r3.err);
        REQUIRE(r3.exit_code == 0);
        const auto md = nlohmann::json::parse(read_file(tmp.file("d.tsv.manifest.json")));
        CHECK(md.at("config").at("model").at("embed_dim").get<int>() == 6);
    }
    SECTION("unreadable config exits 2") {
        write_file(tmp.file("bad.json"), "not json at all");
        const auto e = run_cli(tmp, "score --config " + q(tmp.file("bad.json")) + " --src " +
                                        q(tmp.file("c.src")) + " --tgt " + q(tmp.file("c.tgt")) +
                                        " --out " + q(tmp.file("x.tsv")));
        CHECK(e.exit_code == 2);
        CHECK_THAT(e.err, ContainsSubstring("not valid JSON"));

        const auto gone = run_cli(tmp, "score --config " + q(tmp.file("nowhere.json")) +
                                           " --src " + q(tmp.file("c.src")) + " --tgt " +
                                           q(tmp.file("c.tgt")) + " --out " + q(tmp.file("y.tsv")));
        CHECK(gone.exit_code == 2);
    }
}

TEST_CASE("end-to-end pipeline produces a comparison report", "[cli]") {
    TempDir tmp;
    write_corpus(tmp);
    const std::string out_dir = tmp.file("run");

    const auto r = run_cli(
        tmp, "e2e --src " + q(tmp.file("c.src")) + " --tgt " + q(tmp.file("c.tgt")) +
                 " --methods cat-diff --keeps 0.5 --copied 0.2 --held-out 0.2 --seed 5" +
                 " --embed-dim 4 --hidden-dim 6 --epochs 2 --batch-size 4 --out-dir " + q(out_dir));
    INFO(r.err);
    REQUIRE(r.exit_code == 0);

    const auto report = nlohmann::json::parse(read_file(out_dir + "/report.json"));
    CHECK(report.at("n_pairs").get<int>() == 16);
    CHECK(report.at("n_test").get<int>() == 3); // round(0.2 * 16)
    CHECK(report.at("n_train").get<int>() == 13);
    REQUIRE(report.at("rows").size() == 2); // cat-diff@0.5 plus the full baseline
    for (const auto& row : report.at("rows")) {
        CHECK(row.at("bleu").get<double>() >= 0.0);
        CHECK(row.at("chrfpp").get<double>() >= 0.0);
        CHECK(row.at("clean_precision").get<double>() >= 0.0);
    }

    for (const char* name : {"noise.json", "train.src", "train.tgt", "test.src", "test.tgt",
                             "matrix.tsv", "sel_cat-diff_0.5.txt", "hyp_cat-diff_0.5.txt",
                             "hyp_full.txt"})
        CHECK(std::filesystem::exists(out_dir + "/" + name));

    SECTION("no partial files survive a successful run") {
        for (const auto& entry : std::filesystem::directory_iterator(out_dir))
            CHECK(entry.path().extension() != ".partial");
    }
}
