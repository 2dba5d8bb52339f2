// catprune: corpus pruning driven by perplexity trajectories across early
// training checkpoints, with baseline selectors, corpus analysis, noise
// injection, and MT metric evaluation. One binary, seven subcommands.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "catprune/analysis.hpp"
#include "catprune/corpus.hpp"
#include "catprune/errors.hpp"
#include "catprune/evalkit.hpp"
#include "catprune/manifest.hpp"
#include "catprune/model.hpp"
#include "catprune/model_io.hpp"
#include "catprune/scoring.hpp"
#include "catprune/selection.hpp"
#include "catprune/version.hpp"
#include "catprune/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// JSON config files with one top-level section per subcommand, e.g.
// {"score": {"embed-dim": 64, "seed": 7}}. Keys are long option names
// without the leading dashes; command-line flags always win over file
// values. Registered on the root app: CLI11 only reads config files
// attached there, never ones attached to subcommands.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override {
        return "{}\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        try {
            input >> j;
        } catch (const json::exception& e) {
            throw CLI::FileError(std::string("config is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::FileError("config root must be a JSON object");
        std::vector<CLI::ConfigItem> out;
        flatten({}, j, out);
        return out;
    }

private:
    static std::string render(const json& v) {
        return v.is_string() ? v.get<std::string>() : v.dump();
    }

    static void flatten(std::vector<std::string> parents, const json& j,
                        std::vector<CLI::ConfigItem>& out) {
        for (const auto& [key, val] : j.items()) {
            if (val.is_object()) {
                auto p = parents;
                p.push_back(key);
                flatten(std::move(p), val, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (val.is_array())
                for (const auto& v : val) item.inputs.push_back(render(v));
            else
                item.inputs.push_back(render(val));
            out.push_back(std::move(item));
        }
    }
};

// CAT_PRUNE_THREADS caps scoring workers; 0 or unset means auto.
unsigned env_thread_cap() {
    const char* raw = std::getenv("CAT_PRUNE_THREADS");
    if (raw == nullptr || *raw == '\0') return 0;
    const long long v = catprune::parse_int_strict(raw, "CAT_PRUNE_THREADS");
    if (v < 0) throw catprune::UsageError("CAT_PRUNE_THREADS must be >= 0");
    return static_cast<unsigned>(v);
}

struct CorpusArgs {
    std::string src, tgt, tsv;

    void add_flags(CLI::App* cmd) {
        auto* src_opt = cmd->add_option("--src", src, "source-side text file, one sentence per line");
        auto* tgt_opt = cmd->add_option("--tgt", tgt, "target-side text file, one sentence per line");
        auto* tsv_opt = cmd->add_option("--tsv", tsv, "single TSV corpus: source TAB target");
        src_opt->needs(tgt_opt);
        tgt_opt->needs(src_opt);
        tsv_opt->excludes(src_opt)->excludes(tgt_opt);
    }

    bool is_tsv() const { return !tsv.empty(); }

    void validate() const {
        if (tsv.empty() && (src.empty() || tgt.empty()))
            throw catprune::UsageError("provide either --src/--tgt or --tsv");
    }

    catprune::Corpus load() const {
        validate();
        return is_tsv() ? catprune::load_corpus_tsv(tsv) : catprune::load_corpus(src, tgt);
    }

    std::vector<std::string> paths() const {
        if (is_tsv()) return {tsv};
        return {src, tgt};
    }

    json to_json() const {
        if (is_tsv()) return {{"tsv", tsv}};
        return {{"src", src}, {"tgt", tgt}};
    }
};

struct ModelArgs {
    std::int64_t embed_dim = 32;
    std::int64_t hidden_dim = 64;
    std::int64_t context_k = 2;
    std::string optimizer = "sgd";
    double lr = 0.0; // resolved per optimizer when the flag is absent
    std::int64_t epochs = 5;
    std::int64_t batch_size = 64;
    double label_smoothing = 0.0;
    std::int64_t max_len = catprune::kDefaultMaxLen;
    std::int64_t vocab_size = 32000;
    std::int64_t min_freq = 1;
    CLI::Option* lr_opt = nullptr;

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--embed-dim", embed_dim, "embedding width")->capture_default_str();
        cmd->add_option("--hidden-dim", hidden_dim, "hidden layer width")->capture_default_str();
        cmd->add_option("--context-k", context_k, "previous target tokens conditioned on")
            ->capture_default_str();
        cmd->add_option("--optimizer", optimizer, "sgd or adam")
            ->check(CLI::IsMember({"sgd", "adam"}))
            ->capture_default_str();
        lr_opt = cmd->add_option("--lr", lr, "learning rate (default 0.1 sgd, 5e-4 adam)");
        cmd->add_option("--epochs", epochs, "training epochs")->capture_default_str();
        cmd->add_option("--batch-size", batch_size, "examples per update")->capture_default_str();
        cmd->add_option("--label-smoothing", label_smoothing, "uniform label smoothing epsilon")
            ->capture_default_str();
        cmd->add_option("--max-len", max_len, "token truncation length per side")
            ->capture_default_str();
        cmd->add_option("--vocab-size", vocab_size, "vocabulary cap including reserved ids")
            ->capture_default_str();
        cmd->add_option("--min-freq", min_freq, "minimum token frequency kept in vocabulary")
            ->capture_default_str();
    }

    catprune::ModelConfig config(std::int64_t v_s, std::int64_t v_t, std::uint64_t seed) const {
        catprune::ModelConfig cfg;
        cfg.embed_dim = embed_dim;
        cfg.hidden_dim = hidden_dim;
        cfg.context_k = context_k;
        cfg.src_vocab_size = v_s;
        cfg.tgt_vocab_size = v_t;
        cfg.seed = seed;
        cfg.optimizer =
            optimizer == "adam" ? catprune::Optimizer::adam : catprune::Optimizer::sgd;
        cfg.learning_rate = (lr_opt != nullptr && lr_opt->count() > 0)
                                ? lr
                                : catprune::ModelConfig::default_learning_rate(cfg.optimizer);
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        cfg.label_smoothing = label_smoothing;
        return cfg;
    }

    json to_json() const {
        return {{"embed_dim", embed_dim},
                {"hidden_dim", hidden_dim},
                {"context_k", context_k},
                {"optimizer", optimizer},
                {"lr", lr_opt != nullptr && lr_opt->count() > 0 ? json(lr) : json("default")},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"label_smoothing", label_smoothing},
                {"max_len", max_len},
                {"vocab_size", vocab_size},
                {"min_freq", min_freq}};
    }
};

std::string strip_extension(const std::string& path) {
    fs::path p(path);
    p.replace_extension();
    return p.string();
}

std::vector<std::string> read_segment_lines(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw catprune::Error("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

void write_lines(const std::vector<std::string>& lines, const std::string& path) {
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw catprune::Error("cannot open " + path + " for writing");
    for (const auto& l : lines) os << l << '\n';
    os.flush();
    if (!os) throw catprune::Error("write failed for " + path);
}

// Short decimal rendering for file tags (0.1 stays "0.1", not 17 digits).
std::string compact_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

void report_drops(const catprune::LoadSummary& summary) {
    if (summary.dropped() > 0)
        std::cerr << "note: dropped " << summary.dropped_empty << " blank and "
                  << summary.dropped_malformed << " malformed line pair(s)\n";
}

// ------------------------------------------------------------------ score

struct ScoreCmd {
    CorpusArgs corpus;
    ModelArgs model;
    std::string out;
    std::vector<std::int64_t> snapshot_epochs;
    std::uint64_t seed = 1;

    int run() {
        const auto t0 = std::chrono::steady_clock::now();
        if (snapshot_epochs.empty()) snapshot_epochs = {1, 3, 5};
        std::set<std::int64_t> wanted(snapshot_epochs.begin(), snapshot_epochs.end());

        auto loaded = corpus.load();
        report_drops(loaded.summary);
        if (loaded.pairs.empty()) throw catprune::UsageError("corpus is empty after cleaning");

        const auto src_vocab =
            catprune::build_vocab(loaded, catprune::Side::source, model.vocab_size, model.min_freq);
        const auto tgt_vocab =
            catprune::build_vocab(loaded, catprune::Side::target, model.vocab_size, model.min_freq);
        const auto tokenized = catprune::tokenize_corpus(loaded, src_vocab, tgt_vocab, model.max_len);

        const auto cfg = model.config(src_vocab.size(), tgt_vocab.size(), seed);
        auto trained = catprune::train(tokenized, cfg, wanted);
        const auto matrix = catprune::score_corpus(tokenized, trained.snapshots, env_thread_cap());
        catprune::write_matrix(matrix, out);

        const std::string stem = strip_extension(out);
        std::vector<std::string> outputs{out};
        for (const auto& [epoch, snap] : trained.snapshots) {
            const std::string path = stem + ".ck" + std::to_string(epoch) + ".catm";
            catprune::save_snapshot(snap, path);
            outputs.push_back(path);
        }
        src_vocab.save(stem + ".src.vocab");
        tgt_vocab.save(stem + ".tgt.vocab");
        outputs.push_back(stem + ".src.vocab");
        outputs.push_back(stem + ".tgt.vocab");
        catprune::write_linemap(loaded, stem + ".linemap.tsv");
        outputs.push_back(stem + ".linemap.tsv");

        catprune::RunManifest m;
        m.command = "score";
        m.config = {{"corpus", corpus.to_json()},
                    {"model", model.to_json()},
                    {"seed", seed},
                    {"snapshot_epochs", snapshot_epochs},
                    {"out", out}};
        for (const auto& p : corpus.paths()) catprune::add_input(m, p);
        for (const auto& p : outputs) catprune::add_output(m, p);
        m.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        catprune::write_manifest(m, catprune::manifest_path_for(out));

        std::cerr << "scored " << matrix.rows() << " examples at " << matrix.cols()
                  << " checkpoint(s)\n";
        return 0;
    }
};

// ----------------------------------------------------------------- select

struct SelectCmd {
    std::string scores_path, ext_scores_path;
    std::string method_str;
    double keep = 0.0;
    std::vector<std::int64_t> checkpoints;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string direction_str = "higher";
    std::string out, emit_keys;
    std::int64_t n_override = 0;

    int run() {
        const auto t0 = std::chrono::steady_clock::now();
        const auto method = catprune::parse_method(method_str);

        catprune::SelectionSpec spec;
        spec.method = method;
        spec.keep_fraction = keep;

        const bool is_cat = method == catprune::SelectionMethod::cat_diff ||
                            method == catprune::SelectionMethod::cat_var;
        const bool is_ext = method == catprune::SelectionMethod::ext_top ||
                            method == catprune::SelectionMethod::ext_band;
        if (is_cat && scores_path.empty())
            throw catprune::UsageError("method " + method_str + " requires --scores");
        if (is_ext && ext_scores_path.empty())
            throw catprune::UsageError("method " + method_str + " requires --ext-scores");
        if (!is_ext && !ext_scores_path.empty())
            throw catprune::UsageError("--ext-scores only applies to ext-top/ext-band");
        if (method == catprune::SelectionMethod::random && !seed_set)
            throw catprune::UsageError("method random requires --seed");

        catprune::SelectionResult result;
        std::string input_path;
        if (is_cat) {
            input_path = scores_path;
            const auto matrix = catprune::read_matrix(scores_path);
            if (method == catprune::SelectionMethod::cat_diff) {
                if (!checkpoints.empty()) {
                    if (checkpoints.size() != 2)
                        throw catprune::UsageError("cat-diff takes exactly 2 checkpoints");
                    spec.ck_early = checkpoints[0];
                    spec.ck_late = checkpoints[1];
                }
                result = catprune::cat_diff_select(matrix, spec);
            } else {
                if (!checkpoints.empty()) spec.checkpoints = checkpoints;
                result = catprune::cat_var_select(matrix, spec);
            }
        } else if (is_ext) {
            input_path = ext_scores_path;
            spec.direction = direction_str == "lower"
                                 ? catprune::ScoreDirection::lower_better
                                 : (direction_str == "band" ? catprune::ScoreDirection::band
                                                            : catprune::ScoreDirection::higher_better);
            if (method == catprune::SelectionMethod::ext_band)
                spec.direction = catprune::ScoreDirection::band;
            std::size_t n = static_cast<std::size_t>(n_override);
            if (n == 0) n = catprune::external_scores_extent(ext_scores_path);
            const auto ext = catprune::load_external_scores(ext_scores_path, spec.direction, n);
            result = catprune::ext_select(ext, spec);
        } else {
            spec.seed = seed;
            std::size_t n = static_cast<std::size_t>(n_override);
            if (n == 0 && !scores_path.empty()) {
                input_path = scores_path;
                n = catprune::read_matrix(scores_path).rows();
            }
            if (n == 0)
                throw catprune::UsageError("method random requires --scores or --n for the corpus size");
            result = catprune::random_select(n, spec);
        }

        catprune::write_selection(result, out);
        std::vector<std::string> outputs{out};
        if (!emit_keys.empty()) {
            catprune::write_keys(result, emit_keys);
            outputs.push_back(emit_keys);
        }

        catprune::RunManifest m;
        m.command = "select";
        m.config = {{"method", method_str},
                    {"keep", keep},
                    {"checkpoints", checkpoints},
                    {"seed", seed_set ? json(seed) : json(nullptr)},
                    {"direction", direction_str},
                    {"n", result.n},
                    {"k", result.k},
                    {"out", out}};
        if (!input_path.empty()) catprune::add_input(m, input_path);
        for (const auto& p : outputs) catprune::add_output(m, p);
        m.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        catprune::write_manifest(m, catprune::manifest_path_for(out));

        std::cerr << "kept " << result.k << " of " << result.n << " examples\n";
        return 0;
    }
};

// ----------------------------------------------------------------- subset

struct SubsetCmd {
    CorpusArgs corpus;
    std::string indices_path;
    std::string out_src, out_tgt, out_tsv;

    int run() {
        const auto t0 = std::chrono::steady_clock::now();
        auto loaded = corpus.load();
        report_drops(loaded.summary);
        const auto indices = catprune::read_indices(indices_path);
        if (indices.empty())
            std::cerr << "warning: empty selection, writing empty subset files\n";

        std::vector<std::string> outputs;
        std::string primary;
        if (corpus.is_tsv()) {
            if (out_tsv.empty()) throw catprune::UsageError("--tsv corpus requires --out-tsv");
            catprune::write_subset_tsv(loaded, indices, out_tsv);
            primary = out_tsv;
            outputs = {out_tsv};
        } else {
            if (out_src.empty() || out_tgt.empty())
                throw catprune::UsageError("paired corpus requires --out-src and --out-tgt");
            catprune::write_subset(loaded, indices, out_src, out_tgt);
            primary = out_src;
            outputs = {out_src, out_tgt};
        }
        const std::string linemap = strip_extension(primary) + ".linemap.tsv";
        catprune::write_linemap(loaded, linemap);
        outputs.push_back(linemap);

        catprune::RunManifest m;
        m.command = "subset";
        m.config = {{"corpus", corpus.to_json()},
                    {"indices", indices_path},
                    {"kept", indices.size()}};
        for (const auto& p : corpus.paths()) catprune::add_input(m, p);
        catprune::add_input(m, indices_path);
        for (const auto& p : outputs) catprune::add_output(m, p);
        m.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        catprune::write_manifest(m, catprune::manifest_path_for(primary));

        std::cerr << "materialized " << indices.size() << " pair(s)\n";
        return 0;
    }
};

// ---------------------------------------------------------------- analyze

struct AnalyzeCmd {
    CorpusArgs corpus;
    std::string indices_path, scores_path, out, join_out;
    std::int64_t bin_width = 1;
    std::int64_t rare_threshold = catprune::kDefaultRareThreshold;

    int run() {
        const auto t0 = std::chrono::steady_clock::now();
        auto loaded = corpus.load();
        report_drops(loaded.summary);
        if (loaded.pairs.empty()) throw catprune::UsageError("corpus is empty after cleaning");

        const auto src_freqs = catprune::build_frequency_table(loaded.pairs, catprune::Side::source);
        const auto tgt_freqs = catprune::build_frequency_table(loaded.pairs, catprune::Side::target);

        std::vector<catprune::SentencePair> subset = loaded.pairs;
        if (!indices_path.empty()) {
            const auto indices = catprune::read_indices(indices_path);
            catprune::check_indices(indices, loaded.size());
            subset.clear();
            for (const auto id : indices) subset.push_back(loaded.pairs[static_cast<std::size_t>(id)]);
        }

        const auto report =
            catprune::corpus_report(subset, src_freqs, tgt_freqs, bin_width, rare_threshold);
        json doc = catprune::report_to_json(report);
        doc["subset"] = !indices_path.empty();

        catprune::RunManifest m;
        m.command = "analyze";
        m.config = {{"corpus", corpus.to_json()},
                    {"indices", indices_path},
                    {"scores", scores_path},
                    {"bin_width", bin_width},
                    {"rare_threshold", rare_threshold}};
        for (const auto& p : corpus.paths()) catprune::add_input(m, p);
        if (!indices_path.empty()) catprune::add_input(m, indices_path);

        std::vector<std::string> outputs{out};
        if (!scores_path.empty()) {
            catprune::add_input(m, scores_path);
            json hashes = json::object();
            hashes[scores_path] = catprune::sha256_file_hex(scores_path);
            doc["score_inputs"] = hashes;
            if (!join_out.empty()) {
                const auto matrix = catprune::read_matrix(scores_path);
                catprune::write_score_length_join(matrix, loaded.pairs, join_out);
                outputs.push_back(join_out);
            }
        } else if (!join_out.empty()) {
            throw catprune::UsageError("--join requires --scores");
        }

        json input_hashes = json::object();
        for (const auto& p : corpus.paths()) input_hashes[p] = catprune::sha256_file_hex(p);
        doc["input_hashes"] = input_hashes;

        std::ofstream os(out, std::ios::trunc);
        if (!os) throw catprune::Error("cannot open " + out + " for writing");
        os << doc.dump(2) << '\n';
        os.flush();
        if (!os) throw catprune::Error("write failed for " + out);

        for (const auto& p : outputs) catprune::add_output(m, p);
        m.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        catprune::write_manifest(m, catprune::manifest_path_for(out));

        std::cerr << "analyzed " << subset.size() << " pair(s)\n";
        return 0;
    }
};

// ------------------------------------------------------------------ noise

struct NoiseCmd {
    CorpusArgs corpus;
    double misaligned = 0.0, copied = 0.0, truncated = 0.0;
    std::uint64_t seed = 0;
    std::string out_src, out_tgt, out_tsv, manifest_out;

    int run() {
        const auto t0 = std::chrono::steady_clock::now();
        auto loaded = corpus.load();
        report_drops(loaded.summary);
        if (loaded.pairs.empty()) throw catprune::UsageError("corpus is empty after cleaning");

        catprune::NoiseFractions fractions{misaligned, copied, truncated};
        auto noisy = catprune::inject_noise(loaded.pairs, fractions, seed);

        catprune::Corpus out_corpus = loaded;
        out_corpus.pairs = noisy.pairs;
        std::vector<std::int64_t> all_ids(out_corpus.pairs.size());
        for (std::size_t i = 0; i < all_ids.size(); ++i) all_ids[i] = static_cast<std::int64_t>(i);

        std::vector<std::string> outputs;
        std::string primary;
        if (corpus.is_tsv()) {
            if (out_tsv.empty()) throw catprune::UsageError("--tsv corpus requires --out-tsv");
            catprune::write_subset_tsv(out_corpus, all_ids, out_tsv);
            primary = out_tsv;
            outputs = {out_tsv};
        } else {
            if (out_src.empty() || out_tgt.empty())
                throw catprune::UsageError("paired corpus requires --out-src and --out-tgt");
            catprune::write_subset(out_corpus, all_ids, out_src, out_tgt);
            primary = out_src;
            outputs = {out_src, out_tgt};
        }
        if (manifest_out.empty()) manifest_out = strip_extension(primary) + ".noise.json";
        catprune::write_noise_manifest(noisy.manifest, manifest_out);
        outputs.push_back(manifest_out);

        catprune::RunManifest m;
        m.command = "noise";
        m.config = {{"corpus", corpus.to_json()},
                    {"misaligned", misaligned},
                    {"copied", copied},
                    {"truncated", truncated},
                    {"seed", seed}};
        for (const auto& p : corpus.paths()) catprune::add_input(m, p);
        for (const auto& p : outputs) catprune::add_output(m, p);
        m.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        catprune::write_manifest(m, catprune::manifest_path_for(primary));

        std::cerr << "flagged " << noisy.manifest.noisy_count() << " of "
                  << noisy.manifest.flags.size() << " pair(s) as noisy\n";
        return 0;
    }
};

// ------------------------------------------------------------------- eval

struct EvalCmd {
    std::string hyp_path, ref_path, baseline_path;
    std::string metric_str = "bleu";
    std::int64_t bootstrap = 1000;
    std::uint64_t seed = 1;

    int run() {
        if (bootstrap < 1) throw catprune::UsageError("bootstrap needs at least 1 resample");
        const auto metric = catprune::parse_metric(metric_str);
        const auto hyps = read_segment_lines(hyp_path);
        const auto refs = read_segment_lines(ref_path);
        if (hyps.size() != refs.size())
            throw catprune::UsageError("hypothesis count " + std::to_string(hyps.size()) +
                                       " does not match reference count " +
                                       std::to_string(refs.size()));

        json doc;
        if (metric == catprune::MetricKind::bleu)
            doc = catprune::bleu_to_json(catprune::bleu(hyps, refs));
        else
            doc = catprune::chrf_to_json(catprune::chrf_pp(hyps, refs));

        if (!baseline_path.empty()) {
            const auto baseline = read_segment_lines(baseline_path);
            const auto boot =
                catprune::paired_bootstrap(metric, hyps, baseline, refs, bootstrap, seed);
            doc["bootstrap"] = catprune::bootstrap_to_json(boot);
        }
        std::cout << doc.dump(2) << '\n';
        return 0;
    }
};

// -------------------------------------------------------------------- e2e

struct E2eCmd {
    CorpusArgs corpus;
    ModelArgs model;
    std::vector<std::string> methods{"cat-diff", "cat-var", "random"};
    std::vector<double> keeps{0.1, 0.3, 0.5};
    double misaligned = 0.0, copied = 0.0, truncated = 0.0;
    double held_out = 0.1;
    std::uint64_t seed = 1;
    std::string out_dir;

    // Per-stage output staging: files land as <path>.partial and are renamed
    // on stage success, so a failed stage leaves only .partial files behind.
    struct Stage {
        std::string name;
        std::vector<std::pair<std::string, std::string>> pending; // partial -> final

        std::string path(const std::string& final_path) {
            pending.emplace_back(final_path + ".partial", final_path);
            return pending.back().first;
        }
        void commit() {
            for (const auto& [partial, final_path] : pending) {
                std::error_code ec;
                fs::rename(partial, final_path, ec);
                if (ec)
                    throw catprune::Error("cannot finalize " + final_path + ": " + ec.message());
            }
            pending.clear();
        }
    };

    template <typename Fn>
    void stage(const std::string& name, Fn&& fn) {
        Stage s;
        s.name = name;
        try {
            fn(s);
            s.commit();
        } catch (const catprune::UsageError& e) {
            throw catprune::UsageError("stage " + name + " failed: " + e.what());
        } catch (const catprune::Error& e) {
            throw catprune::Error("stage " + name + " failed: " + e.what());
        } catch (const std::exception& e) {
            throw catprune::Error("stage " + name + " failed: " + e.what());
        }
    }

    int run() {
        const auto t0 = std::chrono::steady_clock::now();
        if (methods.empty() || keeps.empty())
            throw catprune::UsageError("--methods and --keeps must be non-empty");
        for (const auto& ms : methods) {
            const auto m = catprune::parse_method(ms);
            if (m != catprune::SelectionMethod::cat_diff &&
                m != catprune::SelectionMethod::cat_var &&
                m != catprune::SelectionMethod::random)
                throw catprune::UsageError(
                    "e2e supports cat-diff, cat-var and random (external scores need "
                    "precomputed files)");
        }
        for (const auto k : keeps)
            if (!(k > 0.0) || k > 1.0) throw catprune::UsageError("keeps must lie in (0, 1]");
        if (!(held_out > 0.0) || held_out >= 1.0)
            throw catprune::UsageError("--held-out must lie in (0, 1)");

        fs::create_directories(out_dir);
        const auto at = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

        // load + split: the held-out tail (by id) is never noised, scored,
        // or selected.
        catprune::Corpus loaded;
        std::vector<catprune::SentencePair> train_pairs, test_pairs;
        stage("load", [&](Stage&) {
            loaded = corpus.load();
            report_drops(loaded.summary);
            const auto n = loaded.size();
            if (n < 2) throw catprune::UsageError("need at least 2 pairs for a held-out split");
            auto n_test = static_cast<std::int64_t>(
                std::floor(held_out * static_cast<double>(n) + 0.5));
            n_test = std::max<std::int64_t>(1, std::min<std::int64_t>(n_test, n - 1));
            const auto n_train = n - n_test;
            train_pairs.assign(loaded.pairs.begin(), loaded.pairs.begin() + n_train);
            test_pairs.assign(loaded.pairs.begin() + n_train, loaded.pairs.end());
        });

        catprune::NoiseManifest noise_manifest;
        stage("noise", [&](Stage& s) {
            catprune::NoiseFractions fractions{misaligned, copied, truncated};
            auto noisy = catprune::inject_noise(train_pairs, fractions, seed);
            train_pairs = std::move(noisy.pairs);
            noise_manifest = std::move(noisy.manifest);
            catprune::write_noise_manifest(noise_manifest, s.path(at("noise.json")));

            std::vector<std::string> train_src, train_tgt, test_src, test_tgt;
            for (const auto& p : train_pairs) {
                train_src.push_back(p.source);
                train_tgt.push_back(p.target);
            }
            for (const auto& p : test_pairs) {
                test_src.push_back(p.source);
                test_tgt.push_back(p.target);
            }
            write_lines(train_src, s.path(at("train.src")));
            write_lines(train_tgt, s.path(at("train.tgt")));
            write_lines(test_src, s.path(at("test.src")));
            write_lines(test_tgt, s.path(at("test.tgt")));
        });

        // score the noisy training half
        catprune::Vocabulary src_vocab, tgt_vocab;
        std::vector<catprune::TokenizedPair> train_tok;
        std::map<std::int64_t, catprune::ModelSnapshot> snapshots;
        catprune::ScoreMatrix matrix;
        std::set<std::int64_t> snapshot_epochs{1, 3, 5};
        stage("score", [&](Stage& s) {
            catprune::Corpus train_corpus;
            train_corpus.pairs = train_pairs;
            for (std::size_t i = 0; i < train_pairs.size(); ++i) {
                train_corpus.pairs[i].id = static_cast<std::int64_t>(i);
                train_corpus.linemap.push_back(static_cast<std::int64_t>(i + 1));
            }
            src_vocab = catprune::build_vocab(train_corpus, catprune::Side::source,
                                              model.vocab_size, model.min_freq);
            tgt_vocab = catprune::build_vocab(train_corpus, catprune::Side::target,
                                              model.vocab_size, model.min_freq);
            train_tok = catprune::tokenize_corpus(train_corpus, src_vocab, tgt_vocab, model.max_len);

            std::set<std::int64_t> wanted;
            for (const auto e : snapshot_epochs)
                if (e <= model.epochs) wanted.insert(e);
            if (wanted.empty() || *wanted.rbegin() != model.epochs) wanted.insert(model.epochs);
            snapshot_epochs = wanted;

            const auto cfg = model.config(src_vocab.size(), tgt_vocab.size(), seed);
            auto trained = catprune::train(train_tok, cfg, wanted);
            snapshots = std::move(trained.snapshots);
            matrix = catprune::score_corpus(train_tok, snapshots, env_thread_cap());
            catprune::write_matrix(matrix, s.path(at("matrix.tsv")));
            src_vocab.save(s.path(at("src.vocab")));
            tgt_vocab.save(s.path(at("tgt.vocab")));
            for (const auto& [epoch, snap] : snapshots)
                catprune::save_snapshot(snap, s.path(at("ck" + std::to_string(epoch) + ".catm")));
        });

        // decode helper shared by every trained model
        std::vector<catprune::TokenizedPair> test_tok;
        std::vector<std::string> test_refs;
        for (const auto& p : test_pairs) test_refs.push_back(p.target);
        for (const auto& p : test_pairs) {
            catprune::SentencePair sp = p;
            test_tok.push_back(catprune::tokenize(sp, src_vocab, tgt_vocab, model.max_len));
        }
        const auto decode_all = [&](const catprune::ModelSnapshot& snap) {
            std::vector<std::string> hyps;
            hyps.reserve(test_tok.size());
            for (const auto& tp : test_tok) {
                const auto ids = catprune::greedy_decode(snap, tp.source_tokens, model.max_len);
                std::string line;
                for (std::size_t i = 0; i < ids.size(); ++i) {
                    if (i) line += ' ';
                    line += tgt_vocab.token(ids[i]);
                }
                hyps.push_back(std::move(line));
            }
            return hyps;
        };

        json rows = json::array();
        const auto evaluate_subset = [&](const std::string& row_name, double keep_value,
                                         const std::vector<std::int64_t>& kept,
                                         const std::string& tag) {
            std::vector<catprune::TokenizedPair> subset;
            subset.reserve(kept.size());
            for (const auto id : kept) subset.push_back(train_tok[static_cast<std::size_t>(id)]);

            catprune::ModelSnapshot final_snap;
            stage("retrain " + tag, [&](Stage&) {
                const auto cfg = model.config(src_vocab.size(), tgt_vocab.size(), seed);
                auto trained = catprune::train(subset, cfg, {});
                final_snap = std::move(trained.final_snapshot);
            });

            std::vector<std::string> hyps;
            stage("decode " + tag, [&](Stage& s) {
                hyps = decode_all(final_snap);
                write_lines(hyps, s.path(at("hyp_" + tag + ".txt")));
            });

            stage("evaluate " + tag, [&](Stage&) {
                const auto b = catprune::bleu(hyps, test_refs);
                const auto c = catprune::chrf_pp(hyps, test_refs);
                const auto retention = catprune::retention_metrics(kept, noise_manifest);
                rows.push_back({{"method", row_name},
                                {"keep", keep_value},
                                {"k", kept.size()},
                                {"bleu", b.value},
                                {"chrfpp", c.value},
                                {"clean_precision", retention.clean_precision},
                                {"noise_recall", retention.noise_recall}});
            });
        };

        for (const auto& method_str : methods) {
            const auto method = catprune::parse_method(method_str);
            for (const auto keep : keeps) {
                const std::string tag = method_str + "_" + compact_double(keep);
                catprune::SelectionSpec spec;
                spec.method = method;
                spec.keep_fraction = keep;
                spec.seed = seed;

                catprune::SelectionResult sel;
                stage("select " + tag, [&](Stage& s) {
                    if (method == catprune::SelectionMethod::cat_diff) {
                        spec.ck_early = 1;
                        spec.ck_late = *snapshot_epochs.rbegin();
                        sel = catprune::cat_diff_select(matrix, spec);
                    } else if (method == catprune::SelectionMethod::cat_var) {
                        spec.checkpoints.assign(snapshot_epochs.begin(), snapshot_epochs.end());
                        sel = catprune::cat_var_select(matrix, spec);
                    } else {
                        sel = catprune::random_select(train_tok.size(), spec);
                    }
                    catprune::write_selection(sel, s.path(at("sel_" + tag + ".txt")));
                });
                evaluate_subset(method_str, keep, sel.kept, tag);
            }
        }

        // full baseline: train on the entire noisy training half
        std::vector<std::int64_t> all_ids(train_tok.size());
        for (std::size_t i = 0; i < all_ids.size(); ++i) all_ids[i] = static_cast<std::int64_t>(i);
        evaluate_subset("full", 1.0, all_ids, "full");

        stage("report", [&](Stage& s) {
            json doc = {{"n_pairs", loaded.size()},
                        {"n_train", train_pairs.size()},
                        {"n_test", test_pairs.size()},
                        {"held_out", held_out},
                        {"seed", seed},
                        {"noise", catprune::noise_manifest_to_json(noise_manifest)["counts"]},
                        {"rows", rows}};
            const std::string path = s.path(at("report.json"));
            std::ofstream os(path, std::ios::trunc);
            if (!os) throw catprune::Error("cannot open " + path + " for writing");
            os << doc.dump(2) << '\n';
            os.flush();
            if (!os) throw catprune::Error("write failed for " + path);
        });

        catprune::RunManifest m;
        m.command = "e2e";
        m.config = {{"corpus", corpus.to_json()}, {"model", model.to_json()},
                    {"methods", methods},         {"keeps", keeps},
                    {"misaligned", misaligned},   {"copied", copied},
                    {"truncated", truncated},     {"held_out", held_out},
                    {"seed", seed},               {"out_dir", out_dir}};
        for (const auto& p : corpus.paths()) catprune::add_input(m, p);
        for (const auto& entry : fs::directory_iterator(out_dir)) {
            if (!entry.is_regular_file()) continue;
            const auto name = entry.path().filename().string();
            if (name.ends_with(".manifest.json")) continue;
            catprune::add_output(m, entry.path().string());
        }
        std::sort(m.output_hashes.begin(), m.output_hashes.end());
        m.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        catprune::write_manifest(m, catprune::manifest_path_for(at("report.json")));

        std::cerr << "e2e complete: " << rows.size() << " row(s) in "
                  << at("report.json") << '\n';
        return 0;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"corpus pruning by perplexity trajectories across training checkpoints"};
    app.set_version_flag("--version", std::string(catprune::kToolName) + " " +
                                          catprune::kToolVersion);
    app.require_subcommand(1);
    // Subcommands inherit fallthrough at creation, so `catprune score --config f`
    // routes --config up to the root app, the only place CLI11 reads configs.
    app.fallthrough();
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "",
                   "JSON config file, one section per subcommand; flags take precedence");

    ScoreCmd score_cmd;
    SelectCmd select_cmd;
    SubsetCmd subset_cmd;
    AnalyzeCmd analyze_cmd;
    NoiseCmd noise_cmd;
    EvalCmd eval_cmd;
    E2eCmd e2e_cmd;

    {
        auto* cmd = app.add_subcommand("score",
                                       "train the tiny scorer and write the perplexity matrix");
        score_cmd.corpus.add_flags(cmd);
        score_cmd.model.add_flags(cmd);
        cmd->add_option("--out", score_cmd.out, "score-matrix TSV path")->required();
        cmd->add_option("--snapshot-epochs", score_cmd.snapshot_epochs,
                        "epochs to snapshot and score (default 1,3,5)")
            ->delimiter(',');
        cmd->add_option("--seed", score_cmd.seed, "training seed")->capture_default_str();
        cmd->callback([&] { score_cmd.run(); });
    }
    {
        auto* cmd = app.add_subcommand("select", "turn scores into a kept-id index file");
        cmd->add_option("--scores", select_cmd.scores_path, "score-matrix TSV");
        cmd->add_option("--ext-scores", select_cmd.ext_scores_path,
                        "external per-example scores: id TAB score");
        cmd->add_option("--method", select_cmd.method_str,
                        "cat-diff | cat-var | random | ext-top | ext-band")
            ->required();
        cmd->add_option("--keep", select_cmd.keep, "keep fraction in (0, 1]")->required();
        cmd->add_option("--checkpoints", select_cmd.checkpoints,
                        "checkpoint epochs (cat-diff: early,late; cat-var: list)")
            ->delimiter(',');
        auto* seed_opt = cmd->add_option("--seed", select_cmd.seed, "seed (required for random)");
        cmd->add_option("--direction", select_cmd.direction_str,
                        "ext score direction: higher | lower | band")
            ->check(CLI::IsMember({"higher", "lower", "band"}))
            ->capture_default_str();
        cmd->add_option("--n", select_cmd.n_override,
                        "corpus size (random without --scores; validates ext files)");
        cmd->add_option("--out", select_cmd.out, "kept-id output file")->required();
        cmd->add_option("--emit-keys", select_cmd.emit_keys, "also write id TAB key TSV");
        cmd->callback([&, seed_opt] {
            select_cmd.seed_set = seed_opt->count() > 0;
            select_cmd.run();
        });
    }
    {
        auto* cmd = app.add_subcommand("subset", "materialize kept pairs byte-for-byte");
        subset_cmd.corpus.add_flags(cmd);
        cmd->add_option("--indices", subset_cmd.indices_path, "kept-id file, one id per line")
            ->required();
        cmd->add_option("--out-src", subset_cmd.out_src, "subset source output");
        cmd->add_option("--out-tgt", subset_cmd.out_tgt, "subset target output");
        cmd->add_option("--out-tsv", subset_cmd.out_tsv, "subset TSV output");
        cmd->callback([&] { subset_cmd.run(); });
    }
    {
        auto* cmd = app.add_subcommand("analyze", "corpus / subset statistics report");
        analyze_cmd.corpus.add_flags(cmd);
        cmd->add_option("--indices", analyze_cmd.indices_path, "restrict stats to these ids");
        cmd->add_option("--scores", analyze_cmd.scores_path, "score matrix for the length join");
        cmd->add_option("--out", analyze_cmd.out, "report JSON path")->required();
        cmd->add_option("--join", analyze_cmd.join_out, "id/length/score join TSV path");
        cmd->add_option("--bin-width", analyze_cmd.bin_width, "length histogram bin width")
            ->capture_default_str();
        cmd->add_option("--rare-threshold", analyze_cmd.rare_threshold,
                        "full-corpus frequency at or below which a type counts as rare")
            ->capture_default_str();
        cmd->callback([&] { analyze_cmd.run(); });
    }
    {
        auto* cmd = app.add_subcommand("noise", "inject synthetic noise into a corpus");
        noise_cmd.corpus.add_flags(cmd);
        cmd->add_option("--misaligned", noise_cmd.misaligned, "fraction of misaligned targets")
            ->capture_default_str();
        cmd->add_option("--copied", noise_cmd.copied, "fraction of copy-through targets")
            ->capture_default_str();
        cmd->add_option("--truncated", noise_cmd.truncated, "fraction of truncated targets")
            ->capture_default_str();
        cmd->add_option("--seed", noise_cmd.seed, "noise seed")->required();
        cmd->add_option("--out-src", noise_cmd.out_src, "noisy source output");
        cmd->add_option("--out-tgt", noise_cmd.out_tgt, "noisy target output");
        cmd->add_option("--out-tsv", noise_cmd.out_tsv, "noisy TSV output");
        cmd->add_option("--manifest", noise_cmd.manifest_out,
                        "noise manifest JSON path (default <out>.noise.json)");
        cmd->callback([&] { noise_cmd.run(); });
    }
    {
        auto* cmd = app.add_subcommand("eval", "BLEU / chrF++ with optional paired bootstrap");
        cmd->add_option("--hyp", eval_cmd.hyp_path, "hypothesis file, one segment per line")
            ->required();
        cmd->add_option("--ref", eval_cmd.ref_path, "reference file, one segment per line")
            ->required();
        cmd->add_option("--metric", eval_cmd.metric_str, "bleu | chrfpp")
            ->check(CLI::IsMember({"bleu", "chrfpp"}))
            ->capture_default_str();
        cmd->add_option("--baseline-hyp", eval_cmd.baseline_path,
                        "baseline hypotheses for significance testing");
        cmd->add_option("--bootstrap", eval_cmd.bootstrap, "bootstrap resamples")
            ->capture_default_str();
        cmd->add_option("--seed", eval_cmd.seed, "bootstrap seed")->capture_default_str();
        cmd->callback([&] { eval_cmd.run(); });
    }
    {
        auto* cmd = app.add_subcommand(
            "e2e", "noise, score, select, retrain, decode, and evaluate in one run");
        e2e_cmd.corpus.add_flags(cmd);
        e2e_cmd.model.add_flags(cmd);
        cmd->add_option("--methods", e2e_cmd.methods, "selection methods to compare")
            ->delimiter(',')
            ->capture_default_str();
        cmd->add_option("--keeps", e2e_cmd.keeps, "keep fractions to sweep")
            ->delimiter(',')
            ->capture_default_str();
        cmd->add_option("--misaligned", e2e_cmd.misaligned, "fraction of misaligned targets")
            ->capture_default_str();
        cmd->add_option("--copied", e2e_cmd.copied, "fraction of copy-through targets")
            ->capture_default_str();
        cmd->add_option("--truncated", e2e_cmd.truncated, "fraction of truncated targets")
            ->capture_default_str();
        cmd->add_option("--held-out", e2e_cmd.held_out,
                        "fraction of clean pairs held out (by trailing id)")
            ->capture_default_str();
        cmd->add_option("--seed", e2e_cmd.seed, "seed for noise, training and selection")
            ->capture_default_str();
        cmd->add_option("--out-dir", e2e_cmd.out_dir, "artifact directory")->required();
        cmd->callback([&] { e2e_cmd.run(); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const catprune::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const catprune::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
