// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hopsearch/cli.hpp"
#include "hopsearch/dense_index.hpp"
#include "hopsearch/encoder.hpp"
#include "hopsearch/eval.hpp"
#include "hopsearch/lexical_index.hpp"
#include "hopsearch/multihop.hpp"
#include "hopsearch/trainer.hpp"

using namespace hopsearch;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;
using Tokens = std::vector<std::string>;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        if (pass) detail = why;
        pass = false;
    }
};

class ScratchDir {
public:
    explicit ScratchDir(const std::string& name)
        : path_(fs::temp_directory_path() / ("hopsearch_acceptance_" + std::to_string(::getpid()) + "_" + name)) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;
    [[nodiscard]] std::string operator/(const std::string& name) const { return (path_ / name).string(); }
    [[nodiscard]] std::string str() const { return path_.string(); }

private:
    fs::path path_;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void cli_or_throw(const std::vector<std::string>& args, std::string* stdout_text = nullptr) {
    std::ostringstream out, err;
    if (run_cli(args, out, err) != 0) {
        throw std::runtime_error(args.front() + " failed: " + err.str());
    }
    if (stdout_text) *stdout_text = out.str();
}

// ---------------------------------------------------------------- BM25

Verdict bm25_oracle() {
    Verdict v;
    const auto start = Clock::now();
    std::mt19937_64 rng(2024);
    double worst = 0;
    for (int c = 0; c < 25; ++c) {
        const std::size_t n = 1 + rng() % 100;
        const std::size_t vocab = 5 + rng() % 60;
        Corpus corpus;
        for (std::size_t i = 0; i < n; ++i) {
            std::string text;
            const std::size_t len = 1 + rng() % 30;
            for (std::size_t j = 0; j < len; ++j) text += "t" + std::to_string(rng() % vocab) + " ";
            corpus.add_passage("d" + std::to_string(rng() % 100000) + "_" + std::to_string(i), "", text);
        }
        const auto index = LexicalIndex::build(corpus);

        // Independent scalar evaluation of the Lucene-style formula, k1 = 0.9, b = 0.4.
        std::map<std::string, double> df;
        std::vector<std::map<std::string, double>> tf(n);
        double total_len = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& p = corpus.passages()[i];
            total_len += static_cast<double>(p.tokens.size());
            for (const auto& t : p.tokens) tf[i][t] += 1;
            for (const auto& [t, count] : tf[i]) df[t] += 1;
        }
        const double avgdl = total_len / static_cast<double>(n);
        for (int qi = 0; qi < 100; ++qi) {
            Tokens query;
            const std::size_t qlen = 1 + rng() % 6;
            for (std::size_t j = 0; j < qlen; ++j) query.push_back("t" + std::to_string(rng() % (vocab + 5)));
            std::vector<std::pair<double, std::string>> expected;
            for (std::size_t i = 0; i < n; ++i) {
                const auto& p = corpus.passages()[i];
                std::set<std::string> seen;
                double score = 0;
                for (const auto& t : query) {
                    if (!seen.insert(t).second || !df.contains(t) || !tf[i].contains(t)) continue;
                    const double idf = std::log(1.0 + (static_cast<double>(n) - df[t] + 0.5) / (df[t] + 0.5));
                    const double f = tf[i][t];
                    const double dl = static_cast<double>(p.tokens.size());
                    score += idf * f * 1.9 / (f + 0.9 * (0.6 + 0.4 * dl / avgdl));
                }
                if (score > 0) expected.emplace_back(score, p.id);
            }
            std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
                return a.first != b.first ? a.first > b.first : a.second < b.second;
            });
            const auto got = index.search(query, n);
            if (got.size() != expected.size()) {
                v.fail("result count differs");
                continue;
            }
            for (std::size_t r = 0; r < got.size(); ++r) {
                const double rel = std::abs(got[r].score - expected[r].first) / expected[r].first;
                worst = std::max(worst, rel);
                if (rel > 1e-9) v.fail("score off by " + std::to_string(rel));
                // Positions may swap only between oracle scores that tie within tolerance.
                if (got[r].id != expected[r].second &&
                    std::abs(got[r].score - expected[r].first) > 1e-9 * expected[r].first) {
                    v.fail("order differs");
                }
                const double direct = index.bm25_score(query, got[r].id);
                if (direct != got[r].score) v.fail("search score differs from bm25_score");
            }
        }
    }
    const double t = seconds_since(start);
    if (t >= 10.0) v.fail("took " + std::to_string(t) + " s");
    if (v.pass) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "max rel err %.2e, %.2f s", worst, t);
        v.detail = buf;
    }
    return v;
}

// ---------------------------------------------------------------- dense

Verdict dense_exactness() {
    Verdict v;
    const auto start = Clock::now();
    std::mt19937_64 rng(77);
    for (int inst = 0; inst < 50; ++inst) {
        const std::size_t n = inst == 0 ? 1000 : 1 + rng() % 1000;
        const std::uint32_t d = inst == 0 ? 64 : static_cast<std::uint32_t>(1 + rng() % 64);
        // Coarse values make exact score ties common.
        const bool coarse = inst % 2 == 0;
        auto value = [&] {
            return coarse ? static_cast<float>(static_cast<int>(rng() % 5) - 2)
                          : static_cast<float>(std::uniform_real_distribution<double>(-1, 1)(rng));
        };
        EmbeddingMatrix m(d);
        std::vector<float> row(d);
        for (std::size_t i = 0; i < n; ++i) {
            for (auto& x : row) x = value();
            m.append("r" + std::to_string((i * 7919) % 100003), row);
        }
        std::vector<float> query(d);
        for (auto& x : query) x = value();
        // Full scan oracle, argsort by (score desc, id asc).
        std::vector<std::pair<double, std::string>> all;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0;
            const auto r = m.row(i);
            for (std::uint32_t j = 0; j < d; ++j) s += static_cast<double>(query[j]) * static_cast<double>(r[j]);
            all.emplace_back(s, m.id(i));
        }
        std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        const DenseIndex index(std::move(m));
        for (const std::size_t k : {std::size_t{1}, std::size_t{10}, n}) {
            const auto got = index.search(query, k);
            if (got.size() != std::min(k, n)) v.fail("wrong result length");
            for (std::size_t r = 0; r < got.size(); ++r) {
                if (got[r].id != all[r].second || got[r].score != all[r].first) {
                    v.fail("instance " + std::to_string(inst) + " differs at rank " + std::to_string(r + 1));
                    break;
                }
            }
        }
    }
    const double t = seconds_since(start);
    if (t >= 5.0) v.fail("took " + std::to_string(t) + " s");
    if (v.pass) v.detail = std::to_string(t).substr(0, 5) + " s";
    return v;
}

// ---------------------------------------------------------------- beam

Verdict beam_oracle() {
    Verdict v;
    std::mt19937_64 rng(99);
    std::normal_distribution<double> normal;
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t n = 2 + rng() % 199;
        const std::uint32_t d = 4 + static_cast<std::uint32_t>(rng() % 13);
        Corpus corpus;
        EmbeddingMatrix passages(d), queries(d);
        std::vector<float> row(d);
        auto fill = [&] {
            for (auto& x : row) x = static_cast<float>(normal(rng));
        };
        for (std::size_t i = 0; i < n; ++i) {
            const auto& p = corpus.add_passage("p" + std::to_string(i), "", "w" + std::to_string(i));
            fill();
            passages.append(p.id, row);
        }
        const auto& q = corpus.add_question("q", "question", QuestionType::bridge, "p0", "p1");
        fill();
        queries.append("q", row);
        for (const auto& p : corpus.passages()) {
            fill();
            queries.append(PrecomputedQueryEncoder::key(q.id, &p), row);
        }
        // Exhaustive enumeration over ordered pairs without repeats.
        auto dot = [&](std::span<const float> a, std::span<const float> b) {
            double s = 0;
            for (std::uint32_t j = 0; j < d; ++j) s += static_cast<double>(a[j]) * static_cast<double>(b[j]);
            return s;
        };
        double best = -INFINITY;
        std::pair<std::size_t, std::size_t> argmax{0, 0};
        for (std::size_t a = 0; a < n; ++a) {
            const double s1 = dot(queries.row(0), passages.row(a));
            for (std::size_t b = 0; b < n; ++b) {
                if (a == b) continue;
                const double total = s1 + dot(queries.row(1 + a), passages.row(b));
                if (total > best) {
                    best = total;
                    argmax = {a, b};
                }
            }
        }
        const PrecomputedQueryEncoder encoder(queries);
        const DenseIndex index(std::move(passages));
        const auto paths = mdr_retrieve(q, {.beam_size = n, .k_paths = 0}, encoder, index, corpus);
        const Tokens expected{"p" + std::to_string(argmax.first), "p" + std::to_string(argmax.second)};
        if (paths.size() != n * (n - 1)) v.fail("instance " + std::to_string(inst) + ": wrong path count");
        if (paths.empty() || paths[0].hop_passages != expected || paths[0].total_score != best) {
            v.fail("instance " + std::to_string(inst) + ": top path is not the argmax pair");
        }
    }
    if (v.pass) v.detail = "20 instances";
    return v;
}

// ---------------------------------------------------------------- gradient

Corpus random_corpus(std::mt19937_64& rng, std::size_t n) {
    Corpus c;
    for (std::size_t i = 0; i < n; ++i) {
        std::string text;
        const std::size_t len = 1 + rng() % 8;
        for (std::size_t j = 0; j < len; ++j) text += "w" + std::to_string(rng() % 50) + " ";
        c.add_passage("p" + std::to_string(i), "", text);
    }
    return c;
}

std::vector<TrainExample> random_batch(std::mt19937_64& rng, const Corpus& corpus, std::size_t b,
                                       std::size_t hard) {
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<TrainExample> batch(b);
    std::size_t next = b;
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t len = 1 + rng() % 6;
        for (std::size_t j = 0; j < len; ++j) batch[i].query_tokens.push_back("w" + std::to_string(rng() % 50));
        batch[i].positive_id = corpus.passages()[order[i]].id;
        for (std::size_t h = 0; h < hard; ++h) batch[i].hard_negative_ids.push_back(corpus.passages()[order[next++]].id);
    }
    return batch;
}

Verdict gradient_check() {
    Verdict v;
    std::mt19937_64 rng(31337);
    const auto corpus = random_corpus(rng, 60);
    const std::uint32_t hash_dim = 64, embed_dim = 8;
    const FeatureStore features(corpus, hash_dim);
    const double h = 1e-4;
    double worst = 0;
    std::size_t checked = 0;
    for (int trial = 0; trial < 24; ++trial) {
        ToyEncoder enc(hash_dim, embed_dim, 1000 + trial);
        const auto batch = random_batch(rng, corpus, 2 + trial % 7, trial % 3 == 0 ? 1 : 0);
        const auto g = loss_gradient(batch, enc, features);
        for (const auto tower : {Tower::query, Tower::passage}) {
            const auto& analytic = tower == Tower::query ? g.query : g.passage;
            auto w = enc.weights(tower);
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double saved = w[i];
                w[i] = saved + h;
                const double up = nll_loss(batch, enc, features).loss;
                w[i] = saved - h;
                const double down = nll_loss(batch, enc, features).loss;
                w[i] = saved;
                const double numeric = (up - down) / (2 * h);
                const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
                worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
                ++checked;
            }
        }
    }
    if (worst >= 1e-5) v.fail("max relative error " + std::to_string(worst));
    char buf[128];
    std::snprintf(buf, sizeof(buf), "24 batches, %zu entries, max rel err %.2e", checked, worst);
    if (v.pass) v.detail = buf;
    return v;
}

// ---------------------------------------------------------------- in-batch negatives

Verdict negative_invariant() {
    Verdict v;
    std::mt19937_64 rng(8);
    const auto corpus = random_corpus(rng, 200);
    std::size_t batches = 0;
    for (const std::size_t hard : {std::size_t{0}, std::size_t{1}}) {
        // 64 examples with distinct positives and distinct hard negatives.
        const auto examples = random_batch(rng, corpus, 64, hard);
        for (const std::size_t b : {2u, 4u, 8u}) {
            for (const std::size_t s : {1u, 2u, 4u}) {
                TrainConfig config;
                config.epochs = 2;
                config.batch_size = b;
                config.grad_accum_steps = s;
                config.learning_rate = 0.1;
                (void)train(examples, corpus, config, ToyEncoder(256, 8, b * 10 + s), [&](const BatchObservation& o) {
                    ++batches;
                    if (o.batch_size != b) v.fail("batch of size " + std::to_string(o.batch_size));
                    for (const auto c : o.loss->candidate_counts) {
                        if (c - 1 != (b - 1) + b * hard || c - 1 != (b - 1) + o.hard_negatives) {
                            v.fail("B=" + std::to_string(b) + " S=" + std::to_string(s) + ": " +
                                   std::to_string(c - 1) + " negatives");
                        }
                    }
                });
            }
        }
    }
    if (v.pass) v.detail = std::to_string(batches) + " batches";
    return v;
}

// ---------------------------------------------------------------- synthetic end to end

struct EndToEnd {
    Verdict ordering;
    Verdict metric;
};

EndToEnd synthetic_end_to_end() {
    EndToEnd result;
    const auto start = Clock::now();
    std::ostringstream summary;
    std::size_t runs = 0;
    for (const std::uint64_t seed : {1u, 2u, 3u}) {
        const ScratchDir dir("e2e_" + std::to_string(seed));
        const auto s = std::to_string(seed);
        cli_or_throw({"synth", "--out-dir", dir.str(), "--seed", s});
        const auto corpus = dir / "corpus.jsonl", train = dir / "train_questions.jsonl",
                   test = dir / "test_questions.jsonl";
        for (const auto& [dataset, out] : {std::pair{"dpr2", "dpr2.ckpt"}, std::pair{"mdr", "mdr.ckpt"},
                                           std::pair{"hop1", "hop1.ckpt"}}) {
            cli_or_throw({"train", "--corpus", corpus, "--questions", train, "--dataset", dataset, "--seed", s,
                          "--epochs", "50", "--batch-size", "16", "--embed-dim", "128", "--out", dir / out});
        }
        const std::vector<std::pair<std::string, std::vector<std::string>>> methods{
            {"bm25", {}},
            {"dpr", {"--checkpoint", dir / "hop1.ckpt"}},
            {"mdr", {"--checkpoint", dir / "mdr.ckpt"}},
            {"hybrid", {"--dpr2-checkpoint", dir / "dpr2.ckpt"}},
        };
        std::map<std::string, double> em2;
        const auto questions = load_corpus(corpus, test);
        for (const auto& [method, extra] : methods) {
            std::vector<std::string> args{"retrieve", "--method", method, "--corpus", corpus,
                                          "--questions", test, "--out", dir / (method + ".tsv")};
            args.insert(args.end(), extra.begin(), extra.end());
            cli_or_throw(args);
            const auto report = evaluate_run(RunFile::load(dir / (method + ".tsv")), questions.questions(),
                                             std::vector<std::size_t>{1, 2, 5, 10, 20, 50});
            ++runs;
            for (const auto& [qid, qe] : report.per_question) {
                int prev = 0;
                for (const auto& [k, em] : qe.em) {
                    if (em < prev) result.metric.fail("EM@k decreases for " + qid + " in " + method);
                    prev = em;
                }
            }
            em2[method] = report.em_at.at(2);
        }
        if (questions.questions().size() < 50 || questions.size() < 200) {
            result.ordering.fail("synthetic world too small");
        }
        if (!(em2["hybrid"] > em2["bm25"])) result.ordering.fail("seed " + s + ": hybrid EM@2 <= BM25 EM@2");
        if (!(em2["mdr"] > em2["dpr"])) result.ordering.fail("seed " + s + ": MDR EM@2 <= dense EM@2");
        char buf[160];
        std::snprintf(buf, sizeof(buf), "seed %s: bm25 %.2f dpr %.2f mdr %.2f hybrid %.2f; ", s.c_str(),
                      em2["bm25"], em2["dpr"], em2["mdr"], em2["hybrid"]);
        summary << buf;
    }
    const double t = seconds_since(start);
    if (t >= 120.0) result.ordering.fail("3 pipelines took " + std::to_string(t) + " s");
    summary << std::to_string(t).substr(0, 5) << " s for 3 seeds";
    if (result.ordering.pass) result.ordering.detail = summary.str();
    if (result.metric.pass) result.metric.detail = std::to_string(runs) + " runs monotone";
    return result;
}

Verdict em_fixture(Verdict monotone) {
    Verdict v;
    const fs::path data = HOPSEARCH_TEST_DATA;
    const auto corpus = load_corpus(data / "fixture_corpus.jsonl", data / "fixture_questions.jsonl");
    const auto report = evaluate_run(RunFile::load(data / "fixture_run_a.tsv"), corpus.questions());
    if (report.em_at.at(2) != 0.25 || report.em_at.at(10) != 0.5 || report.em_at.at(20) != 0.75) {
        v.fail("fixture EM@{2,10,20} differs from 0.25/0.5/0.75");
    }
    if (!monotone.pass) v.fail(monotone.detail);
    if (v.pass) v.detail = "fixture exact; " + monotone.detail;
    return v;
}

// ---------------------------------------------------------------- CLI determinism

Verdict cli_determinism() {
    Verdict v;
    const ScratchDir a("det_a"), b("det_b");
    std::vector<std::string> outputs;
    auto run_all = [&](const ScratchDir& d, const std::string& threads) {
        std::vector<std::string> stdout_texts;
        auto run = [&](const std::vector<std::string>& args) {
            std::string text;
            cli_or_throw(args, &text);
            stdout_texts.push_back(text);
        };
        const auto corpus = d / "corpus.jsonl", train = d / "train_questions.jsonl", test = d / "test_questions.jsonl";
        run({"synth", "--out-dir", d.str(), "--seed", "4"});
        run({"ingest", "--corpus", corpus, "--questions", test, "--out", d / "stats.json"});
        run({"index-lexical", "--corpus", corpus, "--out", d / "bm25.idx"});
        run({"train", "--corpus", corpus, "--questions", train, "--dataset", "dpr2", "--out", d / "dpr2.ckpt",
             "--loss-csv", d / "dpr2.csv", "--epochs", "5", "--hard-negatives", "--grad-accum", "2"});
        run({"train", "--corpus", corpus, "--questions", train, "--dataset", "mdr", "--out", d / "mdr.ckpt",
             "--epochs", "5", "--momentum", "0.5"});
        run({"embed", "--checkpoint", d / "mdr.ckpt", "--corpus", corpus, "--out", d / "p.hsem"});
        run({"embed", "--checkpoint", d / "mdr.ckpt", "--corpus", corpus, "--questions", test, "--side", "question",
             "--out", d / "q.hsem"});
        for (const std::string method : {"bm25", "rerank", "dpr", "mdr", "hybrid"}) {
            run({"retrieve", "--method", method, "--corpus", corpus, "--questions", test, "--index", d / "bm25.idx",
                 "--checkpoint", d / "mdr.ckpt", "--dpr2-checkpoint", d / "dpr2.ckpt", "--threads", threads,
                 "--out", d / (method + ".tsv"), "--paths-out", d / (method + ".jsonl")});
        }
        run({"eval", "--run", d / "hybrid.tsv", "--corpus", corpus, "--questions", test, "--out", d / "eval.json"});
        run({"compare", "--run-a", d / "hybrid.tsv", "--run-b", d / "mdr.tsv", "--corpus", corpus, "--questions",
             test, "--out", d / "cmp.tsv"});
        return stdout_texts;
    };
    try {
        if (run_all(a, "1") != run_all(b, "3")) v.fail("stdout differs");
    } catch (const std::exception& e) {
        v.fail(e.what());
        return v;
    }
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(a.str())) {
        const auto name = entry.path().filename().string();
        ++files;
        if (slurp(a / name) != slurp(b / name)) v.fail(name + " differs");
    }
    if (v.pass) v.detail = std::to_string(files) + " files byte-identical across reruns";
    return v;
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](const char* name, const std::function<Verdict()>& check) {
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v.fail(std::string("exception: ") + e.what());
        }
        std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
        std::fflush(stdout);
        failures += v.pass ? 0 : 1;
    };
    report("bm25-oracle-equivalence", bm25_oracle);
    report("dense-search-exactness", dense_exactness);
    report("beam-search-oracle", beam_oracle);
    report("gradient-finite-differences", gradient_check);
    report("in-batch-negative-invariant", negative_invariant);
    EndToEnd e2e;
    try {
        e2e = synthetic_end_to_end();
    } catch (const std::exception& e) {
        e2e.ordering.fail(std::string("exception: ") + e.what());
        e2e.metric.fail("end-to-end runs unavailable");
    }
    report("synthetic-end-to-end-ordering", [&] { return e2e.ordering; });
    report("em-metric-fixture", [&] { return em_fixture(e2e.metric); });
    report("cli-determinism", cli_determinism);
    return failures == 0 ? 0 : 1;
}
