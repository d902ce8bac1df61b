#include "hopsearch/cli.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "hopsearch/corpus.hpp"
#include "hopsearch/dense_index.hpp"
#include "hopsearch/encoder.hpp"
#include "hopsearch/error.hpp"
#include "hopsearch/eval.hpp"
#include "hopsearch/lexical_index.hpp"
#include "hopsearch/multihop.hpp"
#include "hopsearch/reranker.hpp"
#include "hopsearch/synthetic.hpp"
#include "hopsearch/trainer.hpp"
#include "json.hpp"

namespace hopsearch {

namespace {

enum class Method { bm25, rerank, dpr, mdr, hybrid };

const std::map<std::string, Method> kMethods{{"bm25", Method::bm25},
                                             {"rerank", Method::rerank},
                                             {"dpr", Method::dpr},
                                             {"mdr", Method::mdr},
                                             {"hybrid", Method::hybrid}};

struct SynthArgs {
    std::string out_dir;
    SyntheticOptions options;
};

struct IngestArgs {
    std::string corpus, questions, out;
};

struct IndexArgs {
    std::string corpus, out;
    Bm25Params params;
};

struct TrainArgs {
    std::string corpus, questions, dataset, out, loss_csv;
    TrainConfig config;
    std::uint32_t hash_dim = ToyEncoder::kDefaultHashDim;
    std::uint32_t embed_dim = ToyEncoder::kDefaultEmbedDim;
    bool hard_negatives = false;
};

struct EmbedArgs {
    std::string checkpoint, corpus, questions, out, side = "passage";
};

struct RetrieveArgs {
    std::string method_name;
    std::string corpus, questions, out, index, checkpoint, dpr2_checkpoint;
    std::string embeddings, query_embeddings, scores, paths_out, tag;
    std::size_t k = 20;
    std::size_t k_candidates = 100;
    std::size_t beam = 10;
    std::size_t b1 = 10;
    std::size_t b2 = 10;
    std::size_t threads = 1;
};

struct EvalArgs {
    std::string run, corpus, questions, out;
    std::vector<std::size_t> ks = kDefaultEmCutoffs;
};

struct CompareArgs {
    std::string run_a, run_b, corpus, questions, out;
    std::size_t k = 10;
};

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path);
    }
    return out;
}

void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) {
        throw Error("write failed for " + path);
    }
}

int run_synth(const SynthArgs& a, std::ostream& out) {
    const auto world = make_two_hop_world(a.options);
    write_world(world, a.out_dir);
    out << "passages = " << world.corpus.size() << "\ntrain questions = " << world.train.size()
        << "\ntest questions = " << world.test.size() << '\n';
    return 0;
}

int run_ingest(const IngestArgs& a, std::ostream& out) {
    Corpus corpus;
    const auto stats = corpus.ingest_passages(a.corpus);
    std::size_t questions = 0;
    if (!a.questions.empty()) questions = corpus.ingest_questions(a.questions);
    nlohmann::ordered_json doc;
    doc["passage_count"] = stats.passage_count;
    doc["avg_doc_len"] = stats.avg_doc_len;
    doc["vocab_size"] = stats.vocab_size;
    doc["question_count"] = questions;
    out << "passages = " << stats.passage_count << "\navg_doc_len = " << stats.avg_doc_len
        << "\nvocab_size = " << stats.vocab_size << "\nquestions = " << questions << '\n';
    if (!a.out.empty()) {
        auto f = open_output(a.out);
        f << doc.dump(2) << '\n';
        finish(f, a.out);
    }
    return 0;
}

int run_index(const IndexArgs& a, std::ostream& out) {
    Corpus corpus;
    corpus.ingest_passages(a.corpus);
    const auto index = LexicalIndex::build(corpus, a.params);
    index.save(a.out);
    out << "indexed " << index.doc_count() << " passages, " << index.term_count() << " terms\n";
    return 0;
}

int run_train(const TrainArgs& a, std::ostream& out) {
    const auto corpus = load_corpus(a.corpus, a.questions);
    std::optional<LexicalIndex> index;
    if (a.hard_negatives) index = LexicalIndex::build(corpus);
    const auto* miner = index ? &*index : nullptr;
    std::vector<TrainExample> examples;
    if (a.dataset == "hop1") {
        examples = build_hop1_dataset(corpus.questions(), corpus, miner);
    } else if (a.dataset == "dpr2") {
        examples = build_dpr2_dataset(corpus.questions(), corpus, miner);
    } else {
        examples = build_multihop_dataset(corpus.questions(), corpus, miner);
    }
    validate(a.config, examples.size(), a.hard_negatives);
    auto result = train(examples, corpus, a.config, ToyEncoder(a.hash_dim, a.embed_dim, a.config.seed));
    save_checkpoint(a.out, result.encoder, a.config);
    if (!a.loss_csv.empty()) {
        auto f = open_output(a.loss_csv);
        write_loss_csv(f, result.trace);
        finish(f, a.loss_csv);
    }
    out << "trained on " << examples.size() << " examples; epoch loss " << result.epoch_loss.front()
        << " -> " << result.epoch_loss.back() << '\n';
    return 0;
}

int run_embed(const EmbedArgs& a, std::ostream& out) {
    const auto corpus = load_corpus(a.corpus, a.side == "question" ? a.questions : std::string{});
    const auto ckpt = load_checkpoint(a.checkpoint);
    EmbeddingMatrix m(ckpt.encoder.embed_dim());
    if (a.side == "passage") {
        m = encode_passages(corpus, ckpt.encoder);
    } else {
        for (const auto& q : corpus.questions()) m.append(q.id, ckpt.encoder.encode_query(q));
    }
    m.save(a.out);
    out << "wrote " << m.size() << " x " << m.dim() << " embeddings\n";
    return 0;
}

struct DenseSide {
    std::unique_ptr<Checkpoint> checkpoint;
    std::unique_ptr<EmbeddingMatrix> query_embeddings;
    std::unique_ptr<QueryEncoder> encoder;
    std::unique_ptr<DenseIndex> index;
};

DenseSide load_dense_side(const std::string& checkpoint, const RetrieveArgs& a, const Corpus& corpus) {
    DenseSide side;
    if (!checkpoint.empty()) side.checkpoint = std::make_unique<Checkpoint>(load_checkpoint(checkpoint));
    if (!a.query_embeddings.empty()) {
        side.query_embeddings = std::make_unique<EmbeddingMatrix>(EmbeddingMatrix::load(a.query_embeddings));
        side.encoder = std::make_unique<PrecomputedQueryEncoder>(*side.query_embeddings);
    } else {
        side.encoder = std::make_unique<ToyQueryEncoder>(side.checkpoint->encoder);
    }
    auto passages = a.embeddings.empty() ? encode_passages(corpus, side.checkpoint->encoder)
                                         : EmbeddingMatrix::load(a.embeddings);
    if (side.query_embeddings && side.query_embeddings->dim() != passages.dim()) {
        throw Error("query and passage embeddings differ in dimension");
    }
    for (const auto& id : passages.ids()) {
        if (!corpus.find_passage(id)) {
            throw Error("embedding row '" + id + "' is not a passage of the corpus");
        }
    }
    side.index = std::make_unique<DenseIndex>(std::move(passages));
    return side;
}

int run_retrieve(const RetrieveArgs& a, std::ostream& out) {
    const auto method = kMethods.at(a.method_name);
    const bool dense = method == Method::dpr || method == Method::mdr || method == Method::hybrid;
    const auto& checkpoint = method == Method::hybrid ? a.dpr2_checkpoint : a.checkpoint;
    if (dense && checkpoint.empty() && (a.embeddings.empty() || a.query_embeddings.empty())) {
        throw Error("method " + a.method_name + " needs " +
                    (method == Method::hybrid ? "--dpr2-checkpoint" : "--checkpoint") +
                    " or both --embeddings and --query-embeddings");
    }
    if ((method == Method::rerank || method == Method::hybrid) &&
        (method == Method::rerank ? a.k : a.b1) > a.k_candidates) {
        throw Error("reranked depth exceeds --k-candidates");
    }

    const auto corpus = load_corpus(a.corpus, a.questions);
    std::optional<LexicalIndex> lexical;
    if (method == Method::bm25 || method == Method::rerank || method == Method::hybrid) {
        if (!a.index.empty()) {
            lexical = LexicalIndex::load(a.index);
            if (!lexical->matches(corpus)) {
                throw Error("lexical index " + a.index + " does not match the corpus");
            }
        } else {
            lexical = LexicalIndex::build(corpus);
        }
    }
    std::unique_ptr<Scorer> scorer;
    if (method == Method::rerank || method == Method::hybrid) {
        if (a.scores.empty()) {
            scorer = std::make_unique<OverlapScorer>(*lexical);
        } else {
            scorer = std::make_unique<ExternalScores>(ExternalScores::load(a.scores));
        }
    }
    DenseSide dense_side;
    if (dense) dense_side = load_dense_side(checkpoint, a, corpus);

    const auto& questions = corpus.questions();
    std::vector<std::string> run_chunks(questions.size());
    std::vector<std::string> path_chunks(questions.size());
    std::vector<std::exception_ptr> failures(questions.size());
    const std::string tag = a.tag.empty() ? a.method_name : a.tag;

    auto process = [&](std::size_t i) {
        const auto& q = questions[i];
        RankedList ranking;
        std::vector<PathCandidate> paths;
        switch (method) {
        case Method::bm25: ranking = lexical->search(q.tokens, a.k); break;
        case Method::rerank:
            ranking = rerank(q, *lexical, corpus, *scorer, {.k_candidates = a.k_candidates, .k_out = a.k});
            break;
        case Method::dpr: ranking = dense_retrieve(q, a.k, *dense_side.encoder, *dense_side.index); break;
        case Method::mdr:
            paths = mdr_retrieve(q, {.beam_size = a.beam, .k_paths = 0}, *dense_side.encoder,
                                 *dense_side.index, corpus);
            ranking = flatten_paths(paths, a.k);
            break;
        case Method::hybrid:
            paths = hybrid_retrieve(q, {.b1 = a.b1, .b2 = a.b2, .k_candidates = a.k_candidates}, *scorer,
                                    *dense_side.encoder, *dense_side.index, *lexical, corpus);
            ranking = flatten_paths(paths, a.k);
            break;
        }
        std::ostringstream run;
        write_run(run, q.id, ranking, tag);
        run_chunks[i] = run.str();
        if (!a.paths_out.empty()) {
            std::ostringstream dump;
            write_paths_jsonl(dump, q.id, paths);
            path_chunks[i] = dump.str();
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(a.threads, questions.size()));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < questions.size(); i = next++) {
            try {
                process(i);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
        work();
    }
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }

    auto run_file = open_output(a.out);
    for (const auto& chunk : run_chunks) run_file << chunk;
    finish(run_file, a.out);
    if (!a.paths_out.empty()) {
        auto dump = open_output(a.paths_out);
        for (const auto& chunk : path_chunks) dump << chunk;
        finish(dump, a.paths_out);
    }
    out << "retrieved " << questions.size() << " questions with " << a.method_name << '\n';
    return 0;
}

int run_eval(const EvalArgs& a, std::ostream& out) {
    const auto corpus = load_corpus(a.corpus, a.questions);
    const auto report = evaluate_run(RunFile::load(a.run), corpus.questions(), a.ks);
    out << report.to_table();
    if (!a.out.empty()) {
        auto f = open_output(a.out);
        f << report.to_json();
        finish(f, a.out);
    }
    return 0;
}

int run_compare(const CompareArgs& a, std::ostream& out) {
    const auto corpus = load_corpus(a.corpus, a.questions);
    const auto rows = compare_runs(RunFile::load(a.run_a), RunFile::load(a.run_b),
                                   corpus.questions(), a.k);
    std::map<Outcome, std::size_t> counts;
    std::ostringstream table;
    for (const auto& r : rows) {
        ++counts[r.outcome];
        table << r.question_id << '\t' << to_string(r.outcome) << '\n';
    }
    for (const auto o : {Outcome::a_only, Outcome::b_only, Outcome::both, Outcome::neither}) {
        out << to_string(o) << " = " << counts[o] << '\n';
    }
    if (!a.out.empty()) {
        auto f = open_output(a.out);
        f << table.str();
        finish(f, a.out);
    }
    return 0;
}

} // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-hop passage retrieval: BM25, rerank, dense, iterative dense, hybrid"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic 2-hop corpus and question splits");
    synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required();
    synth_cmd->add_option("--seed", synth.options.seed, "Generator seed")->capture_default_str();
    synth_cmd->add_option("--train-questions", synth.options.train_questions)->capture_default_str();
    synth_cmd->add_option("--test-questions", synth.options.test_questions)->capture_default_str();
    synth_cmd->add_option("--noise-passages", synth.options.noise_passages)->capture_default_str();
    synth_cmd->add_option("--bridge-entities", synth.options.bridge_entities)->capture_default_str();
    synth_cmd->add_option("--topic-words", synth.options.topic_words)->capture_default_str();
    synth_cmd->add_option("--bridge-words", synth.options.bridge_words)->capture_default_str();

    IngestArgs ingest;
    auto* ingest_cmd = app.add_subcommand("ingest", "Validate passage/question files and report statistics");
    ingest_cmd->add_option("--corpus", ingest.corpus, "Passage JSONL")->required()->check(CLI::ExistingFile);
    ingest_cmd->add_option("--questions", ingest.questions, "Question JSONL")->check(CLI::ExistingFile);
    ingest_cmd->add_option("--out", ingest.out, "Write statistics as JSON");

    IndexArgs index;
    auto* index_cmd = app.add_subcommand("index-lexical", "Build and save a BM25 index (HSLX1)");
    index_cmd->add_option("--corpus", index.corpus)->required()->check(CLI::ExistingFile);
    index_cmd->add_option("--out", index.out)->required();
    index_cmd->add_option("--k1", index.params.k1)->capture_default_str();
    index_cmd->add_option("--b", index.params.b)->capture_default_str()->check(CLI::Range(0.0, 1.0));

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train the toy dual encoder with in-batch negatives");
    train_cmd->add_option("--corpus", tr.corpus)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--questions", tr.questions)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--dataset", tr.dataset, "hop1 (DPR), dpr2 (second hop), mdr (both hops)")
        ->required()
        ->check(CLI::IsMember({"hop1", "dpr2", "mdr"}));
    train_cmd->add_option("--out", tr.out, "Checkpoint path (HSCK1)")->required();
    train_cmd->add_option("--loss-csv", tr.loss_csv, "Loss trace as epoch,step,loss");
    train_cmd->add_option("--epochs", tr.config.epochs)->capture_default_str();
    train_cmd->add_option("--batch-size", tr.config.batch_size)->capture_default_str();
    train_cmd->add_option("--grad-accum", tr.config.grad_accum_steps)->capture_default_str();
    train_cmd->add_option("--lr", tr.config.learning_rate)->capture_default_str();
    train_cmd->add_option("--momentum", tr.config.momentum)->capture_default_str();
    train_cmd->add_option("--seed", tr.config.seed, "Initialisation and shuffle seed")->capture_default_str();
    train_cmd->add_option("--hash-dim", tr.hash_dim)->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--embed-dim", tr.embed_dim)->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_flag("--hard-negatives", tr.hard_negatives, "Add the top BM25 non-gold passage per example");

    EmbedArgs embed;
    auto* embed_cmd = app.add_subcommand("embed", "Encode passages or questions to an HSEM1 file");
    embed_cmd->add_option("--checkpoint", embed.checkpoint)->required()->check(CLI::ExistingFile);
    embed_cmd->add_option("--corpus", embed.corpus)->required()->check(CLI::ExistingFile);
    embed_cmd->add_option("--questions", embed.questions)->check(CLI::ExistingFile);
    embed_cmd->add_option("--side", embed.side)->capture_default_str()->check(CLI::IsMember({"passage", "question"}));
    embed_cmd->add_option("--out", embed.out)->required();

    RetrieveArgs ret;
    auto* retrieve_cmd = app.add_subcommand("retrieve", "Write a run file for every question");
    retrieve_cmd->add_option("--method", ret.method_name)
        ->required()
        ->check(CLI::IsMember({"bm25", "rerank", "dpr", "mdr", "hybrid"}));
    retrieve_cmd->add_option("--corpus", ret.corpus)->required()->check(CLI::ExistingFile);
    retrieve_cmd->add_option("--questions", ret.questions)->required()->check(CLI::ExistingFile);
    retrieve_cmd->add_option("--out", ret.out, "Run file")->required();
    retrieve_cmd->add_option("--index", ret.index, "Saved lexical index")->check(CLI::ExistingFile);
    retrieve_cmd->add_option("--checkpoint", ret.checkpoint, "Encoder for dpr / mdr")->check(CLI::ExistingFile);
    retrieve_cmd->add_option("--dpr2-checkpoint", ret.dpr2_checkpoint, "Hop-2 encoder for hybrid")
        ->check(CLI::ExistingFile);
    retrieve_cmd->add_option("--embeddings", ret.embeddings, "Passage embeddings (HSEM1)")->check(CLI::ExistingFile);
    retrieve_cmd->add_option("--query-embeddings", ret.query_embeddings, "Query embeddings (HSEM1)")
        ->check(CLI::ExistingFile);
    retrieve_cmd->add_option("--scores", ret.scores, "External rerank scores (TSV)")->check(CLI::ExistingFile);
    retrieve_cmd->add_option("--paths-out", ret.paths_out, "Path dump (JSONL)");
    retrieve_cmd->add_option("--tag", ret.tag, "Run tag (default: method)");
    retrieve_cmd->add_option("--k", ret.k)->capture_default_str()->check(CLI::PositiveNumber);
    retrieve_cmd->add_option("--k-candidates", ret.k_candidates)->capture_default_str()->check(CLI::PositiveNumber);
    retrieve_cmd->add_option("--beam", ret.beam)->capture_default_str()->check(CLI::PositiveNumber);
    retrieve_cmd->add_option("--b1", ret.b1)->capture_default_str()->check(CLI::PositiveNumber);
    retrieve_cmd->add_option("--b2", ret.b2)->capture_default_str()->check(CLI::PositiveNumber);
    retrieve_cmd->add_option("--threads", ret.threads)->capture_default_str()->check(CLI::PositiveNumber);

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Passage EM@k of a run file");
    eval_cmd->add_option("--run", ev.run)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--corpus", ev.corpus)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--questions", ev.questions)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--ks", ev.ks, "Cutoffs")->delimiter(',')->capture_default_str();
    eval_cmd->add_option("--out", ev.out, "Report as JSON");

    CompareArgs cmp;
    auto* compare_cmd = app.add_subcommand("compare", "Per-question EM@k agreement of two runs");
    compare_cmd->add_option("--run-a", cmp.run_a)->required()->check(CLI::ExistingFile);
    compare_cmd->add_option("--run-b", cmp.run_b)->required()->check(CLI::ExistingFile);
    compare_cmd->add_option("--corpus", cmp.corpus)->required()->check(CLI::ExistingFile);
    compare_cmd->add_option("--questions", cmp.questions)->required()->check(CLI::ExistingFile);
    compare_cmd->add_option("--k", cmp.k)->capture_default_str()->check(CLI::PositiveNumber);
    compare_cmd->add_option("--out", cmp.out, "question_id \\t category table");

    std::vector<const char*> argv{"hopsearch"};
    for (const auto& arg : args) argv.push_back(arg.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << "error: " << e.what() << '\n';
        return e.get_exit_code();
    }

    try {
        if (*synth_cmd) return run_synth(synth, out);
        if (*ingest_cmd) return run_ingest(ingest, out);
        if (*index_cmd) return run_index(index, out);
        if (*train_cmd) return run_train(tr, out);
        if (*embed_cmd) {
            if (embed.side == "question" && embed.questions.empty()) {
                throw Error("--side question needs --questions");
            }
            return run_embed(embed, out);
        }
        if (*retrieve_cmd) return run_retrieve(ret, out);
        if (*eval_cmd) return run_eval(ev, out);
        if (*compare_cmd) return run_compare(cmp, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

} // namespace hopsearch
