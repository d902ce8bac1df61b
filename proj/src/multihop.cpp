#include "hopsearch/multihop.hpp"

#include <algorithm>
#include <charconv>
#include <ostream>
#include <set>

#include "hopsearch/error.hpp"
#include "json.hpp"

namespace hopsearch {

std::string PrecomputedQueryEncoder::key(std::string_view question_id, const Passage* prev) {
    std::string k(question_id);
    if (prev) {
        k += "::";
        k += prev->id;
    }
    return k;
}

std::vector<float> PrecomputedQueryEncoder::encode(const Question& question,
                                                   const Passage* prev) const {
    const auto k = key(question.id, prev);
    const auto row = embeddings_.find(k);
    if (!row) {
        throw Error("no precomputed query embedding for '" + k + "'");
    }
    const auto v = embeddings_.row(*row);
    return {v.begin(), v.end()};
}

std::vector<PathCandidate> mdr_retrieve(const Question& question, const MdrOptions& options,
                                        const QueryEncoder& encoder, const DenseIndex& index,
                                        const Corpus& corpus) {
    if (index.size() == 0) {
        throw Error("empty corpus");
    }
    const std::size_t beam = options.beam_size;
    if (beam == 0) {
        throw Error("beam size must be positive");
    }
    if (options.k_paths > beam * beam) {
        throw Error("k_paths exceeds beam_size^2");
    }

    const auto hop1 = index.search(encoder.encode(question, nullptr), beam);

    std::vector<float> queries;
    std::vector<ExcludeSet> excludes;
    queries.reserve(hop1.size() * index.dim());
    for (const auto& first : hop1) {
        const auto q2 = encoder.encode(question, &corpus.passage(first.id));
        queries.insert(queries.end(), q2.begin(), q2.end());
        excludes.push_back({first.id});
    }
    const auto hop2 = index.batch_search(queries, beam, excludes);

    std::vector<PathCandidate> paths;
    paths.reserve(hop1.size() * beam);
    for (std::size_t i = 0; i < hop1.size(); ++i) {
        for (const auto& second : hop2[i]) {
            PathCandidate path;
            path.hop_passages = {hop1[i].id, second.id};
            path.hop_scores = {hop1[i].score, second.score};
            path.total_score = hop1[i].score + second.score;
            paths.push_back(std::move(path));
        }
    }
    std::sort(paths.begin(), paths.end(), [](const PathCandidate& a, const PathCandidate& b) {
        if (a.total_score != b.total_score) return a.total_score > b.total_score;
        return a.hop_passages < b.hop_passages;
    });
    if (options.k_paths > 0 && paths.size() > options.k_paths) {
        paths.resize(options.k_paths);
    }
    return paths;
}

std::vector<double> min_max_normalize(std::span<const double> values) {
    std::vector<double> out(values.size(), 1.0);
    if (values.empty()) return out;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = (values[i] - *lo) / range;
    }
    return out;
}

std::vector<PathCandidate> hybrid_retrieve(const Question& question, const HybridOptions& options,
                                           const Scorer& scorer, const QueryEncoder& hop2_encoder,
                                           const DenseIndex& dense, const LexicalIndex& lexical,
                                           const Corpus& corpus) {
    if (options.b1 == 0 || options.b2 == 0) {
        throw Error("beam sizes must be positive");
    }
    const auto hop1 = rerank(question, lexical, corpus, scorer,
                             {.k_candidates = options.k_candidates, .k_out = options.b1});
    std::vector<double> hop1_scores;
    for (const auto& h : hop1) hop1_scores.push_back(h.score);
    const auto z1 = min_max_normalize(hop1_scores);

    struct Pending {
        std::size_t hop1_rank;
        Hit second;
    };
    std::vector<Pending> pending;
    for (std::size_t i = 0; i < hop1.size(); ++i) {
        const auto q2 = hop2_encoder.encode(question, &corpus.passage(hop1[i].id));
        for (auto& hit : dense.search(q2, options.b2, {hop1[i].id})) {
            pending.push_back({i, std::move(hit)});
        }
    }
    std::vector<double> hop2_scores;
    for (const auto& p : pending) hop2_scores.push_back(p.second.score);
    const auto z2 = min_max_normalize(hop2_scores);

    std::vector<std::size_t> order(pending.size());
    std::vector<PathCandidate> paths(pending.size());
    for (std::size_t j = 0; j < pending.size(); ++j) {
        const auto r = pending[j].hop1_rank;
        paths[j].hop_passages = {hop1[r].id, pending[j].second.id};
        paths[j].hop_scores = {z1[r], z2[j]};
        paths[j].total_score = z1[r] + z2[j];
        order[j] = j;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (paths[a].total_score != paths[b].total_score)
            return paths[a].total_score > paths[b].total_score;
        if (pending[a].hop1_rank != pending[b].hop1_rank)
            return pending[a].hop1_rank < pending[b].hop1_rank;
        return pending[a].second.id < pending[b].second.id;
    });
    std::vector<PathCandidate> sorted;
    sorted.reserve(order.size());
    for (const auto j : order) sorted.push_back(std::move(paths[j]));
    return sorted;
}

RankedList dense_retrieve(const Question& question, std::size_t k, const QueryEncoder& encoder,
                          const DenseIndex& index) {
    return index.search(encoder.encode(question, nullptr), k);
}

RankedList flatten_paths(std::span<const PathCandidate> paths, std::size_t k) {
    RankedList out;
    std::set<std::string_view> seen;
    for (const auto& path : paths) {
        for (const auto& id : path.hop_passages) {
            if (out.size() >= k) return out;
            if (seen.insert(id).second) {
                out.push_back({id, path.total_score});
            }
        }
    }
    return out;
}

std::string format_score(double value) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

void write_run(std::ostream& out, std::string_view question_id, const RankedList& ranking,
               std::string_view run_tag) {
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        out << question_id << '\t' << ranking[i].id << '\t' << (i + 1) << '\t'
            << format_score(ranking[i].score) << '\t' << run_tag << '\n';
    }
}

void write_paths_jsonl(std::ostream& out, std::string_view question_id,
                       std::span<const PathCandidate> paths) {
    for (std::size_t i = 0; i < paths.size(); ++i) {
        nlohmann::ordered_json obj;
        obj["question_id"] = question_id;
        obj["rank"] = i + 1;
        obj["passages"] = paths[i].hop_passages;
        obj["hop_scores"] = paths[i].hop_scores;
        obj["total_score"] = paths[i].total_score;
        out << obj.dump() << '\n';
    }
}

} // namespace hopsearch
