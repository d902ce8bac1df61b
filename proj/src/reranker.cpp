#include "hopsearch/reranker.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "hopsearch/error.hpp"

namespace hopsearch {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
        const auto tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab - start));
        if (tab == std::string_view::npos) break;
        start = tab + 1;
    }
    return fields;
}

} // namespace

ExternalScores ExternalScores::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return read(in);
}

ExternalScores ExternalScores::read(std::istream& in) {
    ExternalScores scores;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
            throw Error("line " + std::to_string(line_no) + ": expected question_id, passage_id, score");
        }
        double value = 0.0;
        const auto* end = fields[2].data() + fields[2].size();
        const auto [ptr, ec] = std::from_chars(fields[2].data(), end, value);
        if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
            throw Error("line " + std::to_string(line_no) + ": invalid score '" +
                        std::string(fields[2]) + "'");
        }
        scores.set(std::string(fields[0]), std::string(fields[1]), value);
    }
    return scores;
}

void ExternalScores::set(std::string question_id, std::string passage_id, double score) {
    scores_[{std::move(question_id), std::move(passage_id)}] = score;
}

double ExternalScores::score(const Question& question, const Passage& passage) const {
    auto it = scores_.find({question.id, passage.id});
    if (it == scores_.end()) {
        throw Error("no external score for (" + question.id + ", " + passage.id + ")");
    }
    return it->second;
}

double OverlapScorer::score(const Question& question, const Passage& passage) const {
    const std::set<std::string_view> in_passage(passage.tokens.begin(), passage.tokens.end());
    double total = 0.0;
    for (const auto term : unique_terms(question.tokens)) {
        if (!in_passage.contains(term)) continue;
        if (const auto w = index_.idf(term)) total += *w;
    }
    return total;
}

double Bm25Scorer::score(const Question& question, const Passage& passage) const {
    return index_.bm25_score(question.tokens, passage.id);
}

RankedList rerank(const Question& question, const LexicalIndex& index, const Corpus& corpus,
                  const Scorer& scorer, const RerankOptions& options) {
    if (options.k_out == 0) {
        throw Error("k must be positive");
    }
    if (options.k_out > options.k_candidates) {
        throw Error("k_out must not exceed k_candidates");
    }
    const auto candidates = index.search(question.tokens, options.k_candidates);

    struct Rescored {
        const Hit* first_stage;
        double score;
    };
    std::vector<Rescored> rescored;
    rescored.reserve(candidates.size());
    for (const auto& hit : candidates) {
        rescored.push_back({&hit, scorer.score(question, corpus.passage(hit.id))});
    }
    std::sort(rescored.begin(), rescored.end(), [](const Rescored& a, const Rescored& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.first_stage->score != b.first_stage->score)
            return a.first_stage->score > b.first_stage->score;
        return a.first_stage->id < b.first_stage->id;
    });
    RankedList out;
    const auto n = std::min(options.k_out, rescored.size());
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({rescored[i].first_stage->id, rescored[i].score});
    }
    return out;
}

} // namespace hopsearch
