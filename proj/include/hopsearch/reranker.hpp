#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>

#include "hopsearch/corpus.hpp"
#include "hopsearch/lexical_index.hpp"
#include "hopsearch/ranked_list.hpp"

namespace hopsearch {

/// Pointwise relevance model used for second-stage rescoring. Implementations
/// must be deterministic and safe to call from several threads.
class Scorer {
public:
    virtual ~Scorer() = default;
    [[nodiscard]] virtual double score(const Question& question, const Passage& passage) const = 0;
};

/// Scores produced elsewhere (e.g. by a cross-encoder), keyed by
/// (question id, passage id). Missing pairs are an error, never 0.
class ExternalScores final : public Scorer {
public:
    /// TSV: question_id \t passage_id \t score, no header.
    static ExternalScores load(const std::filesystem::path& path);
    static ExternalScores read(std::istream& in);

    void set(std::string question_id, std::string passage_id, double score);
    [[nodiscard]] std::size_t size() const { return scores_.size(); }

    [[nodiscard]] double score(const Question& question, const Passage& passage) const override;

private:
    std::map<std::pair<std::string, std::string>, double> scores_;
};

/// Sum of BM25 idf over the distinct terms shared by question and passage.
class OverlapScorer final : public Scorer {
public:
    explicit OverlapScorer(const LexicalIndex& index) : index_(index) {}
    [[nodiscard]] double score(const Question& question, const Passage& passage) const override;

private:
    const LexicalIndex& index_;
};

/// The first-stage BM25 score itself; reranking with it is the identity.
class Bm25Scorer final : public Scorer {
public:
    explicit Bm25Scorer(const LexicalIndex& index) : index_(index) {}
    [[nodiscard]] double score(const Question& question, const Passage& passage) const override;

private:
    const LexicalIndex& index_;
};

struct RerankOptions {
    std::size_t k_candidates = 100;
    std::size_t k_out = 10;
};

/// BM25 top-k_candidates, rescored by `scorer` and sorted by that score
/// (BM25 score then passage id break ties). Returns at most k_out hits
/// carrying the scorer's scores.
RankedList rerank(const Question& question, const LexicalIndex& index, const Corpus& corpus,
                  const Scorer& scorer, const RerankOptions& options = {});

} // namespace hopsearch
