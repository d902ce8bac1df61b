#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hopsearch/corpus.hpp"
#include "hopsearch/dense_index.hpp"
#include "hopsearch/encoder.hpp"
#include "hopsearch/lexical_index.hpp"
#include "hopsearch/ranked_list.hpp"
#include "hopsearch/reranker.hpp"

namespace hopsearch {

/// One beam hypothesis: a passage per hop with the score each hop earned.
/// total_score is exactly the left-to-right sum of hop_scores.
struct PathCandidate {
    std::vector<std::string> hop_passages;
    std::vector<double> hop_scores;
    double total_score = 0.0;
};

/// h(q, prev): the query vector for a hop. Implementations are read-only and
/// safe to share across threads.
class QueryEncoder {
public:
    virtual ~QueryEncoder() = default;
    [[nodiscard]] virtual std::vector<float> encode(const Question& question,
                                                    const Passage* prev) const = 0;
};

/// Query tower of a ToyEncoder.
class ToyQueryEncoder final : public QueryEncoder {
public:
    explicit ToyQueryEncoder(const ToyEncoder& encoder) : encoder_(encoder) {}
    [[nodiscard]] std::vector<float> encode(const Question& question,
                                            const Passage* prev) const override {
        return encoder_.encode_query(question, prev);
    }

private:
    const ToyEncoder& encoder_;
};

/// Query vectors computed outside the engine. Rows are keyed "<question id>"
/// for the first hop and "<question id>::<passage id>" for later hops.
class PrecomputedQueryEncoder final : public QueryEncoder {
public:
    explicit PrecomputedQueryEncoder(const EmbeddingMatrix& embeddings)
        : embeddings_(embeddings) {}
    [[nodiscard]] std::vector<float> encode(const Question& question,
                                            const Passage* prev) const override;

    static std::string key(std::string_view question_id, const Passage* prev);

private:
    const EmbeddingMatrix& embeddings_;
};

struct MdrOptions {
    std::size_t beam_size = 10;
    /// 0 keeps every path (up to beam_size^2).
    std::size_t k_paths = 0;
};

/// Iterative dense retrieval with beam search over two hops. Hop 2 never
/// revisits the hop-1 passage. Paths are ordered by total score, then by
/// (hop-1 id, hop-2 id).
std::vector<PathCandidate> mdr_retrieve(const Question& question, const MdrOptions& options,
                                        const QueryEncoder& encoder, const DenseIndex& index,
                                        const Corpus& corpus);

struct HybridOptions {
    std::size_t b1 = 10;
    std::size_t b2 = 10;
    std::size_t k_candidates = 100;
};

/// Rerank for hop 1, a hop-2 dense retriever conditioned on each hop-1
/// passage for hop 2. Both hops' scores are min-max normalised per question
/// (a constant score set maps to 1.0) and summed. Ties by (hop-1 rank, hop-2 id).
std::vector<PathCandidate> hybrid_retrieve(const Question& question, const HybridOptions& options,
                                           const Scorer& scorer, const QueryEncoder& hop2_encoder,
                                           const DenseIndex& dense, const LexicalIndex& lexical,
                                           const Corpus& corpus);

/// Single-hop dense retrieval with the question alone.
RankedList dense_retrieve(const Question& question, std::size_t k, const QueryEncoder& encoder,
                          const DenseIndex& index);

/// Paths in rank order, hop passages in hop order, first occurrence wins;
/// each passage keeps the total score of the path that introduced it.
RankedList flatten_paths(std::span<const PathCandidate> paths, std::size_t k);

/// Min-max scaling to [0, 1]; a constant (or single-element) input maps to 1.0.
std::vector<double> min_max_normalize(std::span<const double> values);

/// question_id \t passage_id \t rank \t score \t run_tag, rank starting at 1.
void write_run(std::ostream& out, std::string_view question_id, const RankedList& ranking,
               std::string_view run_tag);

/// One JSON object per path with hop-level scores.
void write_paths_jsonl(std::ostream& out, std::string_view question_id,
                       std::span<const PathCandidate> paths);

/// Shortest decimal form that parses back to the same double.
std::string format_score(double value);

} // namespace hopsearch
