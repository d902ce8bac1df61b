#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hopsearch/corpus.hpp"
#include "hopsearch/ranked_list.hpp"

namespace hopsearch {

/// Anserini defaults.
struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

struct Posting {
    std::uint32_t doc = 0;  ///< position in LexicalIndex::doc_ids()
    std::uint32_t tf = 0;
};

/// BM25 inverted index (Lucene-style idf). Immutable after build/load; all
/// const members are safe to call concurrently.
///
///   score(q, d) = sum over distinct t in q of
///       idf(t) * tf(t,d) * (k1 + 1) / (tf(t,d) + k1 * (1 - b + b * |d| / avgdl))
///   idf(t)      = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
class LexicalIndex {
public:
    static LexicalIndex build(const Corpus& corpus, Bm25Params params = {});

    /// Throws Error("unknown passage id ...").
    [[nodiscard]] double bm25_score(std::span<const std::string> query,
                                    std::string_view passage_id) const;

    /// Top-k passages with positive score; ties by ascending passage id.
    [[nodiscard]] RankedList search(std::span<const std::string> query, std::size_t k) const;

    /// nullopt for terms that occur nowhere in the collection.
    [[nodiscard]] std::optional<double> idf(std::string_view term) const;
    [[nodiscard]] std::size_t document_frequency(std::string_view term) const;
    [[nodiscard]] const std::vector<Posting>* postings(std::string_view term) const;

    [[nodiscard]] std::size_t doc_count() const { return ids_.size(); }
    [[nodiscard]] std::size_t term_count() const { return postings_.size(); }
    [[nodiscard]] double avg_doc_len() const { return avgdl_; }
    [[nodiscard]] const Bm25Params& params() const { return params_; }
    [[nodiscard]] const std::vector<std::string>& doc_ids() const { return ids_; }
    [[nodiscard]] std::uint32_t doc_length(std::size_t doc) const { return doc_len_[doc]; }
    [[nodiscard]] std::optional<std::size_t> find_doc(std::string_view passage_id) const;

    /// True when the index was built from exactly this corpus: same ids in
    /// order, same lengths, same postings.
    [[nodiscard]] bool matches(const Corpus& corpus) const;

    /// HSLX1 persistence; layout in docs/file_formats.md.
    void save(const std::filesystem::path& path) const;
    void write(std::ostream& out) const;
    static LexicalIndex load(const std::filesystem::path& path);
    static LexicalIndex read(std::istream& in);

private:
    LexicalIndex() = default;
    void finalize();
    [[nodiscard]] double term_weight(double idf, std::uint32_t tf, std::uint32_t doc_len) const;

    Bm25Params params_;
    std::vector<std::string> ids_;
    std::vector<std::uint32_t> doc_len_;
    std::vector<std::uint32_t> id_rank_;  // lexicographic rank of each id, for tie-breaks
    std::map<std::string, std::uint32_t, std::less<>> doc_by_id_;
    std::map<std::string, std::vector<Posting>, std::less<>> postings_;
    double avgdl_ = 0.0;
};

/// Distinct terms of `query` in first-occurrence order.
std::vector<std::string_view> unique_terms(std::span<const std::string> query);

} // namespace hopsearch
