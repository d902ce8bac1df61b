#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hopsearch/encoder.hpp"
#include "hopsearch/ranked_list.hpp"

namespace hopsearch {

using ExcludeSet = std::set<std::string, std::less<>>;

/// Exact maximum-inner-product search. Scores accumulate in double, in row
/// order of dimensions, so they are reproducible by a plain scalar loop.
class DenseIndex {
public:
    explicit DenseIndex(EmbeddingMatrix matrix);

    [[nodiscard]] const EmbeddingMatrix& matrix() const { return matrix_; }
    [[nodiscard]] std::size_t size() const { return matrix_.size(); }
    [[nodiscard]] std::uint32_t dim() const { return matrix_.dim(); }

    /// Top-k rows by inner product, ties by ascending id; excluded ids are skipped.
    [[nodiscard]] RankedList search(std::span<const float> query, std::size_t k,
                                    const ExcludeSet& exclude = {}) const;

    /// `queries` is row-major (n x dim). `excludes` is empty or has n entries.
    /// Result i is identical to search(query i, k, excludes[i]).
    [[nodiscard]] std::vector<RankedList> batch_search(std::span<const float> queries,
                                                       std::size_t k,
                                                       std::span<const ExcludeSet> excludes = {}) const;

private:
    EmbeddingMatrix matrix_;
    std::vector<std::uint32_t> id_rank_;
};

/// <a, b> accumulated in double.
double inner_product(std::span<const float> a, std::span<const float> b);

} // namespace hopsearch
