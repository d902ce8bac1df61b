#include "hopsearch/dense_index.hpp"

#include <algorithm>
#include <numeric>

#include "hopsearch/error.hpp"

namespace hopsearch {

double inner_product(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

DenseIndex::DenseIndex(EmbeddingMatrix matrix) : matrix_(std::move(matrix)) {
    std::vector<std::uint32_t> order(matrix_.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(),
              [&](std::uint32_t a, std::uint32_t b) { return matrix_.id(a) < matrix_.id(b); });
    id_rank_.resize(order.size());
    for (std::uint32_t r = 0; r < order.size(); ++r) {
        id_rank_[order[r]] = r;
    }
}

RankedList DenseIndex::search(std::span<const float> query, std::size_t k,
                              const ExcludeSet& exclude) const {
    if (query.size() != matrix_.dim()) {
        throw Error("query dimension " + std::to_string(query.size()) +
                    " does not match index dimension " + std::to_string(matrix_.dim()));
    }
    if (k == 0) {
        throw Error("k must be positive");
    }
    std::vector<std::uint32_t> rows;
    std::vector<double> scores(matrix_.size());
    rows.reserve(matrix_.size());
    for (std::uint32_t r = 0; r < matrix_.size(); ++r) {
        if (!exclude.empty() && exclude.contains(matrix_.id(r))) continue;
        scores[r] = inner_product(query, matrix_.row(r));
        rows.push_back(r);
    }
    auto better = [&](std::uint32_t a, std::uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return id_rank_[a] < id_rank_[b];
    };
    const auto n = std::min(k, rows.size());
    std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n), rows.end(),
                      better);
    RankedList out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({matrix_.id(rows[i]), scores[rows[i]]});
    }
    return out;
}

std::vector<RankedList> DenseIndex::batch_search(std::span<const float> queries, std::size_t k,
                                                 std::span<const ExcludeSet> excludes) const {
    const std::size_t d = matrix_.dim();
    if (queries.size() % d != 0) {
        throw Error("query batch size is not a multiple of the index dimension");
    }
    const std::size_t n = queries.size() / d;
    if (!excludes.empty() && excludes.size() != n) {
        throw Error("exclude list count does not match query count");
    }
    static const ExcludeSet kNone;
    std::vector<RankedList> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(search(queries.subspan(i * d, d), k, excludes.empty() ? kNone : excludes[i]));
    }
    return out;
}

} // namespace hopsearch
