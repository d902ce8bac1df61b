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
#include <vector>

#include "hopsearch/corpus.hpp"

namespace hopsearch {

/// 64-bit FNV-1a (offset basis 0xcbf29ce484222325, prime 0x100000001b3).
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// SplitMix64 step; used to expand a single seed into generator state.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// xoshiro256** 1.0 (Blackman & Vigna), seeded by four SplitMix64 outputs.
class Xoshiro256 {
public:
    explicit Xoshiro256(std::uint64_t seed) noexcept;

    std::uint64_t next() noexcept;
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform in [0, n), n > 0, by rejection sampling.
    std::uint64_t below(std::uint64_t n) noexcept;

private:
    std::uint64_t s_[4];
};

/// Bucket and sign a token contributes in the hashed bag-of-words.
struct HashedToken {
    std::uint32_t bucket = 0;
    int sign = 1;
};

/// bucket = fnv1a64(token) mod hash_dim; sign = -1 when bit 63 of the hash is set.
HashedToken hash_token(std::string_view token, std::uint32_t hash_dim) noexcept;

/// Sparse unit vector in R^hash_dim. Indices ascending and distinct.
struct SparseFeatures {
    std::vector<std::uint32_t> index;
    std::vector<double> value;

    [[nodiscard]] std::size_t nnz() const { return index.size(); }
};

/// Signed hashed counts of `tokens`, scaled by 1/sqrt(|tokens|) and then
/// L2-normalised. When the signed counts cancel out entirely the result is
/// the zero vector. Throws Error on an empty sequence.
SparseFeatures featurize(std::span<const std::string> tokens, std::uint32_t hash_dim);

enum class Tower { query, passage };

/// Dual linear encoder over hashed bag-of-words features:
///   encode(T) = W * featurize(T),   W = W_q (queries) or W_p (passages).
/// Similarity is the raw inner product of the two tower outputs.
///
/// Weights are stored feature-major: column j of W (a d-vector) occupies
/// [j*d, (j+1)*d). Initialisation draws W_q then W_p from one Xoshiro256
/// stream, every entry uniform in [-sqrt(3/d), sqrt(3/d)).
class ToyEncoder {
public:
    static constexpr std::uint32_t kDefaultHashDim = 4096;
    static constexpr std::uint32_t kDefaultEmbedDim = 64;

    ToyEncoder(std::uint32_t hash_dim = kDefaultHashDim,
               std::uint32_t embed_dim = kDefaultEmbedDim,
               std::uint64_t seed = 0);

    /// All-zero weights of the given shape.
    static ToyEncoder zeros(std::uint32_t hash_dim, std::uint32_t embed_dim);
    /// Explicit weights (feature-major, hash_dim * embed_dim each).
    static ToyEncoder from_weights(std::uint32_t hash_dim, std::uint32_t embed_dim,
                                   std::uint64_t seed, std::vector<double> query_weights,
                                   std::vector<double> passage_weights);

    [[nodiscard]] std::uint32_t hash_dim() const { return hash_dim_; }
    [[nodiscard]] std::uint32_t embed_dim() const { return embed_dim_; }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }

    [[nodiscard]] std::span<double> weights(Tower tower);
    [[nodiscard]] std::span<const double> weights(Tower tower) const;

    /// W * x in double precision.
    [[nodiscard]] std::vector<double> project(Tower tower, const SparseFeatures& x) const;

    [[nodiscard]] std::vector<float> encode_tokens(Tower tower,
                                                   std::span<const std::string> tokens) const;
    [[nodiscard]] std::vector<float> encode_passage(const Passage& passage) const;
    /// h(q, prev): question tokens followed by the previous hop's passage tokens.
    [[nodiscard]] std::vector<float> encode_query(const Question& question,
                                                  const Passage* prev = nullptr) const;

private:
    std::uint32_t hash_dim_;
    std::uint32_t embed_dim_;
    std::uint64_t seed_;
    std::vector<double> query_weights_;
    std::vector<double> passage_weights_;
};

/// Token sequence the query tower sees at a given hop.
std::vector<std::string> hop_query_tokens(const Question& question, const Passage* prev);

/// Id-aligned rows of f32 vectors. Ids are unique and every value is finite.
class EmbeddingMatrix {
public:
    explicit EmbeddingMatrix(std::uint32_t dim);

    /// Throws on dimension mismatch, duplicate id or non-finite values.
    void append(std::string id, std::span<const float> row);

    [[nodiscard]] std::uint32_t dim() const { return dim_; }
    [[nodiscard]] std::size_t size() const { return ids_.size(); }
    [[nodiscard]] bool empty() const { return ids_.empty(); }
    [[nodiscard]] const std::vector<std::string>& ids() const { return ids_; }
    [[nodiscard]] const std::string& id(std::size_t row) const { return ids_[row]; }
    [[nodiscard]] std::span<const float> row(std::size_t row) const;
    [[nodiscard]] std::span<const float> values() const { return values_; }
    [[nodiscard]] std::optional<std::size_t> find(std::string_view id) const;

    /// HSEM1 format; see docs/file_formats.md.
    void save(const std::filesystem::path& path) const;
    void write(std::ostream& out) const;
    static EmbeddingMatrix load(const std::filesystem::path& path);
    static EmbeddingMatrix read(std::istream& in);

private:
    std::uint32_t dim_;
    std::vector<std::string> ids_;
    std::vector<float> values_;
    std::map<std::string, std::size_t, std::less<>> row_by_id_;
};

/// Passage-tower embeddings of every passage, in corpus order.
EmbeddingMatrix encode_passages(const Corpus& corpus, const ToyEncoder& encoder);

} // namespace hopsearch
