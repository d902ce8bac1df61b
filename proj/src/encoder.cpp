#include "hopsearch/encoder.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "binary_io.hpp"
#include "hopsearch/error.hpp"

namespace hopsearch {

namespace {

constexpr std::string_view kEmbeddingMagic = "HSEM1";

} // namespace

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Xoshiro256::Xoshiro256(std::uint64_t seed) noexcept {
    std::uint64_t state = seed;
    for (auto& word : s_) {
        word = splitmix64(state);
    }
}

std::uint64_t Xoshiro256::next() noexcept {
    const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
}

double Xoshiro256::uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::uint64_t Xoshiro256::below(std::uint64_t n) noexcept {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = next();
        if (r >= threshold) return r % n;
    }
}

HashedToken hash_token(std::string_view token, std::uint32_t hash_dim) noexcept {
    const auto h = fnv1a64(token);
    return {static_cast<std::uint32_t>(h % hash_dim), (h >> 63) != 0 ? -1 : 1};
}

SparseFeatures featurize(std::span<const std::string> tokens, std::uint32_t hash_dim) {
    if (tokens.empty()) {
        throw Error("cannot encode an empty token sequence");
    }
    std::map<std::uint32_t, double> counts;
    for (const auto& t : tokens) {
        const auto h = hash_token(t, hash_dim);
        counts[h.bucket] += h.sign;
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(tokens.size()));
    double norm2 = 0.0;
    SparseFeatures x;
    for (const auto& [bucket, count] : counts) {
        if (count == 0.0) continue;
        const double v = count * scale;
        x.index.push_back(bucket);
        x.value.push_back(v);
        norm2 += v * v;
    }
    if (norm2 > 0.0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (auto& v : x.value) v *= inv;
    }
    return x;
}

ToyEncoder::ToyEncoder(std::uint32_t hash_dim, std::uint32_t embed_dim, std::uint64_t seed)
    : hash_dim_(hash_dim), embed_dim_(embed_dim), seed_(seed) {
    if (hash_dim == 0 || embed_dim == 0) {
        throw Error("invalid dimension");
    }
    const std::size_t n = static_cast<std::size_t>(hash_dim) * embed_dim;
    query_weights_.resize(n);
    passage_weights_.resize(n);
    Xoshiro256 rng(seed);
    const double bound = std::sqrt(3.0 / embed_dim);
    for (auto* w : {&query_weights_, &passage_weights_}) {
        for (auto& v : *w) {
            v = (2.0 * rng.uniform() - 1.0) * bound;
        }
    }
}

ToyEncoder ToyEncoder::zeros(std::uint32_t hash_dim, std::uint32_t embed_dim) {
    ToyEncoder enc(hash_dim, embed_dim, 0);
    std::fill(enc.query_weights_.begin(), enc.query_weights_.end(), 0.0);
    std::fill(enc.passage_weights_.begin(), enc.passage_weights_.end(), 0.0);
    return enc;
}

ToyEncoder ToyEncoder::from_weights(std::uint32_t hash_dim, std::uint32_t embed_dim,
                                    std::uint64_t seed, std::vector<double> query_weights,
                                    std::vector<double> passage_weights) {
    ToyEncoder enc = zeros(hash_dim, embed_dim);
    const std::size_t n = static_cast<std::size_t>(hash_dim) * embed_dim;
    if (query_weights.size() != n || passage_weights.size() != n) {
        throw Error("weight block size does not match encoder shape");
    }
    enc.seed_ = seed;
    enc.query_weights_ = std::move(query_weights);
    enc.passage_weights_ = std::move(passage_weights);
    return enc;
}

std::span<double> ToyEncoder::weights(Tower tower) {
    return tower == Tower::query ? std::span<double>(query_weights_)
                                 : std::span<double>(passage_weights_);
}

std::span<const double> ToyEncoder::weights(Tower tower) const {
    return tower == Tower::query ? std::span<const double>(query_weights_)
                                 : std::span<const double>(passage_weights_);
}

std::vector<double> ToyEncoder::project(Tower tower, const SparseFeatures& x) const {
    const auto w = weights(tower);
    std::vector<double> out(embed_dim_, 0.0);
    for (std::size_t i = 0; i < x.nnz(); ++i) {
        if (x.index[i] >= hash_dim_) {
            throw Error("feature index out of range");
        }
        const double v = x.value[i];
        const double* col = w.data() + static_cast<std::size_t>(x.index[i]) * embed_dim_;
        for (std::uint32_t r = 0; r < embed_dim_; ++r) {
            out[r] += col[r] * v;
        }
    }
    return out;
}

std::vector<float> ToyEncoder::encode_tokens(Tower tower,
                                             std::span<const std::string> tokens) const {
    const auto y = project(tower, featurize(tokens, hash_dim_));
    return {y.begin(), y.end()};
}

std::vector<float> ToyEncoder::encode_passage(const Passage& passage) const {
    if (passage.tokens.empty()) {
        throw Error("passage " + passage.id + " has no tokens");
    }
    return encode_tokens(Tower::passage, passage.tokens);
}

std::vector<float> ToyEncoder::encode_query(const Question& question, const Passage* prev) const {
    const auto tokens = hop_query_tokens(question, prev);
    if (tokens.empty()) {
        throw Error("question " + question.id + " has no tokens");
    }
    return encode_tokens(Tower::query, tokens);
}

std::vector<std::string> hop_query_tokens(const Question& question, const Passage* prev) {
    std::vector<std::string> tokens = question.tokens;
    if (prev) {
        tokens.insert(tokens.end(), prev->tokens.begin(), prev->tokens.end());
    }
    return tokens;
}

EmbeddingMatrix::EmbeddingMatrix(std::uint32_t dim) : dim_(dim) {
    if (dim == 0) {
        throw Error("invalid dimension");
    }
}

void EmbeddingMatrix::append(std::string id, std::span<const float> row) {
    if (row.size() != dim_) {
        throw Error("dimension mismatch for embedding " + id + ": got " +
                    std::to_string(row.size()) + ", expected " + std::to_string(dim_));
    }
    for (const float v : row) {
        if (!std::isfinite(v)) {
            throw Error("non-finite value in embedding " + id);
        }
    }
    if (row_by_id_.contains(id)) {
        throw Error("duplicate id " + id);
    }
    row_by_id_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
    values_.insert(values_.end(), row.begin(), row.end());
}

std::span<const float> EmbeddingMatrix::row(std::size_t r) const {
    return std::span<const float>(values_).subspan(r * dim_, dim_);
}

std::optional<std::size_t> EmbeddingMatrix::find(std::string_view id) const {
    auto it = row_by_id_.find(id);
    if (it == row_by_id_.end()) return std::nullopt;
    return it->second;
}

void EmbeddingMatrix::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    write(out);
    if (!out) {
        throw Error("write failed for " + path.string());
    }
}

void EmbeddingMatrix::write(std::ostream& out) const {
    io::write_bytes(out, kEmbeddingMagic);
    io::write_uint<std::uint32_t>(out, dim_);
    io::write_uint<std::uint64_t>(out, ids_.size());
    for (std::size_t r = 0; r < ids_.size(); ++r) {
        if (ids_[r].size() > std::numeric_limits<std::uint16_t>::max()) {
            throw Error("embedding id too long: " + ids_[r].substr(0, 32) + "...");
        }
        io::write_uint<std::uint16_t>(out, static_cast<std::uint16_t>(ids_[r].size()));
        io::write_bytes(out, ids_[r]);
        for (const float v : row(r)) {
            io::write_f32(out, v);
        }
    }
}

EmbeddingMatrix EmbeddingMatrix::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return read(in);
}

EmbeddingMatrix EmbeddingMatrix::read(std::istream& in) {
    io::Reader reader(in, "embedding file");
    reader.expect_magic(kEmbeddingMagic);
    const auto dim = reader.read_uint<std::uint32_t>();
    if (dim == 0) {
        throw Error("invalid dimension 0 in embedding file");
    }
    const auto count = reader.read_uint<std::uint64_t>();
    EmbeddingMatrix m(dim);
    std::vector<float> row(dim);
    for (std::uint64_t r = 0; r < count; ++r) {
        const auto len = reader.read_uint<std::uint16_t>();
        auto id = reader.read_string(len);
        for (auto& v : row) {
            v = reader.read_f32();
        }
        m.append(std::move(id), row);
    }
    return m;
}

EmbeddingMatrix encode_passages(const Corpus& corpus, const ToyEncoder& encoder) {
    EmbeddingMatrix m(encoder.embed_dim());
    for (const auto& p : corpus.passages()) {
        m.append(p.id, encoder.encode_passage(p));
    }
    return m;
}

} // namespace hopsearch
