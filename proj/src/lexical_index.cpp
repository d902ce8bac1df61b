#include "hopsearch/lexical_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "hopsearch/error.hpp"

namespace hopsearch {

namespace {

constexpr std::string_view kMagic = "HSLX1";
constexpr std::string_view kParamsTag = "PARM";
constexpr std::string_view kDocsTag = "DOCS";
constexpr std::string_view kPostingsTag = "POST";

void write_section(std::ostream& out, std::string_view tag, const std::string& payload) {
    io::write_bytes(out, tag);
    io::write_uint<std::uint64_t>(out, payload.size());
    io::write_bytes(out, payload);
}

} // namespace

std::vector<std::string_view> unique_terms(std::span<const std::string> query) {
    std::vector<std::string_view> out;
    out.reserve(query.size());
    for (const auto& t : query) {
        if (std::find(out.begin(), out.end(), std::string_view(t)) == out.end()) {
            out.emplace_back(t);
        }
    }
    return out;
}

LexicalIndex LexicalIndex::build(const Corpus& corpus, Bm25Params params) {
    if (corpus.empty()) {
        throw Error("empty corpus");
    }
    LexicalIndex index;
    index.params_ = params;
    const auto& passages = corpus.passages();
    index.ids_.reserve(passages.size());
    index.doc_len_.reserve(passages.size());
    for (std::uint32_t doc = 0; doc < passages.size(); ++doc) {
        const auto& p = passages[doc];
        index.ids_.push_back(p.id);
        index.doc_len_.push_back(static_cast<std::uint32_t>(p.tokens.size()));
        std::map<std::string_view, std::uint32_t> tf;
        for (const auto& t : p.tokens) {
            ++tf[t];
        }
        for (const auto& [term, count] : tf) {
            auto it = index.postings_.find(term);
            if (it == index.postings_.end()) {
                it = index.postings_.emplace(std::string(term), std::vector<Posting>{}).first;
            }
            it->second.push_back({doc, count});
        }
    }
    index.finalize();
    return index;
}

void LexicalIndex::finalize() {
    doc_by_id_.clear();
    for (std::uint32_t doc = 0; doc < ids_.size(); ++doc) {
        if (!doc_by_id_.emplace(ids_[doc], doc).second) {
            throw Error("duplicate passage id " + ids_[doc]);
        }
    }
    id_rank_.assign(ids_.size(), 0);
    std::uint32_t rank = 0;
    for (const auto& [id, doc] : doc_by_id_) {
        id_rank_[doc] = rank++;
    }
    const double total = std::accumulate(doc_len_.begin(), doc_len_.end(), 0.0);
    avgdl_ = ids_.empty() ? 0.0 : total / static_cast<double>(ids_.size());
}

double LexicalIndex::term_weight(double idf, std::uint32_t tf, std::uint32_t doc_len) const {
    const double f = tf;
    const double norm = 1.0 - params_.b + params_.b * static_cast<double>(doc_len) / avgdl_;
    return idf * f * (params_.k1 + 1.0) / (f + params_.k1 * norm);
}

std::optional<double> LexicalIndex::idf(std::string_view term) const {
    const auto df = document_frequency(term);
    if (df == 0) {
        return std::nullopt;
    }
    const double n = static_cast<double>(ids_.size());
    const double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

std::size_t LexicalIndex::document_frequency(std::string_view term) const {
    const auto* list = postings(term);
    return list ? list->size() : 0;
}

const std::vector<Posting>* LexicalIndex::postings(std::string_view term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

std::optional<std::size_t> LexicalIndex::find_doc(std::string_view passage_id) const {
    auto it = doc_by_id_.find(passage_id);
    if (it == doc_by_id_.end()) return std::nullopt;
    return it->second;
}

double LexicalIndex::bm25_score(std::span<const std::string> query,
                                std::string_view passage_id) const {
    const auto doc = find_doc(passage_id);
    if (!doc) {
        throw Error("unknown passage id '" + std::string(passage_id) + "'");
    }
    // Same term order as search() so the two agree bit for bit.
    double score = 0.0;
    for (const auto term : unique_terms(query)) {
        const auto* list = postings(term);
        if (!list) continue;
        auto it = std::lower_bound(list->begin(), list->end(), *doc,
                                   [](const Posting& p, std::size_t d) { return p.doc < d; });
        if (it == list->end() || it->doc != *doc) continue;
        score += term_weight(*idf(term), it->tf, doc_len_[*doc]);
    }
    return score;
}

RankedList LexicalIndex::search(std::span<const std::string> query, std::size_t k) const {
    if (k == 0) {
        throw Error("k must be positive");
    }
    std::vector<double> acc(ids_.size(), 0.0);
    std::vector<std::uint32_t> touched;
    for (const auto term : unique_terms(query)) {
        const auto* list = postings(term);
        if (!list) continue;
        const double w = *idf(term);
        for (const auto& p : *list) {
            if (acc[p.doc] == 0.0) touched.push_back(p.doc);
            acc[p.doc] += term_weight(w, p.tf, doc_len_[p.doc]);
        }
    }
    std::erase_if(touched, [&](std::uint32_t d) { return !(acc[d] > 0.0); });
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());

    auto better = [&](std::uint32_t a, std::uint32_t b) {
        if (acc[a] != acc[b]) return acc[a] > acc[b];
        return id_rank_[a] < id_rank_[b];
    };
    const auto n = std::min(k, touched.size());
    std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(n),
                      touched.end(), better);
    RankedList out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({ids_[touched[i]], acc[touched[i]]});
    }
    return out;
}

bool LexicalIndex::matches(const Corpus& corpus) const {
    const auto& passages = corpus.passages();
    if (passages.size() != ids_.size()) return false;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (passages[i].id != ids_[i] || passages[i].tokens.size() != doc_len_[i]) return false;
    }
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        std::map<std::string_view, std::uint32_t> tf;
        for (const auto& t : passages[i].tokens) ++tf[t];
        pairs += tf.size();
        for (const auto& [term, count] : tf) {
            const auto* list = postings(term);
            if (!list) return false;
            const auto it = std::lower_bound(list->begin(), list->end(), i,
                                             [](const Posting& p, std::size_t doc) { return p.doc < doc; });
            if (it == list->end() || it->doc != i || it->tf != count) return false;
        }
    }
    std::size_t stored = 0;
    for (const auto& [term, list] : postings_) stored += list.size();
    return stored == pairs;
}

void LexicalIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    write(out);
    if (!out) {
        throw Error("write failed for " + path.string());
    }
}

void LexicalIndex::write(std::ostream& out) const {
    io::write_bytes(out, kMagic);

    std::ostringstream params;
    io::write_f64(params, params_.k1);
    io::write_f64(params, params_.b);
    write_section(out, kParamsTag, params.str());

    std::ostringstream docs;
    io::write_uint<std::uint64_t>(docs, ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        io::write_uint<std::uint32_t>(docs, static_cast<std::uint32_t>(ids_[i].size()));
        io::write_bytes(docs, ids_[i]);
        io::write_uint<std::uint32_t>(docs, doc_len_[i]);
    }
    write_section(out, kDocsTag, docs.str());

    std::ostringstream post;
    io::write_uint<std::uint64_t>(post, postings_.size());
    for (const auto& [term, list] : postings_) {
        io::write_uint<std::uint32_t>(post, static_cast<std::uint32_t>(term.size()));
        io::write_bytes(post, term);
        io::write_uint<std::uint32_t>(post, static_cast<std::uint32_t>(list.size()));
        for (const auto& p : list) {
            io::write_uint<std::uint32_t>(post, p.doc);
            io::write_uint<std::uint32_t>(post, p.tf);
        }
    }
    write_section(out, kPostingsTag, post.str());
}

LexicalIndex LexicalIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return read(in);
}

LexicalIndex LexicalIndex::read(std::istream& in) {
    io::Reader reader(in, "lexical index");
    reader.expect_magic(kMagic);

    LexicalIndex index;
    bool have_params = false, have_docs = false, have_postings = false;
    while (!reader.at_end()) {
        const auto tag = reader.read_string(4);
        const auto length = reader.read_uint<std::uint64_t>();
        std::istringstream payload(reader.read_string(length));
        io::Reader section(payload, "lexical index section " + tag);
        if (tag == kParamsTag) {
            index.params_.k1 = section.read_f64();
            index.params_.b = section.read_f64();
            have_params = true;
        } else if (tag == kDocsTag) {
            const auto count = section.read_uint<std::uint64_t>();
            for (std::uint64_t i = 0; i < count; ++i) {
                const auto len = section.read_uint<std::uint32_t>();
                index.ids_.push_back(section.read_string(len));
                index.doc_len_.push_back(section.read_uint<std::uint32_t>());
            }
            have_docs = true;
        } else if (tag == kPostingsTag) {
            const auto terms = section.read_uint<std::uint64_t>();
            for (std::uint64_t i = 0; i < terms; ++i) {
                const auto len = section.read_uint<std::uint32_t>();
                auto term = section.read_string(len);
                const auto n = section.read_uint<std::uint32_t>();
                std::vector<Posting> list(n);
                for (auto& p : list) {
                    p.doc = section.read_uint<std::uint32_t>();
                    p.tf = section.read_uint<std::uint32_t>();
                }
                index.postings_.emplace(std::move(term), std::move(list));
            }
            have_postings = true;
        }
        // Unknown sections are skipped.
    }
    if (!have_params || !have_docs || !have_postings) {
        throw Error("lexical index is missing a required section");
    }
    if (index.ids_.empty()) {
        throw Error("empty corpus");
    }

    std::vector<std::uint64_t> tf_sum(index.ids_.size(), 0);
    for (const auto& [term, list] : index.postings_) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            const auto& p = list[i];
            if (p.doc >= index.ids_.size() || p.tf == 0 || (i > 0 && list[i - 1].doc >= p.doc)) {
                throw Error("corrupt posting list for term '" + term + "'");
            }
            tf_sum[p.doc] += p.tf;
        }
    }
    for (std::size_t d = 0; d < index.ids_.size(); ++d) {
        if (tf_sum[d] != index.doc_len_[d]) {
            throw Error("document length mismatch for " + index.ids_[d]);
        }
    }
    index.finalize();
    return index;
}

} // namespace hopsearch
