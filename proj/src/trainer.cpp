#include "hopsearch/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <list>
#include <map>
#include <ostream>
#include <set>

#include "binary_io.hpp"
#include "hopsearch/error.hpp"

namespace hopsearch {

namespace {

constexpr std::string_view kCheckpointMagic = "HSCK1";

std::vector<std::string> mine_hard_negative(std::span<const std::string> query,
                                            const Question& q, const LexicalIndex& index) {
    for (const auto& hit : index.search(query, 3)) {
        if (hit.id != q.gold_hop1 && hit.id != q.gold_hop2) {
            return {hit.id};
        }
    }
    return {};
}

TrainExample hop1_example(const Question& q, const Corpus& corpus, const LexicalIndex* index) {
    (void)corpus.passage(q.gold_hop1);
    TrainExample ex{q.tokens, q.gold_hop1, {}};
    if (index) ex.hard_negative_ids = mine_hard_negative(ex.query_tokens, q, *index);
    return ex;
}

TrainExample hop2_example(const Question& q, const Corpus& corpus, const LexicalIndex* index) {
    const auto& first = corpus.passage(q.gold_hop1);
    (void)corpus.passage(q.gold_hop2);
    TrainExample ex{hop_query_tokens(q, &first), q.gold_hop2, {}};
    if (index) ex.hard_negative_ids = mine_hard_negative(ex.query_tokens, q, *index);
    return ex;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

/// Forward pass shared by nll_loss and loss_gradient.
struct Forward {
    std::vector<SparseFeatures> query_features;
    std::vector<const SparseFeatures*> candidate_features;
    std::vector<std::vector<double>> queries;
    std::vector<std::vector<double>> candidates;
    std::vector<std::size_t> positive;            // candidate index of each example's positive
    std::vector<std::vector<double>> probability; // softmax over candidates, per example
    BatchLoss loss;
};

Forward forward(std::span<const TrainExample> batch, const ToyEncoder& encoder,
                const FeatureStore& features) {
    if (batch.empty()) {
        throw Error("empty batch");
    }
    if (features.hash_dim() != encoder.hash_dim()) {
        throw Error("feature store hash width does not match encoder");
    }
    Forward f;
    std::vector<std::string_view> candidate_ids;
    std::map<std::string_view, std::size_t> candidate_index;
    for (const auto& ex : batch) {
        if (!candidate_index.emplace(ex.positive_id, candidate_ids.size()).second) {
            throw Error("duplicate positive passage id " + ex.positive_id + " in batch");
        }
        f.positive.push_back(candidate_ids.size());
        candidate_ids.push_back(ex.positive_id);
    }
    for (const auto& ex : batch) {
        for (const auto& neg : ex.hard_negative_ids) {
            if (neg == ex.positive_id) {
                throw Error("passage " + neg + " is both positive and hard negative");
            }
            if (candidate_index.emplace(neg, candidate_ids.size()).second) {
                candidate_ids.push_back(neg);
            }
        }
    }

    for (const auto& ex : batch) {
        f.query_features.push_back(featurize(ex.query_tokens, encoder.hash_dim()));
        f.queries.push_back(encoder.project(Tower::query, f.query_features.back()));
    }
    for (const auto id : candidate_ids) {
        f.candidate_features.push_back(&features.passage(id));
        f.candidates.push_back(encoder.project(Tower::passage, *f.candidate_features.back()));
    }

    const std::size_t n = batch.size();
    const std::size_t c = candidate_ids.size();
    f.probability.assign(n, std::vector<double>(c));
    f.loss.per_example.resize(n);
    f.loss.candidate_counts.assign(n, c);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto& p = f.probability[i];
        for (std::size_t j = 0; j < c; ++j) p[j] = dot(f.queries[i], f.candidates[j]);
        const double m = *std::max_element(p.begin(), p.end());
        const double positive_logit = p[f.positive[i]];
        double sum = 0.0;
        for (auto& v : p) {
            v = std::exp(v - m);
            sum += v;
        }
        for (auto& v : p) v /= sum;
        f.loss.per_example[i] = std::log(sum) - (positive_logit - m);
        total += f.loss.per_example[i];
    }
    f.loss.loss = total / static_cast<double>(n);
    return f;
}

void add_columns(std::vector<std::uint32_t>& into, const std::vector<std::uint32_t>& from) {
    std::vector<std::uint32_t> merged;
    merged.reserve(into.size() + from.size());
    std::set_union(into.begin(), into.end(), from.begin(), from.end(), std::back_inserter(merged));
    into = std::move(merged);
}

template <typename Fn>
void for_columns(const std::vector<std::uint32_t>& columns, std::uint32_t d, Fn&& fn) {
    for (const auto col : columns) {
        const std::size_t base = static_cast<std::size_t>(col) * d;
        for (std::uint32_t r = 0; r < d; ++r) fn(base + r);
    }
}

} // namespace

std::vector<TrainExample> build_hop1_dataset(std::span<const Question> questions,
                                             const Corpus& corpus,
                                             const LexicalIndex* hard_negatives) {
    std::vector<TrainExample> out;
    out.reserve(questions.size());
    for (const auto& q : questions) out.push_back(hop1_example(q, corpus, hard_negatives));
    return out;
}

std::vector<TrainExample> build_dpr2_dataset(std::span<const Question> questions,
                                             const Corpus& corpus,
                                             const LexicalIndex* hard_negatives) {
    std::vector<TrainExample> out;
    out.reserve(questions.size());
    for (const auto& q : questions) out.push_back(hop2_example(q, corpus, hard_negatives));
    return out;
}

std::vector<TrainExample> build_multihop_dataset(std::span<const Question> questions,
                                                 const Corpus& corpus,
                                                 const LexicalIndex* hard_negatives) {
    std::vector<TrainExample> out;
    out.reserve(2 * questions.size());
    for (const auto& q : questions) {
        out.push_back(hop1_example(q, corpus, hard_negatives));
        out.push_back(hop2_example(q, corpus, hard_negatives));
    }
    return out;
}

FeatureStore::FeatureStore(const Corpus& corpus, std::uint32_t hash_dim)
    : corpus_(corpus), hash_dim_(hash_dim) {
    features_.reserve(corpus.size());
    for (const auto& p : corpus.passages()) {
        features_.push_back(p.tokens.empty() ? SparseFeatures{} : featurize(p.tokens, hash_dim));
    }
}

const SparseFeatures& FeatureStore::passage(std::string_view id) const {
    const auto* p = corpus_.find_passage(id);
    if (!p) {
        throw Error("unknown passage id '" + std::string(id) + "'");
    }
    if (p->tokens.empty()) {
        throw Error("passage " + p->id + " has no tokens");
    }
    return features_[static_cast<std::size_t>(p - corpus_.passages().data())];
}

BatchLoss nll_loss(std::span<const TrainExample> batch, const ToyEncoder& encoder,
                   const FeatureStore& features) {
    return forward(batch, encoder, features).loss;
}

namespace {

void clear_gradient(Gradient& g, std::uint32_t hash_dim, std::uint32_t embed_dim) {
    const std::size_t size = static_cast<std::size_t>(hash_dim) * embed_dim;
    if (g.embed_dim != embed_dim || g.query.size() != size || g.passage.size() != size) {
        g = Gradient{};
        g.embed_dim = embed_dim;
        g.query.assign(size, 0.0);
        g.passage.assign(size, 0.0);
        return;
    }
    for_columns(g.query_columns, embed_dim, [&](std::size_t i) { g.query[i] = 0.0; });
    for_columns(g.passage_columns, embed_dim, [&](std::size_t i) { g.passage[i] = 0.0; });
    g.query_columns.clear();
    g.passage_columns.clear();
}

} // namespace

Gradient loss_gradient(std::span<const TrainExample> batch, const ToyEncoder& encoder,
                       const FeatureStore& features, BatchLoss* loss) {
    Gradient grad;
    loss_gradient(batch, encoder, features, grad, loss);
    return grad;
}

void loss_gradient(std::span<const TrainExample> batch, const ToyEncoder& encoder,
                   const FeatureStore& features, Gradient& grad, BatchLoss* loss) {
    auto f = forward(batch, encoder, features);
    const std::uint32_t d = encoder.embed_dim();
    const std::size_t n = batch.size();
    const std::size_t c = f.candidates.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    // dL/dlogit_ij = (p_ij - [j == pos_i]) / n
    std::vector<std::vector<double>> dq(n, std::vector<double>(d, 0.0));
    std::vector<std::vector<double>> dc(c, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            const double g = (f.probability[i][j] - (j == f.positive[i] ? 1.0 : 0.0)) * inv_n;
            for (std::uint32_t r = 0; r < d; ++r) {
                dq[i][r] += g * f.candidates[j][r];
                dc[j][r] += g * f.queries[i][r];
            }
        }
    }

    clear_gradient(grad, encoder.hash_dim(), d);
    auto scatter = [d](std::vector<double>& w, std::vector<std::uint32_t>& columns,
                       const SparseFeatures& x, const std::vector<double>& dy) {
        for (std::size_t k = 0; k < x.nnz(); ++k) {
            double* col = w.data() + static_cast<std::size_t>(x.index[k]) * d;
            for (std::uint32_t r = 0; r < d; ++r) col[r] += x.value[k] * dy[r];
            columns.push_back(x.index[k]);
        }
    };
    for (std::size_t i = 0; i < n; ++i) {
        scatter(grad.query, grad.query_columns, f.query_features[i], dq[i]);
    }
    for (std::size_t j = 0; j < c; ++j) {
        scatter(grad.passage, grad.passage_columns, *f.candidate_features[j], dc[j]);
    }
    for (auto* cols : {&grad.query_columns, &grad.passage_columns}) {
        std::sort(cols->begin(), cols->end());
        cols->erase(std::unique(cols->begin(), cols->end()), cols->end());
    }
    if (loss) *loss = std::move(f.loss);
}

void validate(const TrainConfig& config, std::size_t example_count, bool has_hard_negatives) {
    if (config.epochs == 0) throw Error("epochs must be positive");
    if (config.batch_size == 0) throw Error("batch size must be positive");
    if (config.grad_accum_steps == 0) throw Error("gradient accumulation steps must be >= 1");
    if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
        throw Error("learning rate must be positive");
    }
    if (!(config.momentum >= 0.0 && config.momentum < 1.0)) {
        throw Error("momentum must lie in [0, 1)");
    }
    if (config.batch_size < 2 && !has_hard_negatives) {
        throw Error("batch size must be >= 2 without hard negatives");
    }
    if (example_count == 0) throw Error("no training examples");
    if (config.batch_size > example_count) {
        throw Error("batch size " + std::to_string(config.batch_size) + " exceeds example count " +
                    std::to_string(example_count));
    }
}

void GradientAccumulator::add(const Gradient& g) {
    if (count_ == 0) {
        sum_.embed_dim = g.embed_dim;
        if (sum_.query.size() != g.query.size() || sum_.passage.size() != g.passage.size()) {
            sum_.query.assign(g.query.size(), 0.0);
            sum_.passage.assign(g.passage.size(), 0.0);
        }
    } else if (g.embed_dim != sum_.embed_dim || g.query.size() != sum_.query.size() ||
               g.passage.size() != sum_.passage.size()) {
        throw Error("gradient shape mismatch");
    }
    for_columns(g.query_columns, g.embed_dim, [&](std::size_t i) { sum_.query[i] += g.query[i]; });
    for_columns(g.passage_columns, g.embed_dim,
                [&](std::size_t i) { sum_.passage[i] += g.passage[i]; });
    add_columns(sum_.query_columns, g.query_columns);
    add_columns(sum_.passage_columns, g.passage_columns);
    ++count_;
}

Gradient GradientAccumulator::mean() const {
    Gradient m = sum_;
    GradientAccumulator copy;
    copy.sum_ = std::move(m);
    copy.count_ = count_;
    return copy.mean_in_place();
}

const Gradient& GradientAccumulator::mean_in_place() {
    if (count_ == 0) {
        throw Error("no gradients accumulated");
    }
    const double inv = 1.0 / static_cast<double>(count_);
    for_columns(sum_.query_columns, sum_.embed_dim, [&](std::size_t i) { sum_.query[i] *= inv; });
    for_columns(sum_.passage_columns, sum_.embed_dim, [&](std::size_t i) { sum_.passage[i] *= inv; });
    count_ = 1;
    return sum_;
}

void GradientAccumulator::reset() {
    for_columns(sum_.query_columns, sum_.embed_dim, [&](std::size_t i) { sum_.query[i] = 0.0; });
    for_columns(sum_.passage_columns, sum_.embed_dim, [&](std::size_t i) { sum_.passage[i] = 0.0; });
    sum_.query_columns.clear();
    sum_.passage_columns.clear();
    count_ = 0;
}

void SgdOptimizer::step(ToyEncoder& encoder, const Gradient& g) {
    auto wq = encoder.weights(Tower::query);
    auto wp = encoder.weights(Tower::passage);
    if (g.query.size() != wq.size() || g.passage.size() != wp.size() ||
        g.embed_dim != encoder.embed_dim()) {
        throw Error("gradient shape does not match encoder");
    }
    if (momentum_ == 0.0) {
        for_columns(g.query_columns, g.embed_dim,
                    [&](std::size_t i) { wq[i] -= learning_rate_ * g.query[i]; });
        for_columns(g.passage_columns, g.embed_dim,
                    [&](std::size_t i) { wp[i] -= learning_rate_ * g.passage[i]; });
        return;
    }
    if (velocity_.query.empty()) {
        velocity_.query.assign(wq.size(), 0.0);
        velocity_.passage.assign(wp.size(), 0.0);
    }
    for (std::size_t i = 0; i < wq.size(); ++i) {
        velocity_.query[i] = momentum_ * velocity_.query[i] + g.query[i];
        wq[i] -= learning_rate_ * velocity_.query[i];
    }
    for (std::size_t i = 0; i < wp.size(); ++i) {
        velocity_.passage[i] = momentum_ * velocity_.passage[i] + g.passage[i];
        wp[i] -= learning_rate_ * velocity_.passage[i];
    }
}

std::vector<std::vector<std::size_t>> plan_epoch(std::span<const TrainExample> examples,
                                                 std::size_t batch_size, std::uint64_t seed,
                                                 std::size_t epoch) {
    if (batch_size == 0) {
        throw Error("batch size must be positive");
    }
    std::uint64_t mix = seed;
    for (std::size_t e = 0; e <= epoch; ++e) splitmix64(mix);
    Xoshiro256 rng(mix);
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }

    std::list<std::size_t> pending(order.begin(), order.end());
    std::vector<std::vector<std::size_t>> batches;
    while (pending.size() >= batch_size) {
        std::vector<std::size_t> batch;
        std::set<std::string_view> positives;
        for (auto it = pending.begin(); it != pending.end() && batch.size() < batch_size;) {
            if (positives.insert(examples[*it].positive_id).second) {
                batch.push_back(*it);
                it = pending.erase(it);
            } else {
                ++it;
            }
        }
        if (batch.size() < batch_size) break;
        batches.push_back(std::move(batch));
    }
    return batches;
}

TrainResult train(std::span<const TrainExample> examples, const Corpus& corpus,
                  const TrainConfig& config, ToyEncoder initial,
                  const std::function<void(const BatchObservation&)>& observer) {
    const bool has_hard = std::any_of(examples.begin(), examples.end(), [](const TrainExample& e) {
        return !e.hard_negative_ids.empty();
    });
    validate(config, examples.size(), has_hard);

    const FeatureStore features(corpus, initial.hash_dim());
    TrainResult result{std::move(initial), {}, {}};
    SgdOptimizer optimizer(config.learning_rate, config.momentum);
    GradientAccumulator accumulator;
    std::vector<TrainExample> batch;
    Gradient scratch;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto plan = plan_epoch(examples, config.batch_size, config.seed, epoch);
        if (plan.empty()) {
            throw Error("epoch " + std::to_string(epoch) + " cannot fill a single batch");
        }
        std::size_t step = 0;
        double epoch_total = 0.0;
        double group_total = 0.0;
        for (std::size_t b = 0; b < plan.size(); ++b) {
            batch.clear();
            for (const auto idx : plan[b]) batch.push_back(examples[idx]);
            BatchLoss loss;
            loss_gradient(batch, result.encoder, features, scratch, &loss);
            accumulator.add(scratch);
            if (observer) {
                observer({epoch, step + 1, batch.size(),
                          loss.candidate_counts.front() - batch.size(), &loss});
            }
            epoch_total += loss.loss;
            group_total += loss.loss;
            if (accumulator.count() == config.grad_accum_steps || b + 1 == plan.size()) {
                const double group_loss = group_total / static_cast<double>(accumulator.count());
                optimizer.step(result.encoder, accumulator.mean_in_place());
                accumulator.reset();
                group_total = 0.0;
                result.trace.push_back({epoch, ++step, group_loss});
            }
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(plan.size()));
    }
    return result;
}

void write_loss_csv(std::ostream& out, std::span<const LossRecord> trace) {
    out << "epoch,step,loss\n";
    char buf[64];
    for (const auto& r : trace) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.loss);
        out << r.epoch << ',' << r.step << ',' << buf << '\n';
    }
}

void save_checkpoint(const std::filesystem::path& path, const ToyEncoder& encoder,
                     const TrainConfig& config) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    write_checkpoint(out, encoder, config);
    if (!out) {
        throw Error("write failed for " + path.string());
    }
}

void write_checkpoint(std::ostream& out, const ToyEncoder& encoder, const TrainConfig& config) {
    io::write_bytes(out, kCheckpointMagic);
    io::write_uint<std::uint32_t>(out, encoder.hash_dim());
    io::write_uint<std::uint32_t>(out, encoder.embed_dim());
    io::write_uint<std::uint64_t>(out, encoder.seed());
    io::write_uint<std::uint64_t>(out, config.epochs);
    io::write_uint<std::uint64_t>(out, config.batch_size);
    io::write_uint<std::uint64_t>(out, config.grad_accum_steps);
    io::write_f64(out, config.learning_rate);
    io::write_f64(out, config.momentum);
    io::write_uint<std::uint64_t>(out, config.seed);
    for (const auto tower : {Tower::query, Tower::passage}) {
        for (const double w : encoder.weights(tower)) {
            io::write_f32(out, static_cast<float>(w));
        }
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return read_checkpoint(in);
}

Checkpoint read_checkpoint(std::istream& in) {
    io::Reader reader(in, "checkpoint");
    reader.expect_magic(kCheckpointMagic);
    const auto hash_dim = reader.read_uint<std::uint32_t>();
    const auto embed_dim = reader.read_uint<std::uint32_t>();
    if (hash_dim == 0 || embed_dim == 0) {
        throw Error("invalid dimension in checkpoint");
    }
    const auto encoder_seed = reader.read_uint<std::uint64_t>();
    TrainConfig config;
    config.epochs = reader.read_uint<std::uint64_t>();
    config.batch_size = reader.read_uint<std::uint64_t>();
    config.grad_accum_steps = reader.read_uint<std::uint64_t>();
    config.learning_rate = reader.read_f64();
    config.momentum = reader.read_f64();
    config.seed = reader.read_uint<std::uint64_t>();
    const std::size_t n = static_cast<std::size_t>(hash_dim) * embed_dim;
    std::vector<double> query(n), passage(n);
    for (auto* block : {&query, &passage}) {
        for (auto& w : *block) {
            const float v = reader.read_f32();
            if (!std::isfinite(v)) {
                throw Error("non-finite weight in checkpoint");
            }
            w = v;
        }
    }
    return {ToyEncoder::from_weights(hash_dim, embed_dim, encoder_seed, std::move(query),
                                     std::move(passage)),
            config};
}

} // namespace hopsearch
