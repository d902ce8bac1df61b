#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hopsearch/corpus.hpp"
#include "hopsearch/encoder.hpp"
#include "hopsearch/lexical_index.hpp"

namespace hopsearch {

/// Contrastive instance: query tokens, its positive passage, and optional
/// mined negatives.
struct TrainExample {
    std::vector<std::string> query_tokens;
    std::string positive_id;
    std::vector<std::string> hard_negative_ids;
};

// When `hard_negatives` is given, each example gets the best BM25 hit among
// the top 3 for its query that is neither of the question's gold passages.

/// Query = question, positive = gold hop-1 passage.
std::vector<TrainExample> build_hop1_dataset(std::span<const Question> questions,
                                             const Corpus& corpus,
                                             const LexicalIndex* hard_negatives = nullptr);

/// Query = question tokens followed by the gold hop-1 passage's tokens,
/// positive = gold hop-2 passage. Comparison questions follow the stored
/// gold order like bridge questions.
std::vector<TrainExample> build_dpr2_dataset(std::span<const Question> questions,
                                             const Corpus& corpus,
                                             const LexicalIndex* hard_negatives = nullptr);

/// Both of the above, interleaved per question (hop-1 example first). This is
/// the training set of the iterative (MDR-style) retriever.
std::vector<TrainExample> build_multihop_dataset(std::span<const Question> questions,
                                                 const Corpus& corpus,
                                                 const LexicalIndex* hard_negatives = nullptr);

struct BatchLoss {
    double loss = 0.0;                          ///< mean over the batch
    std::vector<double> per_example;
    std::vector<std::size_t> candidate_counts;  ///< per example, positive included
};

/// Gradient of the batch loss, laid out like ToyEncoder::weights(). The
/// column lists name the feature columns that may be non-zero (ascending);
/// every other entry is exactly 0.
struct Gradient {
    std::uint32_t embed_dim = 0;
    std::vector<double> query;
    std::vector<double> passage;
    std::vector<std::uint32_t> query_columns;
    std::vector<std::uint32_t> passage_columns;
};

/// Featurised passages, looked up by id. Built once per corpus and encoder
/// hash width; shared read-only between loss evaluations.
class FeatureStore {
public:
    FeatureStore(const Corpus& corpus, std::uint32_t hash_dim);
    [[nodiscard]] const SparseFeatures& passage(std::string_view id) const;
    [[nodiscard]] std::uint32_t hash_dim() const { return hash_dim_; }

private:
    const Corpus& corpus_;
    std::uint32_t hash_dim_;
    std::vector<SparseFeatures> features_;
};

/// In-batch softmax cross-entropy. Every example competes against the union of
/// the batch's positives and hard negatives (each distinct passage once):
///   loss_i = -log softmax_i(positive_i),  logits_ic = <W_q x_i, W_p y_c>.
/// Duplicate positives within a batch are rejected.
BatchLoss nll_loss(std::span<const TrainExample> batch, const ToyEncoder& encoder,
                   const FeatureStore& features);

/// Exact gradient of nll_loss().loss, with the loss itself.
Gradient loss_gradient(std::span<const TrainExample> batch, const ToyEncoder& encoder,
                       const FeatureStore& features, BatchLoss* loss = nullptr);

/// As above, reusing `grad`'s buffers: only its listed columns are cleared.
void loss_gradient(std::span<const TrainExample> batch, const ToyEncoder& encoder,
                   const FeatureStore& features, Gradient& grad, BatchLoss* loss = nullptr);

struct TrainConfig {
    std::size_t epochs = 25;
    std::size_t batch_size = 8;
    std::size_t grad_accum_steps = 1;
    double learning_rate = 1.0;
    double momentum = 0.0;
    std::uint64_t seed = 13;
};

/// Validates the config against a dataset of `example_count` examples.
void validate(const TrainConfig& config, std::size_t example_count, bool has_hard_negatives);

/// Mean of gradients added since the last reset.
class GradientAccumulator {
public:
    void add(const Gradient& g);
    [[nodiscard]] std::size_t count() const { return count_; }
    [[nodiscard]] Gradient mean() const;
    /// Turns the stored sum into the mean and returns it; valid until the
    /// next add() or reset().
    const Gradient& mean_in_place();
    /// Keeps the buffers; clears only the touched columns.
    void reset();

private:
    Gradient sum_;
    std::size_t count_ = 0;
};

/// SGD with optional heavy-ball momentum: v = mu*v + g; W -= lr*v.
class SgdOptimizer {
public:
    SgdOptimizer(double learning_rate, double momentum)
        : learning_rate_(learning_rate), momentum_(momentum) {}
    void step(ToyEncoder& encoder, const Gradient& g);

private:
    double learning_rate_;
    double momentum_;
    Gradient velocity_;
};

/// Example order for one epoch: a seeded shuffle cut into batches of exactly
/// batch_size. An example whose positive already sits in the batch being
/// filled waits for the next batch; whatever cannot fill a full batch at the
/// end of the epoch is dropped.
std::vector<std::vector<std::size_t>> plan_epoch(std::span<const TrainExample> examples,
                                                 std::size_t batch_size, std::uint64_t seed,
                                                 std::size_t epoch);

struct LossRecord {
    std::size_t epoch = 0;  ///< 1-based
    std::size_t step = 0;   ///< 1-based optimizer step within the epoch
    double loss = 0.0;      ///< mean of the accumulated batch losses
};

struct BatchObservation {
    std::size_t epoch = 0;
    std::size_t step = 0;
    std::size_t batch_size = 0;
    std::size_t hard_negatives = 0;  ///< distinct hard negatives not already a positive
    const BatchLoss* loss = nullptr;
};

struct TrainResult {
    ToyEncoder encoder;
    std::vector<LossRecord> trace;
    std::vector<double> epoch_loss;  ///< mean batch loss per epoch
};

/// Mini-batch SGD. Gradients of grad_accum_steps consecutive batches are
/// averaged before each update; a trailing group shorter than that is
/// applied as the mean of what it holds.
TrainResult train(std::span<const TrainExample> examples, const Corpus& corpus,
                  const TrainConfig& config, ToyEncoder initial,
                  const std::function<void(const BatchObservation&)>& observer = {});

/// loss trace as `epoch,step,loss`.
void write_loss_csv(std::ostream& out, std::span<const LossRecord> trace);

/// HSCK1 checkpoint: encoder weights plus the config that produced them.
void save_checkpoint(const std::filesystem::path& path, const ToyEncoder& encoder,
                     const TrainConfig& config);
void write_checkpoint(std::ostream& out, const ToyEncoder& encoder, const TrainConfig& config);

struct Checkpoint {
    ToyEncoder encoder;
    TrainConfig config;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint read_checkpoint(std::istream& in);

} // namespace hopsearch
