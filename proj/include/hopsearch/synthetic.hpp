#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "hopsearch/corpus.hpp"

namespace hopsearch {

/// Generated 2-hop bridge world.
///
/// Every question names a unique pair of topic words. Its hop-1 passage
/// carries that pair plus the name of a bridge entity (a pair of bridge
/// words); the entity's own passage is the hop-2 gold and shares no token
/// with the question. Entities recur across questions, and every entity is
/// the bridge of at least one train question. Noise passages mix one topic
/// and one bridge word.
struct SyntheticOptions {
    std::size_t train_questions = 1200;
    std::size_t test_questions = 50;
    std::size_t noise_passages = 100;
    std::size_t topic_words = 60;
    std::size_t bridge_words = 40;
    std::size_t bridge_entities = 60;
    std::size_t property_words = 30;
    std::size_t filler_words = 120;
    std::size_t fillers_per_passage = 3;
    std::uint64_t seed = 1;
};

struct SyntheticWorld {
    Corpus corpus;  ///< all passages and all questions (train first)
    std::vector<Question> train;
    std::vector<Question> test;
};

SyntheticWorld make_two_hop_world(const SyntheticOptions& options);

/// Writes corpus.jsonl, train_questions.jsonl and test_questions.jsonl.
void write_world(const SyntheticWorld& world, const std::filesystem::path& dir);

} // namespace hopsearch
