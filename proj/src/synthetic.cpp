#include "hopsearch/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <set>
#include <utility>

#include "hopsearch/encoder.hpp"
#include "hopsearch/error.hpp"

namespace hopsearch {

namespace {

constexpr std::array<const char*, 16> kSyllables = {"ka", "lo", "mi", "ru", "te", "so", "na", "vi",
                                                    "do", "pe", "zu", "ha", "bi", "go", "fa", "ye"};

/// Three-syllable pseudo-word; distinct for distinct n < 4096.
std::string make_word(std::size_t n) {
    std::string w;
    for (int i = 0; i < 3; ++i) {
        w += kSyllables[n % kSyllables.size()];
        n /= kSyllables.size();
    }
    return w;
}

std::string capitalize(std::string w) {
    if (!w.empty()) w[0] = static_cast<char>(w[0] - 'a' + 'A');
    return w;
}

class WordPool {
public:
    WordPool(std::size_t offset, std::size_t size) {
        for (std::size_t i = 0; i < size; ++i) words_.push_back(make_word(offset + i));
    }
    [[nodiscard]] const std::string& pick(Xoshiro256& rng) const {
        return words_[rng.below(words_.size())];
    }
    [[nodiscard]] std::pair<std::size_t, std::size_t> pick_pair(Xoshiro256& rng) const {
        const auto a = rng.below(words_.size());
        auto b = rng.below(words_.size() - 1);
        if (b >= a) ++b;
        return {std::min<std::size_t>(a, b), std::max<std::size_t>(a, b)};
    }
    [[nodiscard]] const std::string& operator[](std::size_t i) const { return words_[i]; }
    [[nodiscard]] std::size_t size() const { return words_.size(); }

private:
    std::vector<std::string> words_;
};

std::pair<std::size_t, std::size_t> unique_pair(const WordPool& pool, Xoshiro256& rng,
                                                std::set<std::pair<std::size_t, std::size_t>>& used) {
    const std::size_t capacity = pool.size() * (pool.size() - 1) / 2;
    if (used.size() >= capacity) {
        throw Error("word pool too small for the requested number of questions");
    }
    for (;;) {
        const auto p = pool.pick_pair(rng);
        if (used.insert(p).second) return p;
    }
}

} // namespace

SyntheticWorld make_two_hop_world(const SyntheticOptions& options) {
    const std::size_t total_words = options.topic_words + options.bridge_words +
                                    options.property_words + options.filler_words;
    if (total_words > 4096 || options.topic_words < 2 || options.bridge_words < 2 ||
        options.property_words < 2 || options.filler_words < 1) {
        throw Error("invalid synthetic word pool sizes");
    }
    Xoshiro256 rng(options.seed);
    const WordPool topics(0, options.topic_words);
    const WordPool bridges(options.topic_words, options.bridge_words);
    const WordPool properties(options.topic_words + options.bridge_words, options.property_words);
    const WordPool fillers(options.topic_words + options.bridge_words + options.property_words,
                           options.filler_words);

    const std::size_t n_questions = options.train_questions + options.test_questions;
    if (options.bridge_entities == 0 || options.bridge_entities > options.train_questions) {
        throw Error("bridge_entities must be in [1, train_questions]");
    }
    const std::size_t n_passages = n_questions + options.bridge_entities + options.noise_passages;

    // Passage ids are a random permutation so id order carries no signal.
    std::vector<std::size_t> id_numbers(n_passages);
    for (std::size_t i = 0; i < n_passages; ++i) id_numbers[i] = i;
    for (std::size_t i = n_passages; i > 1; --i) std::swap(id_numbers[i - 1], id_numbers[rng.below(i)]);
    auto passage_id = [&](std::size_t slot) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "P%05zu", id_numbers[slot]);
        return std::string(buf);
    };
    auto filler_text = [&] {
        std::string s;
        for (std::size_t i = 0; i < options.fillers_per_passage; ++i) s += " " + fillers.pick(rng);
        return s;
    };

    struct Draft {
        std::string id, title, text;
    };
    std::vector<Draft> drafts;
    struct QuestionDraft {
        std::string id, text, hop1, hop2;
    };
    std::vector<QuestionDraft> questions;
    std::set<std::pair<std::size_t, std::size_t>> used_topics, used_bridges;

    std::size_t slot = 0;
    struct Entity {
        std::string name, passage_id;
    };
    std::vector<Entity> entities;
    for (std::size_t e = 0; e < options.bridge_entities; ++e) {
        const auto [b1, b2] = unique_pair(bridges, rng, used_bridges);
        const auto [r1, r2] = properties.pick_pair(rng);
        const auto name = capitalize(bridges[b1]) + " " + capitalize(bridges[b2]);
        Draft second{passage_id(slot++), name, ""};
        second.text = name + " was noted for " + properties[r1] + " " + properties[r2] + filler_text() + ".";
        entities.push_back({name, second.id});
        drafts.push_back(std::move(second));
    }

    for (std::size_t qi = 0; qi < n_questions; ++qi) {
        const auto [t1, t2] = unique_pair(topics, rng, used_topics);
        // The first train questions cover every entity once, so each test
        // entity has been seen in training.
        const auto& entity = qi < entities.size() ? entities[qi] : entities[rng.below(entities.size())];
        const auto topic = capitalize(topics[t1]) + " " + capitalize(topics[t2]);

        Draft first{passage_id(slot++), topic, ""};
        first.text = topic + " relates closely with " + entity.name + filler_text() + ".";

        char qid[32];
        std::snprintf(qid, sizeof(qid), "Q%04zu", qi);
        questions.push_back({qid, "What does " + topic + " connect through?", first.id, entity.passage_id});
        drafts.push_back(std::move(first));
    }
    for (std::size_t i = 0; i < options.noise_passages; ++i) {
        const auto title = capitalize(topics.pick(rng)) + " " + capitalize(bridges.pick(rng));
        drafts.push_back({passage_id(slot++), title,
                          title + filler_text() + " " + properties.pick(rng) + "."});
    }
    std::sort(drafts.begin(), drafts.end(), [](const Draft& a, const Draft& b) { return a.id < b.id; });

    SyntheticWorld world;
    for (auto& d : drafts) {
        world.corpus.add_passage(std::move(d.id), std::move(d.title), std::move(d.text));
    }
    for (std::size_t qi = 0; qi < questions.size(); ++qi) {
        auto& q = questions[qi];
        const auto& added = world.corpus.add_question(q.id, q.text, QuestionType::bridge, q.hop1, q.hop2);
        (qi < options.train_questions ? world.train : world.test).push_back(added);
    }
    return world;
}

void write_world(const SyntheticWorld& world, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + (dir / name).string());
        return out;
    };
    auto corpus = open("corpus.jsonl");
    world.corpus.write_passages(corpus);
    auto train = open("train_questions.jsonl");
    write_questions(train, world.train);
    auto test = open("test_questions.jsonl");
    write_questions(test, world.test);
}

} // namespace hopsearch
