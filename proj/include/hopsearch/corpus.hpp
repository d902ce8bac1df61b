#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hopsearch {

/// Canonical tokenizer shared by every index and encoder.
///
/// Input is UTF-8. Tokens are the maximal runs of Unicode alphanumeric code
/// points, lowercased with the simple (1:1) case mapping. Everything else,
/// including malformed UTF-8 bytes, separates tokens. No stemming, no
/// stopwords.
std::vector<std::string> tokenize(std::string_view text);

struct Passage {
    std::string id;
    std::string title;
    std::string text;
    /// tokenize(title + " " + text)
    std::vector<std::string> tokens;
};

enum class QuestionType { bridge, comparison };

std::string_view to_string(QuestionType type);
/// Throws Error("invalid question type ...") for anything but "bridge" / "comparison".
QuestionType parse_question_type(std::string_view name);

struct Question {
    std::string id;
    std::string text;
    QuestionType type = QuestionType::bridge;
    std::string gold_hop1;
    std::string gold_hop2;
    /// tokenize(text)
    std::vector<std::string> tokens;
};

struct CorpusStats {
    std::size_t passage_count = 0;
    double avg_doc_len = 0.0;
    std::size_t vocab_size = 0;
};

/// Passage collection plus the questions asked against it. Immutable once
/// loading is done; all const members are safe to call concurrently.
class Corpus {
public:
    /// Loads passage JSONL ({"id","title","text"} per line). Blank lines are
    /// skipped. Errors name the line number, or the id for duplicates.
    CorpusStats ingest_passages(const std::filesystem::path& path);
    CorpusStats ingest_passages(std::istream& in);

    /// Loads question JSONL. Gold ids must resolve against the passages
    /// already loaded. Returns the number of questions read from this input.
    std::size_t ingest_questions(const std::filesystem::path& path);
    std::size_t ingest_questions(std::istream& in);

    const Passage& add_passage(std::string id, std::string title, std::string text);
    const Question& add_question(std::string id, std::string text, QuestionType type,
                                 std::string gold_hop1, std::string gold_hop2);

    [[nodiscard]] const std::vector<Passage>& passages() const { return passages_; }
    [[nodiscard]] const std::vector<Question>& questions() const { return questions_; }
    [[nodiscard]] std::size_t size() const { return passages_.size(); }
    [[nodiscard]] bool empty() const { return passages_.empty(); }

    /// Throws Error("unknown passage id ...") when absent.
    [[nodiscard]] const Passage& passage(std::string_view id) const;
    [[nodiscard]] const Passage* find_passage(std::string_view id) const;
    [[nodiscard]] const Question* find_question(std::string_view id) const;

    [[nodiscard]] CorpusStats stats() const;

    void write_passages(std::ostream& out) const;
    void write_questions(std::ostream& out) const;

private:
    std::vector<Passage> passages_;
    std::map<std::string, std::size_t, std::less<>> passage_by_id_;
    std::vector<Question> questions_;
    std::map<std::string, std::size_t, std::less<>> question_by_id_;
};

/// Question JSONL, one object per question.
void write_questions(std::ostream& out, std::span<const Question> questions);

/// Loads a passage file and, when `questions` is non-empty, a question file.
Corpus load_corpus(const std::filesystem::path& passages,
                   const std::filesystem::path& questions = {});

} // namespace hopsearch
