#pragma once

#include <cstddef>
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

/// Default operating points: EM@2, EM@10, EM@20.
inline const std::vector<std::size_t> kDefaultEmCutoffs{2, 10, 20};

/// 1 iff both gold passages are among the first min(k, |retrieved|) entries.
int em_at_k(std::span<const std::string> retrieved, std::string_view gold_a,
            std::string_view gold_b, std::size_t k);

/// Passage rankings per question parsed from a run file
/// (question_id \t passage_id \t rank \t score \t run_tag).
class RunFile {
public:
    static RunFile load(const std::filesystem::path& path);
    /// Errors name the offending line number.
    static RunFile read(std::istream& in);

    void set(std::string question_id, std::vector<std::string> ranking);

    /// Ranked passage ids; nullptr when the run has no lines for the question.
    [[nodiscard]] const std::vector<std::string>* ranking(std::string_view question_id) const;
    [[nodiscard]] const std::map<std::string, std::vector<std::string>, std::less<>>& rankings() const {
        return rankings_;
    }

private:
    std::map<std::string, std::vector<std::string>, std::less<>> rankings_;
};

struct QuestionEval {
    std::map<std::size_t, int> em;              ///< k -> 0/1
    std::optional<std::size_t> gold_hop1_rank;  ///< 1-based; nullopt = not retrieved
    std::optional<std::size_t> gold_hop2_rank;
};

struct EvalReport {
    std::vector<std::size_t> ks;
    std::map<std::size_t, double> em_at;
    std::map<std::string, QuestionEval> per_question;

    /// Pretty-printed JSON (2-space indent, trailing newline).
    [[nodiscard]] std::string to_json() const;
    /// "EM@k = 0.xyz" lines.
    [[nodiscard]] std::string to_table() const;
};

/// Means over every question in `questions`; questions without run lines
/// count as EM = 0. Run lines for unknown questions are an error.
EvalReport evaluate_run(const RunFile& run, std::span<const Question> questions,
                        std::span<const std::size_t> ks = kDefaultEmCutoffs);

enum class Outcome { a_only, b_only, both, neither };
std::string_view to_string(Outcome outcome);

struct Comparison {
    std::string question_id;
    Outcome outcome = Outcome::neither;
};

/// Per-question EM@k of two runs, sorted by question id.
std::vector<Comparison> compare_runs(const RunFile& a, const RunFile& b,
                                     std::span<const Question> questions, std::size_t k);

} // namespace hopsearch
