#include "hopsearch/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "hopsearch/error.hpp"
#include "json.hpp"

namespace hopsearch {

namespace {

std::optional<std::size_t> rank_of(const std::vector<std::string>& ranking, std::string_view id) {
    auto it = std::find(ranking.begin(), ranking.end(), id);
    if (it == ranking.end()) return std::nullopt;
    return static_cast<std::size_t>(it - ranking.begin()) + 1;
}

const std::vector<std::string>& ranking_or_empty(const RunFile& run, std::string_view qid) {
    static const std::vector<std::string> kEmpty;
    const auto* r = run.ranking(qid);
    return r ? *r : kEmpty;
}

void check_known_questions(const RunFile& run, std::span<const Question> questions) {
    std::set<std::string_view> known;
    for (const auto& q : questions) known.insert(q.id);
    for (const auto& [qid, ranking] : run.rankings()) {
        if (!known.contains(qid)) {
            throw Error("run references unknown question " + qid);
        }
    }
}

} // namespace

int em_at_k(std::span<const std::string> retrieved, std::string_view gold_a,
            std::string_view gold_b, std::size_t k) {
    const auto top = retrieved.first(std::min(k, retrieved.size()));
    const bool has_a = std::find(top.begin(), top.end(), gold_a) != top.end();
    const bool has_b = std::find(top.begin(), top.end(), gold_b) != top.end();
    return has_a && has_b ? 1 : 0;
}

RunFile RunFile::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return read(in);
}

RunFile RunFile::read(std::istream& in) {
    struct Entry {
        std::size_t rank;
        std::size_t line;
        std::string passage;
    };
    std::map<std::string, std::vector<Entry>, std::less<>> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        for (;;) {
            const auto tab = rest.find('\t');
            fields.push_back(rest.substr(0, tab));
            if (tab == std::string_view::npos) break;
            rest.remove_prefix(tab + 1);
        }
        const auto fail = [&](const std::string& what) {
            return Error("line " + std::to_string(line_no) + ": " + what);
        };
        if (fields.size() != 5) {
            throw fail("expected 5 tab-separated fields, got " + std::to_string(fields.size()));
        }
        if (fields[0].empty() || fields[1].empty()) {
            throw fail("empty question or passage id");
        }
        std::size_t rank = 0;
        {
            const auto* end = fields[2].data() + fields[2].size();
            const auto [ptr, ec] = std::from_chars(fields[2].data(), end, rank);
            if (ec != std::errc{} || ptr != end || rank == 0) {
                throw fail("invalid rank '" + std::string(fields[2]) + "'");
            }
        }
        {
            double score = 0.0;
            const auto* end = fields[3].data() + fields[3].size();
            const auto [ptr, ec] = std::from_chars(fields[3].data(), end, score);
            if (ec != std::errc{} || ptr != end || !std::isfinite(score)) {
                throw fail("invalid score '" + std::string(fields[3]) + "'");
            }
        }
        entries[std::string(fields[0])].push_back({rank, line_no, std::string(fields[1])});
    }

    RunFile run;
    for (auto& [qid, list] : entries) {
        std::sort(list.begin(), list.end(), [](const Entry& a, const Entry& b) {
            return a.rank != b.rank ? a.rank < b.rank : a.line < b.line;
        });
        std::vector<std::string> ranking;
        ranking.reserve(list.size());
        for (auto& e : list) ranking.push_back(std::move(e.passage));
        run.set(qid, std::move(ranking));
    }
    return run;
}

void RunFile::set(std::string question_id, std::vector<std::string> ranking) {
    rankings_[std::move(question_id)] = std::move(ranking);
}

const std::vector<std::string>* RunFile::ranking(std::string_view question_id) const {
    auto it = rankings_.find(question_id);
    return it == rankings_.end() ? nullptr : &it->second;
}

EvalReport evaluate_run(const RunFile& run, std::span<const Question> questions,
                        std::span<const std::size_t> ks) {
    if (ks.empty()) {
        throw Error("no cutoffs given");
    }
    check_known_questions(run, questions);
    EvalReport report;
    report.ks.assign(ks.begin(), ks.end());
    std::sort(report.ks.begin(), report.ks.end());
    report.ks.erase(std::unique(report.ks.begin(), report.ks.end()), report.ks.end());
    if (report.ks.front() == 0) {
        throw Error("cutoffs must be positive");
    }
    std::map<std::size_t, std::size_t> hits;
    for (const auto& q : questions) {
        const auto& ranking = ranking_or_empty(run, q.id);
        QuestionEval qe;
        for (const auto k : report.ks) {
            qe.em[k] = em_at_k(ranking, q.gold_hop1, q.gold_hop2, k);
            hits[k] += static_cast<std::size_t>(qe.em[k]);
        }
        qe.gold_hop1_rank = rank_of(ranking, q.gold_hop1);
        qe.gold_hop2_rank = rank_of(ranking, q.gold_hop2);
        report.per_question[q.id] = std::move(qe);
    }
    for (const auto k : report.ks) {
        report.em_at[k] = questions.empty()
                              ? 0.0
                              : static_cast<double>(hits[k]) / static_cast<double>(questions.size());
    }
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json doc;
    doc["num_questions"] = per_question.size();
    auto& means = doc["em_at"];
    means = nlohmann::ordered_json::object();
    for (const auto k : ks) means[std::to_string(k)] = em_at.at(k);
    auto& per = doc["per_question"];
    per = nlohmann::ordered_json::object();
    for (const auto& [qid, qe] : per_question) {
        nlohmann::ordered_json entry;
        auto& em = entry["em"];
        em = nlohmann::ordered_json::object();
        for (const auto k : ks) em[std::to_string(k)] = qe.em.at(k);
        const auto rank = [](const std::optional<std::size_t>& r) {
            return r ? nlohmann::ordered_json(*r) : nlohmann::ordered_json("not retrieved");
        };
        entry["gold_hop1_rank"] = rank(qe.gold_hop1_rank);
        entry["gold_hop2_rank"] = rank(qe.gold_hop2_rank);
        per[qid] = std::move(entry);
    }
    return doc.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
    std::ostringstream out;
    out << "questions = " << per_question.size() << '\n';
    char buf[64];
    for (const auto k : ks) {
        std::snprintf(buf, sizeof(buf), "EM@%zu = %.3f", k, em_at.at(k));
        out << buf << '\n';
    }
    return out.str();
}

std::string_view to_string(Outcome outcome) {
    switch (outcome) {
    case Outcome::a_only: return "A-only";
    case Outcome::b_only: return "B-only";
    case Outcome::both: return "both";
    case Outcome::neither: return "neither";
    }
    return "neither";
}

std::vector<Comparison> compare_runs(const RunFile& a, const RunFile& b,
                                     std::span<const Question> questions, std::size_t k) {
    if (k == 0) {
        throw Error("k must be positive");
    }
    check_known_questions(a, questions);
    check_known_questions(b, questions);
    std::vector<Comparison> out;
    out.reserve(questions.size());
    for (const auto& q : questions) {
        const bool in_a = em_at_k(ranking_or_empty(a, q.id), q.gold_hop1, q.gold_hop2, k) == 1;
        const bool in_b = em_at_k(ranking_or_empty(b, q.id), q.gold_hop1, q.gold_hop2, k) == 1;
        const Outcome o = in_a && in_b ? Outcome::both
                          : in_a       ? Outcome::a_only
                          : in_b       ? Outcome::b_only
                                       : Outcome::neither;
        out.push_back({q.id, o});
    }
    std::sort(out.begin(), out.end(),
              [](const Comparison& x, const Comparison& y) { return x.question_id < y.question_id; });
    return out;
}

} // namespace hopsearch
