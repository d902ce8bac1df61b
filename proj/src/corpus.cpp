#include "hopsearch/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "hopsearch/error.hpp"
#include "json.hpp"

namespace hopsearch {

namespace {

void append_utf8(std::string& out, UChar32 c) {
    char buf[U8_MAX_LENGTH];
    int32_t len = 0;
    U8_APPEND_UNSAFE(buf, len, c);
    out.append(buf, static_cast<std::size_t>(len));
}

std::string line_prefix(std::size_t line_no) {
    return "line " + std::to_string(line_no) + ": ";
}

std::string required_string(const nlohmann::json& obj, const char* field, std::size_t line_no) {
    auto it = obj.find(field);
    if (it == obj.end()) {
        throw Error(line_prefix(line_no) + "missing field '" + field + "'");
    }
    if (!it->is_string()) {
        throw Error(line_prefix(line_no) + "field '" + field + "' is not a string");
    }
    return it->get<std::string>();
}

nlohmann::json parse_line(const std::string& line, std::size_t line_no) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
        throw Error(line_prefix(line_no) + "malformed JSON");
    }
    if (!obj.is_object()) {
        throw Error(line_prefix(line_no) + "expected a JSON object");
    }
    return obj;
}

bool blank(const std::string& line) {
    return line.find_first_not_of(" \t\r") == std::string::npos;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return in;
}

} // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    const auto* s = reinterpret_cast<const uint8_t*>(text.data());
    const auto length = static_cast<int32_t>(text.size());
    int32_t i = 0;
    while (i < length) {
        UChar32 c = 0;
        U8_NEXT(s, i, length, c);
        if (c >= 0 && u_isalnum(c)) {
            append_utf8(current, u_tolower(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

std::string_view to_string(QuestionType type) {
    return type == QuestionType::bridge ? "bridge" : "comparison";
}

QuestionType parse_question_type(std::string_view name) {
    if (name == "bridge") return QuestionType::bridge;
    if (name == "comparison") return QuestionType::comparison;
    throw Error("invalid question type '" + std::string(name) + "'");
}

const Passage& Corpus::add_passage(std::string id, std::string title, std::string text) {
    if (id.empty()) {
        throw Error("empty passage id");
    }
    if (passage_by_id_.contains(id)) {
        throw Error("duplicate passage id " + id);
    }
    Passage p;
    p.tokens = tokenize(title + " " + text);
    p.id = std::move(id);
    p.title = std::move(title);
    p.text = std::move(text);
    passage_by_id_.emplace(p.id, passages_.size());
    passages_.push_back(std::move(p));
    return passages_.back();
}

const Question& Corpus::add_question(std::string id, std::string text, QuestionType type,
                                     std::string gold_hop1, std::string gold_hop2) {
    if (id.empty()) {
        throw Error("empty question id");
    }
    if (question_by_id_.contains(id)) {
        throw Error("duplicate question id " + id);
    }
    for (const auto* gold : {&gold_hop1, &gold_hop2}) {
        if (!passage_by_id_.contains(*gold)) {
            throw Error("unknown passage id '" + *gold + "' in question " + id);
        }
    }
    if (gold_hop1 == gold_hop2) {
        throw Error("question " + id + " has identical gold passages");
    }
    Question q;
    q.tokens = tokenize(text);
    q.id = std::move(id);
    q.text = std::move(text);
    q.type = type;
    q.gold_hop1 = std::move(gold_hop1);
    q.gold_hop2 = std::move(gold_hop2);
    question_by_id_.emplace(q.id, questions_.size());
    questions_.push_back(std::move(q));
    return questions_.back();
}

CorpusStats Corpus::ingest_passages(const std::filesystem::path& path) {
    auto in = open_input(path);
    return ingest_passages(in);
}

CorpusStats Corpus::ingest_passages(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        const auto obj = parse_line(line, line_no);
        auto id = required_string(obj, "id", line_no);
        auto title = required_string(obj, "title", line_no);
        auto text = required_string(obj, "text", line_no);
        if (id.empty()) {
            throw Error(line_prefix(line_no) + "empty passage id");
        }
        if (passage_by_id_.contains(id)) {
            throw Error("duplicate passage id " + id);
        }
        add_passage(std::move(id), std::move(title), std::move(text));
    }
    return stats();
}

std::size_t Corpus::ingest_questions(const std::filesystem::path& path) {
    auto in = open_input(path);
    return ingest_questions(in);
}

std::size_t Corpus::ingest_questions(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::size_t count = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        const auto obj = parse_line(line, line_no);
        auto id = required_string(obj, "id", line_no);
        auto text = required_string(obj, "text", line_no);
        const auto qtype = required_string(obj, "qtype", line_no);
        auto gold1 = required_string(obj, "gold_hop1", line_no);
        auto gold2 = required_string(obj, "gold_hop2", line_no);
        QuestionType type{};
        try {
            type = parse_question_type(qtype);
            add_question(std::move(id), std::move(text), type, std::move(gold1), std::move(gold2));
        } catch (const Error& e) {
            throw Error(line_prefix(line_no) + e.what());
        }
        ++count;
    }
    return count;
}

const Passage& Corpus::passage(std::string_view id) const {
    if (const auto* p = find_passage(id)) {
        return *p;
    }
    throw Error("unknown passage id '" + std::string(id) + "'");
}

const Passage* Corpus::find_passage(std::string_view id) const {
    auto it = passage_by_id_.find(id);
    return it == passage_by_id_.end() ? nullptr : &passages_[it->second];
}

const Question* Corpus::find_question(std::string_view id) const {
    auto it = question_by_id_.find(id);
    return it == question_by_id_.end() ? nullptr : &questions_[it->second];
}

CorpusStats Corpus::stats() const {
    CorpusStats s;
    s.passage_count = passages_.size();
    std::set<std::string_view> vocab;
    std::size_t total = 0;
    for (const auto& p : passages_) {
        total += p.tokens.size();
        vocab.insert(p.tokens.begin(), p.tokens.end());
    }
    s.vocab_size = vocab.size();
    if (s.passage_count > 0) {
        s.avg_doc_len = static_cast<double>(total) / static_cast<double>(s.passage_count);
    }
    return s;
}

void Corpus::write_passages(std::ostream& out) const {
    for (const auto& p : passages_) {
        nlohmann::ordered_json obj;
        obj["id"] = p.id;
        obj["title"] = p.title;
        obj["text"] = p.text;
        out << obj.dump() << '\n';
    }
}

void Corpus::write_questions(std::ostream& out) const {
    hopsearch::write_questions(out, questions_);
}

void write_questions(std::ostream& out, std::span<const Question> questions) {
    for (const auto& q : questions) {
        nlohmann::ordered_json obj;
        obj["id"] = q.id;
        obj["text"] = q.text;
        obj["qtype"] = std::string(to_string(q.type));
        obj["gold_hop1"] = q.gold_hop1;
        obj["gold_hop2"] = q.gold_hop2;
        out << obj.dump() << '\n';
    }
}

Corpus load_corpus(const std::filesystem::path& passages, const std::filesystem::path& questions) {
    Corpus corpus;
    corpus.ingest_passages(passages);
    if (!questions.empty()) {
        corpus.ingest_questions(questions);
    }
    return corpus;
}

} // namespace hopsearch
