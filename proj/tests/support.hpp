#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <random>
#include <sstream>
#include <string>
#include <utility>

#include "hopsearch/corpus.hpp"

namespace testing_support {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("hopsearch_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    [[nodiscard]] const fs::path& path() const { return path_; }
    [[nodiscard]] fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Passages with empty titles, so tokens come from the text alone.
inline hopsearch::Corpus make_corpus(std::initializer_list<std::pair<const char*, const char*>> passages) {
    hopsearch::Corpus c;
    for (const auto& [id, text] : passages) c.add_passage(id, "", text);
    return c;
}

inline hopsearch::Question make_question(const std::string& id, const std::string& text,
                                         const std::string& hop1 = "", const std::string& hop2 = "") {
    hopsearch::Question q;
    q.id = id;
    q.text = text;
    q.gold_hop1 = hop1;
    q.gold_hop2 = hop2;
    q.tokens = hopsearch::tokenize(text);
    return q;
}

}  // namespace testing_support
