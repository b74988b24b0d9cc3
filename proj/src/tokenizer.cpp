#include <fstream>
#include <sstream>

#include "iqe/encoders.hpp"

namespace iqe {

const std::vector<std::string>& Tokenizer::builtin_words() {
    static const std::vector<std::string> words = {
        "a",       "photo",   "of",      "normal",  "abnormal", "object",  "texture",
        "surface", "stripes", "checker", "blobs",   "grid",     "mesh",    "fabric",
        "pattern", "material", "weave",  "plate",   "film",     "sample",
    };
    return words;
}

Tokenizer Tokenizer::from_words(std::vector<std::string> words) {
    Tokenizer t;
    t.words_ = std::move(words);
    for (size_t i = 0; i < t.words_.size(); ++i) {
        if (t.ids_.count(t.words_[i]))
            throw std::invalid_argument("duplicate vocabulary word: " + t.words_[i]);
        t.ids_[t.words_[i]] = (int)i + 3;
    }
    return t;
}

Tokenizer Tokenizer::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) words.push_back(line);
    }
    return from_words(std::move(words));
}

int Tokenizer::id_of(const std::string& w) const {
    auto it = ids_.find(w);
    return it == ids_.end() ? kUnk : it->second;
}

std::vector<int> Tokenizer::tokenize(const std::string& text, int max_len) const {
    std::vector<int> ids = {kCls};
    std::istringstream ss(text);
    std::string word;
    while (ss >> word) ids.push_back(id_of(word));
    if ((int)ids.size() > max_len)
        throw std::invalid_argument("prompt of " + std::to_string(ids.size()) +
                                    " tokens exceeds capacity " + std::to_string(max_len));
    return ids;
}

void Tokenizer::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
    for (const auto& w : words_) out << w << "\n";
}

}  // namespace iqe
