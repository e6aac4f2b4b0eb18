#include "kgcot/text.hpp"

#include <cctype>

#include "kgcot/error.hpp"

namespace kgcot {

namespace {

bool word_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string current;
    for (char raw : text) {
        char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (word_char(c)) {
            current += c;
            continue;
        }
        if (!current.empty()) {
            out.push_back(current);
            current.clear();
        }
        if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(std::string(1, c));
    }
    if (!current.empty()) out.push_back(current);
    return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

Vocabulary::Vocabulary() {
    for (const char* reserved : {"<pad>", "<unk>", "<begin>", "<end>"}) add(reserved);
}

void Vocabulary::add(const std::string& token) {
    if (ids_.count(token)) return;
    ids_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(token);
}

void Vocabulary::add_all(const std::vector<std::string>& tokens) {
    for (const auto& t : tokens) add(t);
}

int Vocabulary::id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const { return ids_.count(token) > 0; }

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw ShapeError("vocabulary: id " + std::to_string(id) + " out of range");
    return tokens_[id];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id <= kEnd) continue;
        if (!out.empty()) out += ' ';
        out += token(id);
    }
    return out;
}

}  // namespace kgcot
