#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace kgcot {

// Lowercases and splits into word tokens ([a-z0-9_]+ runs) and single-char
// punctuation tokens. Whitespace separates only.
std::vector<std::string> tokenize(const std::string& text);

std::string join_tokens(const std::vector<std::string>& tokens);

// Token ids dense in [0, size). Ids 0..3 are reserved.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBegin = 2;
    static constexpr int kEnd = 3;

    Vocabulary();

    // Insertion order defines ids: reserved, then first-seen corpus tokens.
    void add(const std::string& token);
    void add_all(const std::vector<std::string>& tokens);

    int id(const std::string& token) const;  // kUnk when absent
    bool contains(const std::string& token) const;
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }

    std::vector<int> encode(const std::vector<std::string>& tokens) const;
    // Drops reserved ids, joins with single spaces.
    std::string decode(const std::vector<int>& ids) const;

private:
    std::unordered_map<std::string, int> ids_;
    std::vector<std::string> tokens_;
};

}  // namespace kgcot
