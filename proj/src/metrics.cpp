#include "kgcot/metrics.hpp"

#include <algorithm>
#include <cctype>

#include "kgcot/error.hpp"

namespace kgcot {

std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string current;
    for (char raw : text) {
        if (std::isspace(static_cast<unsigned char>(raw))) {
            if (!current.empty()) out.push_back(current);
            current.clear();
        } else {
            current += static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        }
    }
    if (!current.empty()) out.push_back(current);
    return out;
}

namespace {

// Rolling two-row LCS table.
int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j) {
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
        std::fill(cur.begin(), cur.end(), 0);
    }
    return prev[b.size()];
}

}  // namespace

double rouge_l(const std::string& candidate, const std::string& reference) {
    const auto cand = whitespace_tokens(candidate);
    const auto ref = whitespace_tokens(reference);
    if (cand.empty() || ref.empty()) return 0.0;
    const int lcs = lcs_length(cand, ref);
    const double p = static_cast<double>(lcs) / cand.size();
    const double r = static_cast<double>(lcs) / ref.size();
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& references) {
    if (predictions.size() != references.size()) {
        throw ShapeError("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(references.size()) + " references");
    }
    if (predictions.empty()) return 0.0;
    int hits = 0;
    for (size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == references[i];
    return static_cast<double>(hits) / predictions.size();
}

}  // namespace kgcot
