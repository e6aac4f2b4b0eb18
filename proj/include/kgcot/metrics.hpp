#pragma once

#include <string>
#include <vector>

namespace kgcot {

// ROUGE-L F1: LCS-based precision/recall over lowercased whitespace tokens.
// Zero when either side has no tokens.
double rouge_l(const std::string& candidate, const std::string& reference);

// Fraction of exact index matches; lengths must agree.
double accuracy(const std::vector<int>& predictions, const std::vector<int>& references);

std::vector<std::string> whitespace_tokens(const std::string& text);

}  // namespace kgcot
