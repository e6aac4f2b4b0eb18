#pragma once

// Test-side oracles. Everything here is written against the raw definitions
// (nested loops, full DP tables, explicit set algebra) and stays independent
// of the library code paths it checks.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

// Entry-wise triple loop matrix product.
inline std::vector<double> matmul(const std::vector<double>& a, int r, int k,
                                  const std::vector<double>& b, int c) {
    std::vector<double> out(static_cast<size_t>(r) * c, 0.0);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
            double s = 0.0;
            for (int p = 0; p < k; ++p)
                s += a[static_cast<size_t>(i) * k + p] * b[static_cast<size_t>(p) * c + j];
            out[static_cast<size_t>(i) * c + j] = s;
        }
    return out;
}

// Direct exp/sum softmax for one row, no stabilization.
inline std::vector<double> softmax_row(const std::vector<double>& row) {
    double z = 0.0;
    std::vector<double> out(row.size());
    for (size_t i = 0; i < row.size(); ++i) {
        out[i] = std::exp(row[i]);
        z += out[i];
    }
    for (auto& v : out) v /= z;
    return out;
}

// Dense cross-attention: softmax(Q K^T / sqrt(d)) K, scalar loops throughout.
// Invalid key positions (mask false) are excluded from the softmax.
inline std::vector<double> cross_attention(const std::vector<double>& q, int n,
                                           const std::vector<double>& k, int m, int d,
                                           const std::vector<bool>* valid = nullptr) {
    std::vector<double> out(static_cast<size_t>(n) * d, 0.0);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    for (int i = 0; i < n; ++i) {
        std::vector<double> logits(m, 0.0);
        double mx = -1e300;
        for (int j = 0; j < m; ++j) {
            if (valid && !(*valid)[j]) continue;
            double s = 0.0;
            for (int t = 0; t < d; ++t)
                s += q[static_cast<size_t>(i) * d + t] * k[static_cast<size_t>(j) * d + t];
            logits[j] = s * inv_sqrt_d;
            mx = std::max(mx, logits[j]);
        }
        double z = 0.0;
        std::vector<double> w(m, 0.0);
        for (int j = 0; j < m; ++j) {
            if (valid && !(*valid)[j]) continue;
            w[j] = std::exp(logits[j] - mx);
            z += w[j];
        }
        for (int j = 0; j < m; ++j) {
            if (z == 0.0) break;
            w[j] /= z;
            for (int t = 0; t < d; ++t)
                out[static_cast<size_t>(i) * d + t] += w[j] * k[static_cast<size_t>(j) * d + t];
        }
    }
    return out;
}

// Full-table LCS length over token sequences.
inline int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<int>> dp(a.size() + 1, std::vector<int>(b.size() + 1, 0));
    for (size_t i = 1; i <= a.size(); ++i)
        for (size_t j = 1; j <= b.size(); ++j)
            dp[i][j] = (a[i - 1] == b[j - 1]) ? dp[i - 1][j - 1] + 1
                                              : std::max(dp[i - 1][j], dp[i][j - 1]);
    return dp[a.size()][b.size()];
}

inline double rouge_l_f1(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
    if (cand.empty() || ref.empty()) return 0.0;
    const int lcs = lcs_length(cand, ref);
    const double p = static_cast<double>(lcs) / cand.size();
    const double r = static_cast<double>(lcs) / ref.size();
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

// Exhaustive n-gram scan: every start position, every n in [1,4], checked
// against the concept list. Returns concepts ordered by first occurrence,
// longest first at equal starts, no duplicates.
inline std::vector<std::string> ngram_scan(const std::vector<std::string>& tokens,
                                           const std::set<std::string>& concepts) {
    std::vector<std::string> found;
    std::set<std::string> seen;
    for (size_t i = 0; i < tokens.size(); ++i) {
        for (int n = 4; n >= 1; --n) {
            if (i + n > tokens.size()) continue;
            std::string joined;
            for (int t = 0; t < n; ++t) {
                if (t) joined += "_";
                joined += tokens[i + t];
            }
            if (concepts.count(joined) && !seen.count(joined)) {
                seen.insert(joined);
                found.push_back(joined);
            }
        }
    }
    return found;
}

// Pairwise common-neighbour expansion over an undirected neighbour map.
inline std::set<int> common_neighbor_expand(const std::set<int>& base,
                                            const std::map<int, std::set<int>>& nbr,
                                            const std::set<int>& exclude) {
    std::set<int> out;
    for (auto a = base.begin(); a != base.end(); ++a) {
        for (auto b = std::next(a); b != base.end(); ++b) {
            auto ia = nbr.find(*a);
            auto ib = nbr.find(*b);
            if (ia == nbr.end() || ib == nbr.end()) continue;
            std::vector<int> common;
            std::set_intersection(ia->second.begin(), ia->second.end(), ib->second.begin(),
                                  ib->second.end(), std::back_inserter(common));
            for (int x : common)
                if (!exclude.count(x)) out.insert(x);
        }
    }
    return out;
}

}  // namespace oracle
