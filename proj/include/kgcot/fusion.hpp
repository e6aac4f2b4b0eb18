#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgcot/tensor.hpp"

namespace kgcot {

enum class FusionVariant { Fusion1 = 1, Fusion2 = 2, Fusion3 = 3 };

FusionVariant fusion_variant_from_int(int v);
int to_int(FusionVariant v);

// Gated fusion weights. Fusion-1 owns W_1..W_9, Fusion-2 W_1..W_4,
// Fusion-3 W_1..W_3; all d x d.
struct FusionParams {
    FusionVariant variant = FusionVariant::Fusion1;
    std::vector<Tensor> w;

    static int matrix_count(FusionVariant v);
};

FusionParams init_fusion(FusionVariant variant, int d, std::uint64_t seed,
                         const std::string& prefix);

// Total scalar count of fusion-owned matrices: 9d^2 / 4d^2 / 3d^2.
std::int64_t count_params(const FusionParams& p);

// Language-queried single-head attention over another modality:
// softmax(H_lang H_other^T / sqrt(d)) H_other. Invalid key positions get
// additive -1e9 logits; with no valid keys the result is zero and `empty`
// is set (the empty-subgraph contract).
struct CrossAttention {
    Tensor output;   // n x d
    Tensor weights;  // n x k
    bool empty = false;
};
CrossAttention cross_attend(const Tensor& h_lang, const Tensor& h_other,
                            const std::vector<bool>* valid = nullptr);

struct AttendedModalities {
    Tensor img;  // n x d
    Tensor kg;   // n x d
};

// Fused stream plus the gate tensors the invariants are stated over.
struct FusionResult {
    Tensor fused;
    Tensor alpha, beta, gamma;    // fusion 1 and 3
    Tensor lambda_a, lambda_b;    // fusion 2
};

FusionResult fuse1(const Tensor& h_lang, const AttendedModalities& attended,
                   const FusionParams& p);
FusionResult fuse2(const Tensor& h_lang, const AttendedModalities& attended,
                   const FusionParams& p);
FusionResult fuse3(const Tensor& h_lang, const AttendedModalities& attended,
                   const FusionParams& p);
FusionResult fuse(const Tensor& h_lang, const AttendedModalities& attended,
                  const FusionParams& p);

}  // namespace kgcot
