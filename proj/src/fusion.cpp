#include "kgcot/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "kgcot/error.hpp"
#include "kgcot/log.hpp"

namespace kgcot {

FusionVariant fusion_variant_from_int(int v) {
    switch (v) {
        case 1: return FusionVariant::Fusion1;
        case 2: return FusionVariant::Fusion2;
        case 3: return FusionVariant::Fusion3;
    }
    throw ConfigError("fusion variant must be 1, 2 or 3, got " + std::to_string(v));
}

int to_int(FusionVariant v) { return static_cast<int>(v); }

int FusionParams::matrix_count(FusionVariant v) {
    switch (v) {
        case FusionVariant::Fusion1: return 9;
        case FusionVariant::Fusion2: return 4;
        case FusionVariant::Fusion3: return 3;
    }
    return 0;
}

FusionParams init_fusion(FusionVariant variant, int d, std::uint64_t seed,
                         const std::string& prefix) {
    FusionParams p;
    p.variant = variant;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (int i = 0; i < FusionParams::matrix_count(variant); ++i) {
        auto rng = named_rng(seed, prefix + ".w" + std::to_string(i + 1));
        p.w.push_back(Tensor::uniform({d, d}, -bound, bound, rng, true));
    }
    return p;
}

std::int64_t count_params(const FusionParams& p) {
    std::int64_t n = 0;
    for (const auto& w : p.w) n += w.size();
    return n;
}

CrossAttention cross_attend(const Tensor& h_lang, const Tensor& h_other,
                            const std::vector<bool>* valid) {
    const int n = h_lang.rows();
    const int d = h_lang.cols();
    const int k = h_other.rows();
    if (k > 0 && h_other.cols() != d) {
        throw ShapeError("cross_attend: " + shape_str(h_lang.shape()) + " vs " +
                         shape_str(h_other.shape()));
    }
    if (valid && static_cast<int>(valid->size()) != k) {
        throw ShapeError("cross_attend: mask of " + std::to_string(valid->size()) +
                         " entries for " + std::to_string(k) + " keys");
    }
    int valid_count = k;
    if (valid) valid_count = static_cast<int>(std::count(valid->begin(), valid->end(), true));
    if (valid_count == 0) {
        log::warn("cross_attend: no valid keys, returning zeros");
        return {Tensor::zeros({n, d}), Tensor::zeros({n, k}), true};
    }

    Tensor scores = scale(matmul(h_lang, transpose(h_other)), 1.0 / std::sqrt(double(d)));
    if (valid && valid_count < k) {
        std::vector<double> mask(k, 0.0);
        for (int j = 0; j < k; ++j)
            if (!(*valid)[j]) mask[j] = -1e9;
        scores = add_rowvec(scores, Tensor::from_data({1, k}, std::move(mask)));
    }
    Tensor weights = softmax_rows(scores);
    return {matmul(weights, h_other), weights, false};
}

namespace {

void require_variant(const FusionParams& p, FusionVariant v, const char* what) {
    if (p.variant != v) {
        throw ConfigError(std::string(what) + ": called with fusion variant " +
                          std::to_string(to_int(p.variant)));
    }
    if (static_cast<int>(p.w.size()) != FusionParams::matrix_count(v)) {
        throw ConfigError(std::string(what) + ": expected " +
                          std::to_string(FusionParams::matrix_count(v)) + " matrices, have " +
                          std::to_string(p.w.size()));
    }
}

// Elementwise three-way softmax over (a, b, c). The shift by the detached
// max keeps exponentials bounded and leaves both value and gradient intact.
struct Gates3 {
    Tensor alpha, beta, gamma;
};

Gates3 softmax3(const Tensor& a, const Tensor& b, const Tensor& c) {
    std::vector<double> m(a.size());
    for (std::int64_t i = 0; i < a.size(); ++i) {
        m[i] = std::max(a.data()[i], std::max(b.data()[i], c.data()[i]));
    }
    Tensor shift = Tensor::from_data(a.shape(), std::move(m));
    Tensor ea = exp(sub(a, shift));
    Tensor eb = exp(sub(b, shift));
    Tensor ec = exp(sub(c, shift));
    Tensor z = add(add(ea, eb), ec);
    return {div(ea, z), div(eb, z), div(ec, z)};
}

FusionResult convex_combine(const Gates3& g, const Tensor& h_lang,
                            const AttendedModalities& attended) {
    FusionResult r;
    r.alpha = g.alpha;
    r.beta = g.beta;
    r.gamma = g.gamma;
    r.fused = add(add(mul(g.alpha, h_lang), mul(g.beta, attended.img)),
                  mul(g.gamma, attended.kg));
    return r;
}

}  // namespace

FusionResult fuse1(const Tensor& h_lang, const AttendedModalities& attended,
                   const FusionParams& p) {
    require_variant(p, FusionVariant::Fusion1, "fuse1");
    Tensor s_alpha = add(add(matmul(h_lang, p.w[0]), matmul(attended.img, p.w[1])),
                         matmul(attended.kg, p.w[2]));
    Tensor s_beta = add(add(matmul(h_lang, p.w[3]), matmul(attended.img, p.w[4])),
                        matmul(attended.kg, p.w[5]));
    Tensor s_gamma = add(add(matmul(h_lang, p.w[6]), matmul(attended.img, p.w[7])),
                         matmul(attended.kg, p.w[8]));
    return convex_combine(softmax3(s_alpha, s_beta, s_gamma), h_lang, attended);
}

FusionResult fuse2(const Tensor& h_lang, const AttendedModalities& attended,
                   const FusionParams& p) {
    require_variant(p, FusionVariant::Fusion2, "fuse2");
    Tensor lambda_a = sigmoid(add(matmul(attended.img, p.w[0]), matmul(attended.kg, p.w[1])));
    Tensor one_minus_a = add_scalar(scale(lambda_a, -1.0), 1.0);
    Tensor h_img_kg = add(mul(one_minus_a, attended.img), mul(lambda_a, attended.kg));

    Tensor lambda_b = sigmoid(add(matmul(h_img_kg, p.w[2]), matmul(h_lang, p.w[3])));
    Tensor one_minus_b = add_scalar(scale(lambda_b, -1.0), 1.0);
    FusionResult r;
    r.lambda_a = lambda_a;
    r.lambda_b = lambda_b;
    r.fused = add(mul(one_minus_b, h_img_kg), mul(lambda_b, h_lang));
    return r;
}

FusionResult fuse3(const Tensor& h_lang, const AttendedModalities& attended,
                   const FusionParams& p) {
    require_variant(p, FusionVariant::Fusion3, "fuse3");
    Tensor s_alpha = matmul(h_lang, p.w[0]);
    Tensor s_beta = matmul(attended.img, p.w[1]);
    Tensor s_gamma = matmul(attended.kg, p.w[2]);
    return convex_combine(softmax3(s_alpha, s_beta, s_gamma), h_lang, attended);
}

FusionResult fuse(const Tensor& h_lang, const AttendedModalities& attended,
                  const FusionParams& p) {
    switch (p.variant) {
        case FusionVariant::Fusion1: return fuse1(h_lang, attended, p);
        case FusionVariant::Fusion2: return fuse2(h_lang, attended, p);
        case FusionVariant::Fusion3: return fuse3(h_lang, attended, p);
    }
    throw ConfigError("fuse: bad variant");
}

}  // namespace kgcot
