#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmt/autograd.hpp"
#include "cmt/params.hpp"
#include "cmt/rng.hpp"

namespace cmt {

inline constexpr double kLayerNormEps = 1e-6;

/// Spatial extent of a token map; tokens are the H*W pixels in row-major order.
struct Extent {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t tokens() const noexcept { return height * width; }
};

struct AttentionConfig {
    std::size_t channels = 32;
    std::size_t heads = 4;
    std::size_t dffn_expansion = 2;

    std::size_t head_dim() const noexcept { return heads ? channels / heads : 0; }
    void validate() const;
};

struct HeadWeights {
    Var wq, wk, wv;  // d_k x d_k
    Var log_alpha;   // [1]; alpha = exp(log_alpha) stays positive
};

struct AttentionWeights {
    std::vector<HeadWeights> heads;
    Var fc_weight;   // C x C
    Var fc_bias;     // C
    Var pos_kernel;  // 3 x 3 x C depthwise

    static AttentionWeights bind(const ParamBindings& p, const std::string& prefix, const AttentionConfig& cfg);
};

/// Gated feed-forward: (silu(x Wg + bg) * (x Wv + bv)) Wo + bo.
struct DffnWeights {
    Var gate_weight, gate_bias;    // C x rC, rC
    Var value_weight, value_bias;  // C x rC, rC
    Var out_weight, out_bias;      // rC x C, C

    static DffnWeights bind(const ParamBindings& p, const std::string& prefix);
};

struct NormWeights {
    Var gain, bias;

    static NormWeights bind(const ParamBindings& p, const std::string& prefix);
};

struct CmabWeights {
    NormWeights carrier_norm;    // LN1
    NormWeights modulator_norm;  // LN1 on the modulator stream
    NormWeights ffn_norm;        // LN2
    AttentionWeights attention;
    DffnWeights dffn;

    static CmabWeights bind(const ParamBindings& p, const std::string& prefix, const AttentionConfig& cfg);
};

// Parameter initialization. Projections draw fan-in uniform weights, biases
// start at zero, alpha at sqrt(d_k), and the positional kernel at zero.
void init_attention_params(ParamSet& params, const std::string& prefix, const AttentionConfig& cfg, Rng& rng);
void init_dffn_params(ParamSet& params, const std::string& prefix, const AttentionConfig& cfg, Rng& rng);
void init_norm_params(ParamSet& params, const std::string& prefix, std::size_t channels);
void init_cmab_params(ParamSet& params, const std::string& prefix, const AttentionConfig& cfg, Rng& rng);

/// Contiguous channel slices of x [T, C]; C must be divisible by k.
std::vector<Var> split_heads(const Var& x, std::size_t k);
Var concat_heads(std::span<const Var> heads);

struct Qkv {
    Var q, k, v;
};

Qkv project_qkv(const Var& x_head, const HeadWeights& w);

/// V' = M (Hadamard) V.
Var modulate_values(const Var& modulator, const Var& values);

/// V' softmax_columns(K^T Q / alpha). Returns T x d_k.
Var modulation_attention(const Var& q, const Var& k, const Var& v_mod, const Var& alpha);
Var modulation_attention(const Var& q, const Var& k, const Var& v_mod, double alpha);

/// Cross-modulated multi-head channel attention on carrier tokens [T, C].
/// Without a modulator this is the plain attention path (V' = V). The
/// positional term is a depthwise 3x3 convolution of the carrier's value
/// map (concatenated V heads) viewed as H x W x C.
Var cm_msa(const Var& carrier, const std::optional<Var>& modulator, const AttentionWeights& w, Extent extent);

Var dffn(const Var& x, const DffnWeights& w);

/// Pre-norm block:
///   y   = x + cm_msa(LN1(x), LN1m(m))
///   out = y + dffn(LN2(y))
/// A forced modulator replaces LN1m(m) verbatim (used to switch modulation off).
Var cmab_forward(const Var& x, const Var& m, const CmabWeights& w, Extent extent,
                 const std::optional<Tensor>& forced_modulator = std::nullopt);

}  // namespace cmt
