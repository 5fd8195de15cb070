#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "cmt/attention.hpp"
#include "cmt/autograd.hpp"
#include "cmt/params.hpp"
#include "cmt/rng.hpp"

namespace cmt {

/// Full: each stream is modulated by the other. V1: no modulation.
/// V2: only the MS stream is modulated (by PAN). V3: only the PAN stream is
/// modulated (by MS).
enum class Variant { Full, V1, V2, V3 };

std::string to_string(Variant v);
/// Accepts "full"/"cmt", "v1", "v2", "v3" (case-insensitive).
Variant parse_variant(std::string_view text);

struct ModelConfig {
    std::size_t bands = 4;
    std::size_t channels = 32;
    std::size_t heads = 4;
    std::size_t cmab_blocks = 2;
    std::size_t resnet_extract = 4;
    std::size_t resnet_aggregate = 4;
    std::size_t ratio = 4;
    std::size_t dffn_expansion = 2;
    Variant variant = Variant::Full;

    void validate() const;
    AttentionConfig attention() const { return {channels, heads, dffn_expansion}; }

    /// c=4, C=8, k=2, one CMAB block and one ResNet block per stage.
    static ModelConfig toy();

    bool operator==(const ModelConfig&) const = default;
};

/// Modulators forced onto a stream after normalization. pan_stream applies
/// to the blocks whose carrier is PAN, ms_stream to those whose carrier is MS.
struct ModulatorOverride {
    std::optional<Tensor> pan_stream;
    std::optional<Tensor> ms_stream;
};

/// All-ones overrides implementing the ablation variants for an H x W map.
ModulatorOverride variant_overrides(Variant variant, Extent extent, std::size_t channels);

struct FeaturePair {
    Var pan;  // H x W x C
    Var ms;   // H x W x C
};

/// Fan-in uniform weights for every convolution and projection, zero biases,
/// and a zero final aggregation convolution so the network starts as
/// bilinear upsampling of the LRMS input.
ParamSet init_params(const ModelConfig& cfg, Rng& rng);
std::size_t parameter_count(const ModelConfig& cfg);

/// x + conv(gelu(conv(x))) with 3x3 same-padded convolutions.
Var resnet_block(const Var& x, const ParamBindings& p, const std::string& prefix);

FeaturePair extract_features(const Var& pan, const Var& lrms_up, const ParamBindings& p, const ModelConfig& cfg);
FeaturePair cross_modulate(const FeaturePair& features, const ParamBindings& p, const ModelConfig& cfg,
                           const ModulatorOverride& forced);
/// Uses the overrides implied by cfg.variant.
FeaturePair cross_modulate(const FeaturePair& features, const ParamBindings& p, const ModelConfig& cfg);
Var aggregate(const FeaturePair& modulated, const ParamBindings& p, const ModelConfig& cfg);

/// Bilinear upsampling by the configured ratio.
Var upsample_lrms(const Var& lrms, std::size_t ratio);

/// hrms = aggregate(cross_modulate(extract_features(pan, up(lrms)))) + up(lrms).
Var forward(const Var& pan, const Var& lrms, const ParamBindings& p, const ModelConfig& cfg);
Var forward(const Var& pan, const Var& lrms, const ParamBindings& p, const ModelConfig& cfg,
            const ModulatorOverride& forced);

/// Graph-free forward pass.
Tensor predict(const ParamSet& params, const Tensor& pan, const Tensor& lrms, const ModelConfig& cfg);

}  // namespace cmt
