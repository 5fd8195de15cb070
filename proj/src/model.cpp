#include "cmt/model.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "cmt/errors.hpp"
#include "cmt/ops.hpp"

namespace cmt {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::V1: return "v1";
        case Variant::V2: return "v2";
        case Variant::V3: return "v3";
    }
    return "full";
}

Variant parse_variant(std::string_view text) {
    std::string s(text);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "full" || s == "cmt") return Variant::Full;
    if (s == "v1") return Variant::V1;
    if (s == "v2") return Variant::V2;
    if (s == "v3") return Variant::V3;
    throw ConfigError(fmt::format("unknown variant '{}' (expected full, v1, v2 or v3)", text));
}

void ModelConfig::validate() const {
    if (bands == 0) throw ConfigError("model: bands must be positive");
    attention().validate();
    if (ratio < 2) throw ConfigError(fmt::format("model: ratio must be at least 2, got {}", ratio));
    if (cmab_blocks < 1) throw ConfigError("model: at least one CMAB block per stream is required");
}

ModelConfig ModelConfig::toy() {
    ModelConfig c;
    c.bands = 4;
    c.channels = 8;
    c.heads = 2;
    c.cmab_blocks = 1;
    c.resnet_extract = 1;
    c.resnet_aggregate = 1;
    c.ratio = 4;
    return c;
}

ModulatorOverride variant_overrides(Variant variant, Extent extent, std::size_t channels) {
    const Tensor ones = Tensor::ones({extent.tokens(), channels});
    ModulatorOverride o;
    switch (variant) {
        case Variant::Full: break;
        case Variant::V1:
            o.pan_stream = ones;
            o.ms_stream = ones;
            break;
        case Variant::V2: o.pan_stream = ones; break;
        case Variant::V3: o.ms_stream = ones; break;
    }
    return o;
}

namespace {

void init_conv(ParamSet& params, const std::string& prefix, std::size_t cin, std::size_t cout, Rng& rng) {
    params.add(prefix + ".kernel", fan_in_uniform(rng, {3, 3, cin, cout}, 9 * cin));
    params.add(prefix + ".bias", Tensor::zeros({cout}));
}

void init_resnet(ParamSet& params, const std::string& prefix, std::size_t channels, Rng& rng) {
    init_conv(params, prefix + ".conv1", channels, channels, rng);
    init_conv(params, prefix + ".conv2", channels, channels, rng);
}

Var conv_layer(const Var& x, const ParamBindings& p, const std::string& prefix) {
    return add_bias(conv2d(x, param(p, prefix + ".kernel"), Padding::Same), param(p, prefix + ".bias"));
}

Var extractor(const Var& x, const ParamBindings& p, const std::string& prefix, std::size_t blocks) {
    Var h = conv_layer(x, p, prefix + ".conv0");
    for (std::size_t i = 0; i < blocks; ++i) h = resnet_block(h, p, fmt::format("{}.res{}", prefix, i));
    return h;
}

void check_image(const Tensor& t, const char* what) {
    if (t.rank() != 3) throw DimensionError(fmt::format("{}: expected H x W x bands, got {}", what, shape_str(t.shape())));
}

}  // namespace

ParamSet init_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t c = cfg.channels;
    ParamSet params;

    init_conv(params, "extract.pan.conv0", 1, c, rng);
    for (std::size_t i = 0; i < cfg.resnet_extract; ++i) init_resnet(params, fmt::format("extract.pan.res{}", i), c, rng);
    init_conv(params, "extract.ms.conv0", cfg.bands, c, rng);
    for (std::size_t i = 0; i < cfg.resnet_extract; ++i) init_resnet(params, fmt::format("extract.ms.res{}", i), c, rng);

    const AttentionConfig acfg = cfg.attention();
    for (std::size_t b = 0; b < cfg.cmab_blocks; ++b) {
        init_cmab_params(params, fmt::format("modulate.ms.block{}", b), acfg, rng);
        init_cmab_params(params, fmt::format("modulate.pan.block{}", b), acfg, rng);
    }

    init_conv(params, "aggregate.conv0", 2 * c, c, rng);
    for (std::size_t i = 0; i < cfg.resnet_aggregate; ++i) init_resnet(params, fmt::format("aggregate.res{}", i), c, rng);
    params.add("aggregate.out.kernel", Tensor::zeros({3, 3, c, cfg.bands}));
    params.add("aggregate.out.bias", Tensor::zeros({cfg.bands}));
    return params;
}

std::size_t parameter_count(const ModelConfig& cfg) {
    Rng rng(0);
    return init_params(cfg, rng).scalar_count();
}

Var resnet_block(const Var& x, const ParamBindings& p, const std::string& prefix) {
    const Var h = gelu(conv_layer(x, p, prefix + ".conv1"));
    return add(x, conv_layer(h, p, prefix + ".conv2"));
}

FeaturePair extract_features(const Var& pan, const Var& lrms_up, const ParamBindings& p, const ModelConfig& cfg) {
    check_image(pan.value(), "extract_features pan");
    check_image(lrms_up.value(), "extract_features lrms");
    if (pan.value().dim(2) != 1)
        throw ConfigError(fmt::format("extract_features: PAN must have 1 band, got {}", shape_str(pan.shape())));
    if (lrms_up.value().dim(2) != cfg.bands)
        throw ConfigError(fmt::format("extract_features: LRMS has {} bands, model expects {}", lrms_up.value().dim(2),
                                      cfg.bands));
    if (pan.value().dim(0) != lrms_up.value().dim(0) || pan.value().dim(1) != lrms_up.value().dim(1))
        throw DimensionError(fmt::format("extract_features: PAN {} and upsampled LRMS {} differ spatially",
                                         shape_str(pan.shape()), shape_str(lrms_up.shape())));
    return {extractor(pan, p, "extract.pan", cfg.resnet_extract), extractor(lrms_up, p, "extract.ms", cfg.resnet_extract)};
}

FeaturePair cross_modulate(const FeaturePair& features, const ParamBindings& p, const ModelConfig& cfg,
                           const ModulatorOverride& forced) {
    require_same_shape(features.pan.value(), features.ms.value(), "cross_modulate");
    check_image(features.pan.value(), "cross_modulate");
    const Shape map_shape = features.pan.shape();
    const Extent extent{map_shape[0], map_shape[1]};
    const Shape token_shape{extent.tokens(), map_shape[2]};
    const AttentionConfig acfg = cfg.attention();

    Var pan = reshape(features.pan, token_shape);
    Var ms = reshape(features.ms, token_shape);
    for (std::size_t b = 0; b < cfg.cmab_blocks; ++b) {
        const auto ms_w = CmabWeights::bind(p, fmt::format("modulate.ms.block{}", b), acfg);
        const auto pan_w = CmabWeights::bind(p, fmt::format("modulate.pan.block{}", b), acfg);
        // Both streams update from the previous block's states.
        Var next_ms = cmab_forward(ms, pan, ms_w, extent, forced.ms_stream);
        Var next_pan = cmab_forward(pan, ms, pan_w, extent, forced.pan_stream);
        ms = std::move(next_ms);
        pan = std::move(next_pan);
    }
    return {reshape(pan, map_shape), reshape(ms, map_shape)};
}

FeaturePair cross_modulate(const FeaturePair& features, const ParamBindings& p, const ModelConfig& cfg) {
    const Shape& s = features.pan.shape();
    if (s.size() != 3) throw DimensionError(fmt::format("cross_modulate: expected H x W x C, got {}", shape_str(s)));
    return cross_modulate(features, p, cfg, variant_overrides(cfg.variant, {s[0], s[1]}, s[2]));
}

Var aggregate(const FeaturePair& modulated, const ParamBindings& p, const ModelConfig& cfg) {
    require_same_shape(modulated.pan.value(), modulated.ms.value(), "aggregate");
    const Var parts[] = {modulated.pan, modulated.ms};
    Var h = conv_layer(concat_last(parts), p, "aggregate.conv0");
    for (std::size_t i = 0; i < cfg.resnet_aggregate; ++i) h = resnet_block(h, p, fmt::format("aggregate.res{}", i));
    return conv_layer(h, p, "aggregate.out");
}

Var upsample_lrms(const Var& lrms, std::size_t ratio) {
    return resample(lrms, Ratio{ratio, 1}, ResampleMode::Bilinear);
}

namespace {

void check_forward_inputs(const Tensor& pan, const Tensor& lrms, const ModelConfig& cfg) {
    check_image(pan, "forward pan");
    check_image(lrms, "forward lrms");
    if (pan.dim(0) % cfg.ratio != 0 || pan.dim(1) % cfg.ratio != 0)
        throw ArgumentError(fmt::format("forward: PAN extents {} not divisible by ratio {}", shape_str(pan.shape()), cfg.ratio));
    if (lrms.dim(0) * cfg.ratio != pan.dim(0) || lrms.dim(1) * cfg.ratio != pan.dim(1))
        throw ArgumentError(fmt::format("forward: LRMS {} times ratio {} does not match PAN {}", shape_str(lrms.shape()),
                                        cfg.ratio, shape_str(pan.shape())));
}

}  // namespace

Var forward(const Var& pan, const Var& lrms, const ParamBindings& p, const ModelConfig& cfg,
            const ModulatorOverride& forced) {
    check_forward_inputs(pan.value(), lrms.value(), cfg);
    const Var up = upsample_lrms(lrms, cfg.ratio);
    const FeaturePair features = extract_features(pan, up, p, cfg);
    const FeaturePair modulated = cross_modulate(features, p, cfg, forced);
    return add(aggregate(modulated, p, cfg), up);
}

Var forward(const Var& pan, const Var& lrms, const ParamBindings& p, const ModelConfig& cfg) {
    check_forward_inputs(pan.value(), lrms.value(), cfg);
    return forward(pan, lrms, p, cfg,
                   variant_overrides(cfg.variant, {pan.value().dim(0), pan.value().dim(1)}, cfg.channels));
}

Tensor predict(const ParamSet& params, const Tensor& pan, const Tensor& lrms, const ModelConfig& cfg) {
    return forward(Var(pan), Var(lrms), params.bind(false), cfg).value();
}

}  // namespace cmt
