#include "cmt/attention.hpp"

#include <cmath>

#include <fmt/format.h>

#include "cmt/errors.hpp"
#include "cmt/ops.hpp"

namespace cmt {

void AttentionConfig::validate() const {
    if (channels == 0 || heads == 0 || channels % heads != 0)
        throw ConfigError(fmt::format("attention: {} channels not divisible into {} heads", channels, heads));
    if (dffn_expansion == 0) throw ConfigError("attention: DFFN expansion ratio must be at least 1");
}

AttentionWeights AttentionWeights::bind(const ParamBindings& p, const std::string& prefix, const AttentionConfig& cfg) {
    AttentionWeights w;
    for (std::size_t i = 0; i < cfg.heads; ++i) {
        const std::string h = fmt::format("{}.head{}", prefix, i);
        w.heads.push_back({param(p, h + ".wq"), param(p, h + ".wk"), param(p, h + ".wv"), param(p, h + ".log_alpha")});
    }
    w.fc_weight = param(p, prefix + ".fc.weight");
    w.fc_bias = param(p, prefix + ".fc.bias");
    w.pos_kernel = param(p, prefix + ".pos.kernel");
    return w;
}

DffnWeights DffnWeights::bind(const ParamBindings& p, const std::string& prefix) {
    return {param(p, prefix + ".gate.weight"),  param(p, prefix + ".gate.bias"), param(p, prefix + ".value.weight"),
            param(p, prefix + ".value.bias"), param(p, prefix + ".out.weight"), param(p, prefix + ".out.bias")};
}

NormWeights NormWeights::bind(const ParamBindings& p, const std::string& prefix) {
    return {param(p, prefix + ".gain"), param(p, prefix + ".bias")};
}

CmabWeights CmabWeights::bind(const ParamBindings& p, const std::string& prefix, const AttentionConfig& cfg) {
    return {NormWeights::bind(p, prefix + ".norm1"), NormWeights::bind(p, prefix + ".norm1m"),
            NormWeights::bind(p, prefix + ".norm2"), AttentionWeights::bind(p, prefix + ".attn", cfg),
            DffnWeights::bind(p, prefix + ".dffn")};
}

void init_attention_params(ParamSet& params, const std::string& prefix, const AttentionConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t c = cfg.channels, dk = cfg.head_dim();
    for (std::size_t i = 0; i < cfg.heads; ++i) {
        const std::string h = fmt::format("{}.head{}", prefix, i);
        params.add(h + ".wq", fan_in_uniform(rng, {dk, dk}, dk));
        params.add(h + ".wk", fan_in_uniform(rng, {dk, dk}, dk));
        params.add(h + ".wv", fan_in_uniform(rng, {dk, dk}, dk));
        params.add(h + ".log_alpha", Tensor::scalar(std::log(std::sqrt(static_cast<double>(dk)))));
    }
    params.add(prefix + ".fc.weight", fan_in_uniform(rng, {c, c}, c));
    params.add(prefix + ".fc.bias", Tensor::zeros({c}));
    params.add(prefix + ".pos.kernel", Tensor::zeros({3, 3, c}));
}

void init_dffn_params(ParamSet& params, const std::string& prefix, const AttentionConfig& cfg, Rng& rng) {
    const std::size_t c = cfg.channels, hidden = cfg.channels * cfg.dffn_expansion;
    params.add(prefix + ".gate.weight", fan_in_uniform(rng, {c, hidden}, c));
    params.add(prefix + ".gate.bias", Tensor::zeros({hidden}));
    params.add(prefix + ".value.weight", fan_in_uniform(rng, {c, hidden}, c));
    params.add(prefix + ".value.bias", Tensor::zeros({hidden}));
    params.add(prefix + ".out.weight", fan_in_uniform(rng, {hidden, c}, hidden));
    params.add(prefix + ".out.bias", Tensor::zeros({c}));
}

void init_norm_params(ParamSet& params, const std::string& prefix, std::size_t channels) {
    params.add(prefix + ".gain", Tensor::ones({channels}));
    params.add(prefix + ".bias", Tensor::zeros({channels}));
}

void init_cmab_params(ParamSet& params, const std::string& prefix, const AttentionConfig& cfg, Rng& rng) {
    init_norm_params(params, prefix + ".norm1", cfg.channels);
    init_norm_params(params, prefix + ".norm1m", cfg.channels);
    init_norm_params(params, prefix + ".norm2", cfg.channels);
    init_attention_params(params, prefix + ".attn", cfg, rng);
    init_dffn_params(params, prefix + ".dffn", cfg, rng);
}

std::vector<Var> split_heads(const Var& x, std::size_t k) {
    if (x.value().rank() != 2)
        throw DimensionError(fmt::format("split_heads: expected tokens x channels, got {}", shape_str(x.shape())));
    const std::size_t c = x.value().dim(1);
    if (k == 0 || c % k != 0)
        throw ArgumentError(fmt::format("split_heads: {} channels not divisible into {} heads", c, k));
    if (k == 1) return {x};
    const std::size_t dk = c / k;
    std::vector<Var> parts;
    parts.reserve(k);
    for (std::size_t i = 0; i < k; ++i) parts.push_back(slice_last(x, i * dk, dk));
    return parts;
}

Var concat_heads(std::span<const Var> heads) {
    if (heads.size() == 1) return heads[0];
    return concat_last(heads);
}

Qkv project_qkv(const Var& x_head, const HeadWeights& w) {
    return {matmul(x_head, w.wq), matmul(x_head, w.wk), matmul(x_head, w.wv)};
}

Var modulate_values(const Var& modulator, const Var& values) { return mul(modulator, values); }

Var modulation_attention(const Var& q, const Var& k, const Var& v_mod, const Var& alpha) {
    require_same_shape(q.value(), k.value(), "modulation_attention (Q vs K)");
    require_same_shape(q.value(), v_mod.value(), "modulation_attention (Q vs V')");
    const Var scores = mul_scalar(matmul(transpose(k), q), reciprocal(alpha));
    return matmul(v_mod, softmax_columns(scores));
}

Var modulation_attention(const Var& q, const Var& k, const Var& v_mod, double alpha) {
    if (!(alpha > 0.0)) throw ArgumentError("modulation_attention: alpha must be positive");
    return modulation_attention(q, k, v_mod, Var(Tensor::scalar(alpha)));
}

Var cm_msa(const Var& carrier, const std::optional<Var>& modulator, const AttentionWeights& w, Extent extent) {
    const Tensor& xv = carrier.value();
    if (xv.rank() != 2 || xv.dim(0) != extent.tokens())
        throw DimensionError(fmt::format("cm_msa: carrier {} does not hold {}x{} tokens", shape_str(xv.shape()),
                                         extent.height, extent.width));
    if (modulator) require_same_shape(xv, modulator->value(), "cm_msa (carrier vs modulator)");
    const std::size_t k = w.heads.size();
    const std::size_t c = xv.dim(1);

    const auto carrier_heads = split_heads(carrier, k);
    std::vector<Var> modulator_heads;
    if (modulator) modulator_heads = split_heads(*modulator, k);

    std::vector<Var> attended, values;
    attended.reserve(k);
    values.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const Qkv qkv = project_qkv(carrier_heads[i], w.heads[i]);
        const Var v_mod = modulator ? modulate_values(modulator_heads[i], qkv.v) : qkv.v;
        attended.push_back(modulation_attention(qkv.q, qkv.k, v_mod, exp(w.heads[i].log_alpha)));
        values.push_back(qkv.v);
    }
    const Var projected = add_bias(matmul(concat_heads(attended), w.fc_weight), w.fc_bias);

    const Var value_map = reshape(concat_heads(values), {extent.height, extent.width, c});
    const Var positional = reshape(conv2d(value_map, w.pos_kernel, Padding::Same, true), {extent.tokens(), c});
    return add(projected, positional);
}

Var dffn(const Var& x, const DffnWeights& w) {
    const Var gate = silu(add_bias(matmul(x, w.gate_weight), w.gate_bias));
    const Var value = add_bias(matmul(x, w.value_weight), w.value_bias);
    return add_bias(matmul(mul(gate, value), w.out_weight), w.out_bias);
}

Var cmab_forward(const Var& x, const Var& m, const CmabWeights& w, Extent extent,
                 const std::optional<Tensor>& forced_modulator) {
    require_same_shape(x.value(), m.value(), "cmab_forward (carrier vs modulator)");
    const Var carrier = layer_norm(x, w.carrier_norm.gain, w.carrier_norm.bias, kLayerNormEps);
    const Var mod = forced_modulator ? Var(*forced_modulator)
                                     : layer_norm(m, w.modulator_norm.gain, w.modulator_norm.bias, kLayerNormEps);
    const Var y = add(x, cm_msa(carrier, mod, w.attention, extent));
    return add(y, dffn(layer_norm(y, w.ffn_norm.gain, w.ffn_norm.bias, kLayerNormEps), w.dffn));
}

}  // namespace cmt
