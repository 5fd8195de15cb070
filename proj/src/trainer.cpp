#include "cmt/trainer.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "cmt/checkpoint.hpp"
#include "cmt/errors.hpp"
#include "cmt/ops.hpp"

namespace cmt {

AdamState AdamState::for_params(const ParamSet& params, double lr) {
    AdamState s;
    s.lr = lr;
    for (const auto& [name, value] : params) {
        s.m.emplace(name, Tensor::zeros(value.shape()));
        s.v.emplace(name, Tensor::zeros(value.shape()));
    }
    return s;
}

void adam_step(ParamSet& params, const GradientMap& grads, AdamState& state) {
    for (const auto& [name, value] : params) {
        const auto it = grads.find(name);
        if (it == grads.end()) throw ContractError(fmt::format("adam_step: no gradient for parameter '{}'", name));
        require_same_shape(value, it->second, "adam_step");
        if (!all_finite(it->second)) throw TrainingError(fmt::format("non-finite gradient for parameter '{}'", name));
        if (!state.m.count(name)) {
            state.m.emplace(name, Tensor::zeros(value.shape()));
            state.v.emplace(name, Tensor::zeros(value.shape()));
        }
    }
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (auto& [name, value] : params) {
        const Tensor& g = grads.at(name);
        Tensor& m = state.m.at(name);
        Tensor& v = state.v.at(name);
        for (std::size_t i = 0; i < value.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1, vhat = v[i] / c2;
            value[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError(fmt::format("train: learning rate must be positive, got {}", lr));
    if (epochs == 0) throw ConfigError("train: epochs must be positive");
    if (batch_size == 0) throw ConfigError("train: batch size must be positive");
    if (lr_period == 0) throw ConfigError("train: learning-rate period must be positive");
    loss.validate();
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
    return std::ldexp(cfg.lr, -static_cast<int>(epoch / cfg.lr_period));
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_mix(std::uint64_t& h, std::uint64_t value) {
    for (int k = 0; k < 8; ++k) {
        h ^= (value >> (8 * k)) & 0xFFu;
        h *= kFnvPrime;
    }
}

void require_gt(const Dataset& dataset) {
    for (std::size_t i = 0; i < dataset.samples.size(); ++i)
        if (!dataset.samples[i].gt)
            throw ProtocolError(fmt::format("sample {} has no ground truth; training needs a reduced-resolution dataset", i));
}

Var sample_prediction(const SamplePair& s, const ParamBindings& b, const ModelConfig& model) {
    return forward(Var(s.pan), Var(s.lrms), b, model);
}

std::string checkpoint_dir_name(std::size_t epoch) { return fmt::format("checkpoint_epoch_{:04d}", epoch); }

}  // namespace

TrainResult train(const Dataset& dataset, const ModelConfig& model, const TrainConfig& cfg,
                  const std::optional<std::filesystem::path>& out) {
    cfg.validate();
    model.validate();
    require_gt(dataset);
    if (dataset.samples.empty()) throw ArgumentError("train: the dataset has no samples");

    Rng root(cfg.seed);
    Rng init_rng = root.split();
    Rng shuffle_rng = root.split();

    TrainResult result;
    result.params = init_params(model, init_rng);
    AdamState state = AdamState::for_params(result.params, cfg.lr);
    std::uint64_t digest = kFnvOffset;
    const std::size_t n = dataset.samples.size();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        state.lr = lr_schedule(epoch, cfg);
        const auto order = shuffle_rng.permutation(n);
        for (std::size_t idx : order) fnv_mix(digest, idx);

        double spa = 0.0, fourier = 0.0, wavelet = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const double m = static_cast<double>(stop - start);
            const ParamBindings bindings = result.params.bind(true);
            Var batch_total;
            double bs = 0.0, bf = 0.0, bw = 0.0;
            for (std::size_t k = start; k < stop; ++k) {
                const SamplePair& s = dataset.samples[order[k]];
                const LossTerms terms = total_loss(sample_prediction(s, bindings, model), *s.gt, cfg.loss);
                const LossBreakdown v = terms.values();
                bs += v.spa;
                bf += v.fourier;
                bw += v.wavelet;
                batch_total = batch_total.defined() ? add(batch_total, terms.total) : terms.total;
            }
            batch_total = scale(batch_total, 1.0 / m);
            const GradientMap grads = backward(batch_total, bindings);
            result.step_losses.push_back(batch_total.value().item());
            adam_step(result.params, grads, state);
            spa += bs / m;
            fourier += bf / m;
            wavelet += bw / m;
            ++steps;
        }
        const double s = static_cast<double>(steps);
        result.history.push_back({epoch, combine(spa / s, fourier / s, wavelet / s, cfg.loss), state.lr});
        result.steps += steps;

        if (out && cfg.checkpoint_interval > 0 && (epoch + 1) % cfg.checkpoint_interval == 0 && epoch + 1 < cfg.epochs)
            save_checkpoint({model, result.params, cfg.seed, epoch + 1}, *out / checkpoint_dir_name(epoch + 1));
    }
    result.shuffle_digest = fmt::format("{:016x}", digest);
    if (out) save_checkpoint({model, result.params, cfg.seed, cfg.epochs}, *out / "checkpoint");
    return result;
}

LossBreakdown dataset_loss(const ParamSet& params, const ModelConfig& model, const Dataset& dataset,
                           const LossWeights& weights) {
    require_gt(dataset);
    const auto fused = predict_all(params, model, dataset);
    std::vector<Tensor> gts;
    for (const auto& s : dataset.samples) gts.push_back(*s.gt);
    return total_loss(fused, gts, weights);
}

std::string loss_history_csv(const std::vector<EpochRecord>& history) {
    std::string out = "epoch,spa,fourier,wavelet,total,lr\n";
    for (const auto& r : history)
        out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.epoch, r.loss.spa, r.loss.fourier,
                           r.loss.wavelet, r.loss.total, r.lr);
    return out;
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

const GradCheckEntry& GradCheckReport::worst() const {
    if (entries.empty()) throw ContractError("gradient check report is empty");
    return *std::max_element(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        return a.max_rel_error < b.max_rel_error;
    });
}

bool GradCheckReport::passed(double tolerance) const {
    return std::all_of(entries.begin(), entries.end(), [tolerance](const auto& e) { return e.max_rel_error < tolerance; });
}

GradCheckReport grad_check(const ParamSet& params, const std::function<Var(const ParamBindings&)>& loss, double step) {
    if (!(step > 0.0)) throw ArgumentError("grad_check: step must be positive");
    ParamSet work = params;
    const ParamBindings bindings = work.bind(true);
    const GradientMap analytic = backward(loss(bindings), bindings);

    GradCheckReport report;
    report.step = step;
    auto eval = [&] { return loss(work.bind(false)).value().item(); };
    for (const auto& name : work.names()) {
        Tensor& t = work.at(name);
        const Tensor& a = analytic.at(name);
        std::vector<double> numeric(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double orig = t[i];
            t[i] = orig + step;
            const double up = eval();
            t[i] = orig - step;
            const double down = eval();
            t[i] = orig;
            numeric[i] = (up - down) / (2.0 * step);
        }
        GradCheckEntry e{name, t.size(), 0.0, 0.0};
        double scale_a = 0.0, scale_n = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            e.max_abs_error = std::max(e.max_abs_error, std::abs(a[i] - numeric[i]));
            scale_a = std::max(scale_a, std::abs(a[i]));
            scale_n = std::max(scale_n, std::abs(numeric[i]));
        }
        const double denom = std::max(scale_a, scale_n);
        e.max_rel_error = denom > 0.0 ? e.max_abs_error / denom : 0.0;
        report.entries.push_back(std::move(e));
    }
    return report;
}

GradCheckReport grad_check(const ModelConfig& model, std::uint64_t seed, std::size_t extent, double step) {
    model.validate();
    Rng rng(seed);
    ParamSet params = init_params(model, rng);
    for (auto& [name, value] : params)
        for (auto& v : value.data()) v += 0.05 * rng.normal();
    const Scene scene = synth_scene(rng, extent, extent, model.bands);
    const SamplePair s = make_reduced_pair(scene, {model.ratio, default_blur_sigma(model.ratio), {}});
    const LossWeights weights;
    return grad_check(
        params,
        [&](const ParamBindings& b) { return total_loss(sample_prediction(s, b, model), *s.gt, weights).total; }, step);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

std::vector<Tensor> predict_all(const ParamSet& params, const ModelConfig& model, const Dataset& dataset) {
    std::vector<Tensor> out;
    out.reserve(dataset.samples.size());
    for (const auto& s : dataset.samples) out.push_back(predict(params, s.pan, s.lrms, model));
    return out;
}

std::vector<Tensor> bilinear_baseline(const Dataset& dataset) {
    std::vector<Tensor> out;
    for (const auto& s : dataset.samples) {
        if (s.lrms.rank() != 3 || s.pan.rank() != 3 || s.lrms.dim(0) == 0 || s.pan.dim(0) % s.lrms.dim(0) != 0)
            throw DimensionError("bilinear_baseline: PAN and LRMS extents are not related by an integer ratio");
        out.push_back(resample(s.lrms, Ratio{s.pan.dim(0) / s.lrms.dim(0), 1}, ResampleMode::Bilinear));
    }
    return out;
}

MetricsReport evaluate_outputs(const std::vector<Tensor>& fused, const Dataset& dataset, Protocol protocol) {
    if (dataset.manifest.protocol != protocol)
        throw ProtocolError(fmt::format("cannot evaluate a {} dataset under the {} protocol",
                                        to_string(dataset.manifest.protocol), to_string(protocol)));
    if (fused.size() != dataset.samples.size())
        throw DimensionError(fmt::format("evaluate: {} outputs for {} samples", fused.size(), dataset.samples.size()));
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < fused.size(); ++i) {
        const SamplePair& s = dataset.samples[i];
        if (protocol == Protocol::Reduced) {
            if (!s.gt) throw ProtocolError(fmt::format("sample {} has no ground truth", i));
            rows.push_back(reduced_metrics(fused[i], *s.gt, dataset.manifest.ratio));
        } else {
            if (s.gt) throw ProtocolError(fmt::format("sample {} carries ground truth in a full-resolution dataset", i));
            rows.push_back(full_metrics(fused[i], s.lrms, s.pan));
        }
    }
    return MetricsReport::make(protocol, std::move(rows));
}

MetricsReport evaluate(const ParamSet& params, const ModelConfig& model, const Dataset& dataset, Protocol protocol) {
    if (dataset.manifest.protocol != protocol)
        throw ProtocolError(fmt::format("cannot evaluate a {} dataset under the {} protocol",
                                        to_string(dataset.manifest.protocol), to_string(protocol)));
    return evaluate_outputs(predict_all(params, model, dataset), dataset, protocol);
}

}  // namespace cmt
