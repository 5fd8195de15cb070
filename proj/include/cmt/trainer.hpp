#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cmt/autograd.hpp"
#include "cmt/data.hpp"
#include "cmt/loss.hpp"
#include "cmt/metrics.hpp"
#include "cmt/model.hpp"
#include "cmt/params.hpp"

namespace cmt {

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t t = 0;
    std::map<std::string, Tensor> m, v;

    /// Zero moments shaped like params.
    static AdamState for_params(const ParamSet& params, double lr);
};

/// Bias-corrected Adam update of every parameter. All gradients are checked
/// before anything is modified; a non-finite one throws TrainingError naming
/// the parameter.
void adam_step(ParamSet& params, const GradientMap& grads, AdamState& state);

struct TrainConfig {
    double lr = 1e-3;
    std::size_t epochs = 50;
    std::size_t batch_size = 4;
    std::size_t lr_period = 100;  // halve the learning rate every lr_period epochs
    std::uint64_t seed = 0;
    LossWeights loss;
    std::size_t checkpoint_interval = 0;  // 0: final checkpoint only

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// initial * 0.5^floor(epoch / period).
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

struct EpochRecord {
    std::size_t epoch = 0;
    LossBreakdown loss;  // mean over the epoch's steps
    double lr = 0.0;
};

struct TrainResult {
    ParamSet params;
    std::vector<EpochRecord> history;
    std::vector<double> step_losses;  // batch total before each update
    std::string shuffle_digest;       // FNV-1a over every epoch permutation
    std::size_t steps = 0;
};

/// Deterministic in (dataset, configs). Writes <out>/checkpoint at the end and
/// <out>/checkpoint_epoch_NNNN every checkpoint_interval epochs when out is set.
/// A sample without GT throws ProtocolError.
TrainResult train(const Dataset& dataset, const ModelConfig& model, const TrainConfig& cfg,
                  const std::optional<std::filesystem::path>& out = std::nullopt);

/// Batch loss of the given parameters over the whole dataset.
LossBreakdown dataset_loss(const ParamSet& params, const ModelConfig& model, const Dataset& dataset,
                           const LossWeights& weights);

/// epoch,spa,fourier,wavelet,total,lr
std::string loss_history_csv(const std::vector<EpochRecord>& history);

struct GradCheckEntry {
    std::string name;
    std::size_t size = 0;
    double max_abs_error = 0.0;
    double max_rel_error = 0.0;  // max |a - n| / max(|a|_inf, |n|_inf); 0 if both vanish
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;  // sorted by name
    double step = 1e-5;

    const GradCheckEntry& worst() const;
    bool passed(double tolerance) const;
};

/// Central differences of `loss` with respect to every scalar of every
/// parameter, compared with one reverse-mode sweep.
GradCheckReport grad_check(const ParamSet& params, const std::function<Var(const ParamBindings&)>& loss,
                           double step = 1e-5);

/// Model-level check of L_total on one synthetic sample of extent x extent.
/// Every parameter (the zero-initialized ones included) is perturbed away
/// from its initial value so no gradient is trivially zero.
GradCheckReport grad_check(const ModelConfig& model, std::uint64_t seed, std::size_t extent = 8, double step = 1e-5);

/// Fused outputs for every sample.
std::vector<Tensor> predict_all(const ParamSet& params, const ModelConfig& model, const Dataset& dataset);
/// Bilinear upsampling of every LRMS, the reference baseline.
std::vector<Tensor> bilinear_baseline(const Dataset& dataset);

/// Reduced: SAM/ERGAS/Q2n against GT. Full: D_lambda/D_s/HQNR. Throws
/// ProtocolError when the protocol disagrees with the dataset.
MetricsReport evaluate_outputs(const std::vector<Tensor>& fused, const Dataset& dataset, Protocol protocol);
MetricsReport evaluate(const ParamSet& params, const ModelConfig& model, const Dataset& dataset, Protocol protocol);

}  // namespace cmt
