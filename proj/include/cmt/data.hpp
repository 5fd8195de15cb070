#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmt/rng.hpp"
#include "cmt/tensor.hpp"

namespace cmt {

enum class Protocol { Reduced, Full };

std::string to_string(Protocol p);
Protocol parse_protocol(const std::string& text);

struct Scene {
    Tensor hrms;  // H x W x c, values in [0, 1]
};

struct SamplePair {
    Tensor pan;                 // H x W x 1
    Tensor lrms;                // H/r x W/r x c
    std::optional<Tensor> gt;  // H x W x c, reduced-resolution protocol only
};

/// Band-correlated smooth random fields plus rectangles and line features with
/// per-band albedo, clipped to [0, 1]. Deterministic in the Rng state.
Scene synth_scene(Rng& rng, std::size_t height, std::size_t width, std::size_t bands);

/// Gaussian sigma used for a given ratio: 1.7 at ratio 4, linear in the ratio.
double default_blur_sigma(std::size_t ratio);

/// Per-band Gaussian blur (unit-sum kernel truncated at 4 sigma, mirror
/// padding without edge repetition) followed by top-left-phase decimation.
Tensor wald_degrade(const Tensor& image, std::size_t ratio, double blur_sigma);

/// Weighted band average; weights must be non-negative and sum to 1 (+-1e-9).
Tensor pan_from_hrms(const Tensor& hrms, std::span<const double> band_weights);
std::vector<double> uniform_band_weights(std::size_t bands);

struct DegradationSpec {
    std::size_t ratio = 4;
    double blur_sigma = 1.7;
    std::vector<double> pan_weights;  // empty means uniform
};

/// Reduced-resolution triple: GT is the scene itself.
SamplePair make_reduced_pair(const Scene& scene, const DegradationSpec& spec);
/// Same inputs with GT withheld.
std::vector<SamplePair> make_full_resolution_pairs(std::span<const Scene> scenes, const DegradationSpec& spec);

// ---------------------------------------------------------------------------
// On-disk format: <dir>/manifest.json plus one little-endian float32 file per
// tensor (row-major, band last). Shapes live only in the manifest.
// ---------------------------------------------------------------------------

struct TensorEntry {
    std::string name;
    std::string file;
    Shape shape;
    std::uint64_t offset = 0;
    std::uint64_t bytes = 0;
    std::string encoding = "f32le";
};

struct DatasetManifest {
    int version = 1;
    Protocol protocol = Protocol::Reduced;
    std::size_t count = 0;
    std::size_t ratio = 4;
    std::size_t bands = 4;
    std::size_t height = 0;
    std::size_t width = 0;
    double blur_sigma = 1.7;
    std::uint64_t seed = 0;
    std::vector<TensorEntry> tensors;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<SamplePair> samples;
};

struct SynthSpec {
    std::size_t samples = 4;
    std::size_t size = 64;
    std::size_t bands = 4;
    std::size_t ratio = 4;
    std::uint64_t seed = 0;
    Protocol protocol = Protocol::Reduced;
    std::size_t wavelet_levels = 2;  // size must be divisible by 2^levels
};

/// Whole synthetic dataset; a pure function of its SynthSpec.
Dataset synthesize_dataset(const SynthSpec& spec);

/// Writes tensors first and the manifest last. Fills in manifest.count and
/// manifest.tensors from the samples.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
/// Throws IntegrityError (naming the file) on a missing, truncated or
/// inconsistent tensor file or manifest.
Dataset load_dataset(const std::filesystem::path& dir);

/// Stores t as float32 and returns its manifest entry.
TensorEntry write_tensor_file(const std::filesystem::path& dir, const std::string& name, const std::string& file,
                              const Tensor& t);
Tensor read_tensor_file(const std::filesystem::path& dir, const TensorEntry& entry);

/// UTF-8 JSON with sorted keys, two-space indent and a trailing newline.
void write_json_file(const std::filesystem::path& path, const std::string& json_text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace cmt
