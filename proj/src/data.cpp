#include "cmt/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "cmt/errors.hpp"

namespace cmt {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(Protocol p) { return p == Protocol::Reduced ? "reduced" : "full"; }

Protocol parse_protocol(const std::string& text) {
    if (text == "reduced") return Protocol::Reduced;
    if (text == "full") return Protocol::Full;
    throw ConfigError(fmt::format("unknown protocol '{}' (expected reduced or full)", text));
}

// ---------------------------------------------------------------------------
// Scene synthesis
// ---------------------------------------------------------------------------

namespace {

// Sum of random low-frequency plane waves, rescaled to [-1, 1].
std::vector<double> smooth_field(Rng& rng, std::size_t h, std::size_t w, int terms, double max_cycles) {
    std::vector<double> f(h * w, 0.0);
    for (int t = 0; t < terms; ++t) {
        const double amp = rng.uniform(0.3, 1.0);
        const double u = rng.uniform(0.0, max_cycles);
        const double v = rng.uniform(0.0, max_cycles);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                f[y * w + x] += amp * std::cos(2.0 * std::numbers::pi * (u * static_cast<double>(y) / static_cast<double>(h) +
                                                                         v * static_cast<double>(x) / static_cast<double>(w)) +
                                               phase);
    }
    double peak = 0.0;
    for (double v : f) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
        for (double& v : f) v /= peak;
    return f;
}

std::vector<double> band_albedo(Rng& rng, std::size_t bands) {
    const double level = rng.uniform(0.05, 0.95);
    std::vector<double> a(bands);
    for (auto& v : a) v = std::clamp(level + 0.08 * rng.normal(), 0.0, 1.0);
    return a;
}

}  // namespace

Scene synth_scene(Rng& rng, std::size_t height, std::size_t width, std::size_t bands) {
    if (height < 2 || width < 2 || bands == 0)
        throw ArgumentError(fmt::format("synth_scene: invalid extents {}x{}x{}", height, width, bands));
    const std::size_t hw = height * width;
    Tensor img({height, width, bands});

    const auto base = smooth_field(rng, height, width, 6, 3.0);
    for (std::size_t b = 0; b < bands; ++b) {
        const auto own = smooth_field(rng, height, width, 4, 4.0);
        const double mix = rng.uniform(0.75, 0.95);
        const double level = rng.uniform(0.3, 0.6);
        const double amp = rng.uniform(0.15, 0.25);
        for (std::size_t i = 0; i < hw; ++i) img[i * bands + b] = level + amp * (mix * base[i] + (1.0 - mix) * own[i]);
    }

    // Rectangles: mostly flat albedo with a little of the underlying texture.
    const std::size_t rects = 3 + static_cast<std::size_t>(rng.below(4));
    for (std::size_t r = 0; r < rects; ++r) {
        const std::size_t rh = std::max<std::size_t>(1, height / 8 + rng.below(std::max<std::size_t>(1, height / 4)));
        const std::size_t rw = std::max<std::size_t>(1, width / 8 + rng.below(std::max<std::size_t>(1, width / 4)));
        const std::size_t y0 = rng.below(height - std::min(rh, height - 1));
        const std::size_t x0 = rng.below(width - std::min(rw, width - 1));
        const auto albedo = band_albedo(rng, bands);
        for (std::size_t y = y0; y < std::min(height, y0 + rh); ++y)
            for (std::size_t x = x0; x < std::min(width, x0 + rw); ++x)
                for (std::size_t b = 0; b < bands; ++b) {
                    double& v = img.at(y, x, b);
                    v = 0.85 * albedo[b] + 0.15 * v;
                }
    }

    // One-pixel lines (roads), horizontal or vertical.
    const std::size_t lines = 1 + static_cast<std::size_t>(rng.below(3));
    for (std::size_t l = 0; l < lines; ++l) {
        const bool horizontal = rng.below(2) == 0;
        const std::size_t pos = rng.below(horizontal ? height : width);
        const auto albedo = band_albedo(rng, bands);
        const std::size_t len = horizontal ? width : height;
        for (std::size_t t = 0; t < len; ++t) {
            const std::size_t y = horizontal ? pos : t, x = horizontal ? t : pos;
            for (std::size_t b = 0; b < bands; ++b) img.at(y, x, b) = albedo[b];
        }
    }

    for (auto& v : img.data()) v = std::clamp(v, 0.0, 1.0);
    return {std::move(img)};
}

// ---------------------------------------------------------------------------
// Degradation
// ---------------------------------------------------------------------------

double default_blur_sigma(std::size_t ratio) { return 1.7 * static_cast<double>(ratio) / 4.0; }

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const auto radius = static_cast<long>(std::ceil(4.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        total += v;
    }
    for (double& v : k) v /= total;
    return k;
}

// Mirror index without repeating the edge sample: -1 -> 1, n -> n - 2.
std::size_t mirror(long i, std::size_t n) {
    if (n == 1) return 0;
    const long period = 2 * static_cast<long>(n - 1);
    long m = i % period;
    if (m < 0) m += period;
    if (m >= static_cast<long>(n)) m = period - m;
    return static_cast<std::size_t>(m);
}

}  // namespace

Tensor wald_degrade(const Tensor& image, std::size_t ratio, double blur_sigma) {
    if (image.rank() != 3)
        throw DimensionError(fmt::format("wald_degrade: expected H x W x bands, got {}", shape_str(image.shape())));
    if (ratio == 0) throw ArgumentError("wald_degrade: ratio must be positive");
    if (!(blur_sigma > 0.0)) throw ArgumentError("wald_degrade: blur sigma must be positive");
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    if (h % ratio != 0 || w % ratio != 0)
        throw ArgumentError(fmt::format("wald_degrade: extents {}x{} not divisible by ratio {}", h, w, ratio));
    const auto kernel = gaussian_kernel(blur_sigma);
    const long radius = static_cast<long>(kernel.size() / 2);
    const std::size_t ho = h / ratio, wo = w / ratio;

    // Vertical pass, evaluated only on the retained rows.
    Tensor rows({ho, w, c});
    for (std::size_t i = 0; i < ho; ++i) {
        const long y = static_cast<long>(i * ratio);
        for (long k = -radius; k <= radius; ++k) {
            const double wk = kernel[static_cast<std::size_t>(k + radius)];
            const double* src = image.ptr() + mirror(y + k, h) * w * c;
            double* dst = rows.ptr() + i * w * c;
            for (std::size_t j = 0; j < w * c; ++j) dst[j] += wk * src[j];
        }
    }
    Tensor out({ho, wo, c});
    for (std::size_t i = 0; i < ho; ++i) {
        for (std::size_t j = 0; j < wo; ++j) {
            const long x = static_cast<long>(j * ratio);
            double* dst = out.ptr() + (i * wo + j) * c;
            for (long k = -radius; k <= radius; ++k) {
                const double wk = kernel[static_cast<std::size_t>(k + radius)];
                const double* src = rows.ptr() + (i * w + mirror(x + k, w)) * c;
                for (std::size_t b = 0; b < c; ++b) dst[b] += wk * src[b];
            }
        }
    }
    return out;
}

std::vector<double> uniform_band_weights(std::size_t bands) {
    return std::vector<double>(bands, 1.0 / static_cast<double>(bands));
}

Tensor pan_from_hrms(const Tensor& hrms, std::span<const double> band_weights) {
    if (hrms.rank() != 3)
        throw DimensionError(fmt::format("pan_from_hrms: expected H x W x bands, got {}", shape_str(hrms.shape())));
    const std::size_t c = hrms.dim(2);
    if (band_weights.size() != c)
        throw ArgumentError(fmt::format("pan_from_hrms: {} weights for {} bands", band_weights.size(), c));
    double total = 0.0;
    for (double w : band_weights) {
        if (!(w >= 0.0)) throw ArgumentError(fmt::format("pan_from_hrms: negative band weight {}", w));
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ArgumentError(fmt::format("pan_from_hrms: band weights sum to {}, expected 1", total));
    const std::size_t hw = hrms.dim(0) * hrms.dim(1);
    Tensor pan({hrms.dim(0), hrms.dim(1), 1});
    for (std::size_t i = 0; i < hw; ++i) {
        double s = 0.0;
        for (std::size_t b = 0; b < c; ++b) s += band_weights[b] * hrms[i * c + b];
        pan[i] = s;
    }
    return pan;
}

SamplePair make_reduced_pair(const Scene& scene, const DegradationSpec& spec) {
    const std::size_t c = scene.hrms.rank() == 3 ? scene.hrms.dim(2) : 0;
    const auto weights = spec.pan_weights.empty() ? uniform_band_weights(c) : spec.pan_weights;
    return {pan_from_hrms(scene.hrms, weights), wald_degrade(scene.hrms, spec.ratio, spec.blur_sigma), scene.hrms};
}

std::vector<SamplePair> make_full_resolution_pairs(std::span<const Scene> scenes, const DegradationSpec& spec) {
    std::vector<SamplePair> out;
    out.reserve(scenes.size());
    for (const auto& s : scenes) {
        SamplePair p = make_reduced_pair(s, spec);
        p.gt.reset();
        out.push_back(std::move(p));
    }
    return out;
}

Dataset synthesize_dataset(const SynthSpec& spec) {
    const std::size_t block = std::size_t{1} << spec.wavelet_levels;
    if (spec.size == 0 || spec.bands == 0 || spec.ratio == 0 || spec.size % spec.ratio != 0 || spec.size % block != 0)
        throw ArgumentError(fmt::format("synthesize_dataset: size {} must be positive and divisible by ratio {} and by {}",
                                        spec.size, spec.ratio, block));
    Dataset ds;
    auto& m = ds.manifest;
    m.protocol = spec.protocol;
    m.count = spec.samples;
    m.ratio = spec.ratio;
    m.bands = spec.bands;
    m.height = m.width = spec.size;
    m.blur_sigma = default_blur_sigma(spec.ratio);
    m.seed = spec.seed;

    Rng rng(spec.seed);
    const DegradationSpec deg{spec.ratio, m.blur_sigma, {}};
    for (std::size_t i = 0; i < spec.samples; ++i) {
        SamplePair p = make_reduced_pair(synth_scene(rng, spec.size, spec.size, spec.bands), deg);
        if (spec.protocol == Protocol::Full) p.gt.reset();
        ds.samples.push_back(std::move(p));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

TensorEntry write_tensor_file(const fs::path& dir, const std::string& name, const std::string& file, const Tensor& t) {
    std::string bytes(t.size() * 4, '\0');
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(t[i]));
        for (int k = 0; k < 4; ++k) bytes[4 * i + k] = static_cast<char>((u >> (8 * k)) & 0xFFu);
    }
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError(fmt::format("cannot write tensor file {}", (dir / file).string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IntegrityError(fmt::format("short write to tensor file {}", (dir / file).string()));
    return {name, file, t.shape(), 0, bytes.size(), "f32le"};
}

Tensor read_tensor_file(const fs::path& dir, const TensorEntry& entry) {
    const fs::path path = dir / entry.file;
    if (entry.encoding != "f32le")
        throw IntegrityError(fmt::format("{}: unsupported encoding '{}'", entry.file, entry.encoding));
    if (entry.shape.empty() || std::find(entry.shape.begin(), entry.shape.end(), 0) != entry.shape.end())
        throw IntegrityError(fmt::format("{}: invalid shape {}", entry.file, shape_str(entry.shape)));
    const std::size_t n = shape_numel(entry.shape);
    if (entry.bytes != n * 4)
        throw IntegrityError(fmt::format("{}: manifest declares {} bytes for shape {}", entry.file, entry.bytes,
                                         shape_str(entry.shape)));
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) throw IntegrityError(fmt::format("missing tensor file {}", entry.file));
    if (size != entry.offset + entry.bytes)
        throw IntegrityError(fmt::format("tensor file {} has {} bytes, manifest declares {}", entry.file, size,
                                         entry.offset + entry.bytes));
    std::ifstream in(path, std::ios::binary);
    std::string bytes(entry.bytes, '\0');
    in.seekg(static_cast<std::streamoff>(entry.offset));
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw IntegrityError(fmt::format("cannot read tensor file {}", entry.file));
    Tensor t(entry.shape);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t u = 0;
        for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + k])) << (8 * k);
        t[i] = static_cast<double>(std::bit_cast<float>(u));
    }
    return t;
}

void write_json_file(const fs::path& path, const std::string& json_text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError(fmt::format("cannot write {}", path.string()));
    out << json_text;
    if (!out) throw IntegrityError(fmt::format("short write to {}", path.string()));
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError(fmt::format("cannot read {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

json entry_to_json(const TensorEntry& e) {
    return {{"name", e.name},     {"file", e.file},   {"shape", e.shape},
            {"offset", e.offset}, {"bytes", e.bytes}, {"encoding", e.encoding}};
}

TensorEntry entry_from_json(const json& j) {
    TensorEntry e;
    e.name = j.at("name").get<std::string>();
    e.file = j.at("file").get<std::string>();
    e.shape = j.at("shape").get<Shape>();
    e.offset = j.at("offset").get<std::uint64_t>();
    e.bytes = j.at("bytes").get<std::uint64_t>();
    e.encoding = j.at("encoding").get<std::string>();
    if (e.file.find('/') != std::string::npos || e.file.find('\\') != std::string::npos)
        throw IntegrityError(fmt::format("tensor file name '{}' must not contain a path", e.file));
    return e;
}

std::string sample_key(std::size_t i) { return fmt::format("sample_{:05d}", i); }

}  // namespace

void save_dataset(const Dataset& dataset, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IntegrityError(fmt::format("cannot create dataset directory {}: {}", dir.string(), ec.message()));

    DatasetManifest m = dataset.manifest;
    m.count = dataset.samples.size();
    m.tensors.clear();
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& s = dataset.samples[i];
        const bool wants_gt = m.protocol == Protocol::Reduced;
        if (wants_gt != s.gt.has_value())
            throw ProtocolError(fmt::format("sample {}: GT presence does not match the {} protocol", i, to_string(m.protocol)));
        const std::string key = sample_key(i);
        m.tensors.push_back(write_tensor_file(dir, key + "/pan", key + "_pan.f32", s.pan));
        m.tensors.push_back(write_tensor_file(dir, key + "/lrms", key + "_lrms.f32", s.lrms));
        if (s.gt) m.tensors.push_back(write_tensor_file(dir, key + "/gt", key + "_gt.f32", *s.gt));
    }

    json tensors = json::array();
    for (const auto& e : m.tensors) tensors.push_back(entry_to_json(e));
    const json j = {{"kind", "dataset"},      {"version", m.version},       {"protocol", to_string(m.protocol)},
                    {"count", m.count},       {"ratio", m.ratio},           {"bands", m.bands},
                    {"height", m.height},     {"width", m.width},           {"blur_sigma", m.blur_sigma},
                    {"seed", m.seed},         {"tensors", std::move(tensors)}};
    write_json_file(dir / "manifest.json", j.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw IntegrityError(fmt::format("missing manifest {}", manifest_path.string()));
    Dataset ds;
    auto& m = ds.manifest;
    try {
        const json j = json::parse(read_text_file(manifest_path));
        if (j.value("kind", std::string("dataset")) != "dataset")
            throw IntegrityError(fmt::format("{} does not describe a dataset", manifest_path.string()));
        m.version = j.at("version").get<int>();
        m.protocol = parse_protocol(j.at("protocol").get<std::string>());
        m.count = j.at("count").get<std::size_t>();
        m.ratio = j.at("ratio").get<std::size_t>();
        m.bands = j.at("bands").get<std::size_t>();
        m.height = j.at("height").get<std::size_t>();
        m.width = j.at("width").get<std::size_t>();
        m.blur_sigma = j.at("blur_sigma").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& e : j.at("tensors")) m.tensors.push_back(entry_from_json(e));
    } catch (const json::exception& e) {
        throw IntegrityError(fmt::format("malformed manifest {}: {}", manifest_path.string(), e.what()));
    } catch (const ConfigError& e) {
        throw IntegrityError(fmt::format("malformed manifest {}: {}", manifest_path.string(), e.what()));
    }
    if (m.version != 1) throw IntegrityError(fmt::format("manifest.json: unsupported version {}", m.version));

    std::vector<std::optional<Tensor>> pans(m.count), lrms(m.count), gts(m.count);
    for (const auto& e : m.tensors) {
        const auto slash = e.name.find('/');
        std::size_t index = m.count;
        const std::string key = e.name.substr(0, slash);
        if (slash != std::string::npos && key.rfind("sample_", 0) == 0) {
            try {
                index = std::stoul(key.substr(7));
            } catch (const std::exception&) {
                index = m.count;
            }
        }
        if (index >= m.count) throw IntegrityError(fmt::format("manifest entry '{}' does not name a sample", e.name));
        const std::string kind = e.name.substr(slash + 1);
        auto* slot = kind == "pan" ? &pans[index] : kind == "lrms" ? &lrms[index] : kind == "gt" ? &gts[index] : nullptr;
        if (!slot) throw IntegrityError(fmt::format("manifest entry '{}' has unknown kind", e.name));
        if (slot->has_value()) throw IntegrityError(fmt::format("manifest entry '{}' is duplicated", e.name));
        *slot = read_tensor_file(dir, e);
    }
    for (std::size_t i = 0; i < m.count; ++i) {
        if (!pans[i] || !lrms[i])
            throw IntegrityError(fmt::format("sample {} is missing its PAN or LRMS tensor", i));
        if ((m.protocol == Protocol::Reduced) != gts[i].has_value())
            throw IntegrityError(fmt::format("sample {}: GT presence does not match the {} protocol", i, to_string(m.protocol)));
        ds.samples.push_back({std::move(*pans[i]), std::move(*lrms[i]), std::move(gts[i])});
    }
    return ds;
}

}  // namespace cmt
