#include "cmt/params.hpp"

#include <cmath>

#include <fmt/format.h>

#include "cmt/errors.hpp"

namespace cmt {

void ParamSet::add(const std::string& name, Tensor value) {
    if (!tensors_.emplace(name, std::move(value)).second)
        throw ConfigError(fmt::format("duplicate parameter name '{}'", name));
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ConfigError(fmt::format("unknown parameter '{}'", name));
    return it->second;
}

Tensor& ParamSet::at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ConfigError(fmt::format("unknown parameter '{}'", name));
    return it->second;
}

std::vector<std::string> ParamSet::names() const {
    std::vector<std::string> out;
    out.reserve(tensors_.size());
    for (const auto& [name, _] : tensors_) out.push_back(name);
    return out;
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += t.size();
    return n;
}

ParamBindings ParamSet::bind(bool requires_grad) const {
    ParamBindings b;
    for (const auto& [name, t] : tensors_) b.emplace(name, Var(t, requires_grad));
    return b;
}

const Var& param(const ParamBindings& bindings, const std::string& name) {
    auto it = bindings.find(name);
    if (it == bindings.end()) throw ConfigError(fmt::format("missing parameter '{}'", name));
    return it->second;
}

Tensor fan_in_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return rng.uniform_tensor(std::move(shape), -bound, bound);
}

}  // namespace cmt
