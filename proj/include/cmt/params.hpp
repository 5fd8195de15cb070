#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "cmt/autograd.hpp"
#include "cmt/rng.hpp"
#include "cmt/tensor.hpp"

namespace cmt {

/// Named learnable tensors, ordered by name. Names look like
/// "extract.pan.conv0.kernel" and are stable across runs.
class ParamSet {
public:
    void add(const std::string& name, Tensor value);
    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);

    std::vector<std::string> names() const;
    std::size_t size() const noexcept { return tensors_.size(); }
    /// Total scalar count over all tensors.
    std::size_t scalar_count() const;

    /// Leaf Vars for one forward pass; requires_grad=false skips graph recording.
    ParamBindings bind(bool requires_grad = true) const;

    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }
    auto begin() { return tensors_.begin(); }
    auto end() { return tensors_.end(); }

    bool operator==(const ParamSet&) const = default;

private:
    std::map<std::string, Tensor> tensors_;
};

/// Looks up a binding, throwing ConfigError naming the missing parameter.
const Var& param(const ParamBindings& bindings, const std::string& name);

/// U(-b, b) with b = 1 / sqrt(fan_in).
Tensor fan_in_uniform(Rng& rng, Shape shape, std::size_t fan_in);

}  // namespace cmt
