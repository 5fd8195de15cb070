#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cmt/autograd.hpp"
#include "cmt/ops.hpp"
#include "cmt/params.hpp"
#include "cmt/rng.hpp"
#include "oracles.hpp"

namespace testutil {

using cmt::Tensor;
using cmt::Var;
using OpFn = std::function<Var(const std::vector<Var>&)>;

// Contracts f's output with a fixed random weight so every output element
// contributes, then compares reverse-mode gradients of every input with
// central differences. Returns the worst relative error over the inputs.
inline double op_grad_error(const OpFn& f, const std::vector<Tensor>& inputs, std::uint64_t seed = 1) {
    auto as_vars = [](const std::vector<Tensor>& ts, bool grad) {
        std::vector<Var> v;
        for (const auto& t : ts) v.emplace_back(t, grad);
        return v;
    };
    cmt::Rng rng(seed);
    const Tensor weight = rng.normal_tensor(f(as_vars(inputs, false)).value().shape());
    auto scalar = [&](const std::vector<Var>& v) { return cmt::sum(cmt::mul(f(v), Var(weight))); };

    const auto vars = as_vars(inputs, true);
    cmt::backward(scalar(vars));
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor numeric = oracle::numeric_grad(
            [&](const Tensor& xk) {
                auto ts = inputs;
                ts[k] = xk;
                return scalar(as_vars(ts, false)).value().item();
            },
            inputs[k]);
        worst = std::max(worst, oracle::rel_error(vars[k].grad(), numeric));
    }
    return worst;
}


// Relative finite-difference error of every parameter of a scalar closure.
inline std::map<std::string, double> param_grad_errors(const cmt::ParamSet& params,
                                                       const std::function<Var(const cmt::ParamBindings&)>& loss) {
    const cmt::ParamBindings bound = params.bind(true);
    const cmt::GradientMap grads = cmt::backward(loss(bound), bound);
    std::map<std::string, double> errors;
    for (const auto& [name, value] : params) {
        const Tensor numeric = oracle::numeric_grad(
            [&, name = name](const Tensor& x) {
                cmt::ParamSet p = params;
                p.at(name) = x;
                return loss(p.bind(false)).value().item();
            },
            value);
        errors[name] = oracle::rel_error(grads.at(name), numeric);
    }
    return errors;
}

// Adds sigma * N(0,1) to every tensor so zero-initialized paths are exercised.
inline cmt::ParamSet perturbed(cmt::ParamSet p, std::uint64_t seed, double sigma = 0.05) {
    cmt::Rng rng(seed);
    for (auto& [name, t] : p)
        for (auto& v : t.data()) v += sigma * rng.normal();
    return p;
}

}  // namespace testutil
