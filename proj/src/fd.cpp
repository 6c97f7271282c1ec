#include "rmm/fd.hpp"

#include "rmm/common.hpp"

namespace rmm {

double fd_derivative(const std::function<double(double)>& f, double x, double eps) {
    if (eps <= 0.0) throw ConfigError("fd_derivative: eps must be positive");
    return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

double fd_partial(const std::function<double(const ParamStore&)>& f, const ParamStore& base,
                  const std::string& name, std::size_t index, double eps) {
    if (eps <= 0.0) throw ConfigError("fd_partial: eps must be positive");
    const Tensor& t = base.get(name);
    if (index >= t.numel()) {
        throw ConfigError("fd_partial: index " + std::to_string(index) + " out of range for '" +
                          name + "' (" + shape_str(t.shape) + ")");
    }
    ParamStore work = base;
    double orig = work.get(name).values[index];
    work.get_mutable(name).values[index] = orig + eps;
    double hi = f(work);
    work.get_mutable(name).values[index] = orig - eps;
    double lo = f(work);
    return (hi - lo) / (2.0 * eps);
}

GradMap fd_gradient(const std::function<double(const ParamStore&)>& f, const ParamStore& base,
                    double eps) {
    GradMap out;
    ParamStore work = base;
    for (const auto& [name, t] : base) {
        Tensor g = Tensor::zeros(t.shape);
        for (std::size_t i = 0; i < t.numel(); ++i) {
            double orig = work.get(name).values[i];
            work.get_mutable(name).values[i] = orig + eps;
            double hi = f(work);
            work.get_mutable(name).values[i] = orig - eps;
            double lo = f(work);
            work.get_mutable(name).values[i] = orig;
            g.values[i] = (hi - lo) / (2.0 * eps);
        }
        out.emplace(name, std::move(g));
    }
    return out;
}

double max_grad_rel_error(const GradMap& analytic, const GradMap& fd) {
    if (analytic.size() != fd.size()) throw ContractError("max_grad_rel_error: store size mismatch");
    double worst = 0.0;
    for (const auto& [name, ga] : analytic) {
        auto it = fd.find(name);
        if (it == fd.end()) throw ContractError("max_grad_rel_error: missing '" + name + "'");
        const Tensor& gf = it->second;
        if (!ga.same_shape(gf)) throw ContractError("max_grad_rel_error: shape mismatch on '" + name + "'");
        for (std::size_t i = 0; i < ga.numel(); ++i) {
            double e = rel_error(ga.values[i], gf.values[i]);
            if (e > worst) worst = e;
        }
    }
    return worst;
}

}  // namespace rmm
