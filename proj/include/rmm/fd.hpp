#pragma once
// Central-difference oracle used to validate analytic gradients. Lives in the
// library (not the tests) because the numerical-check CLI subcommand runs it.

#include <functional>
#include <string>

#include "rmm/param_store.hpp"

namespace rmm {

// (f(x+eps) - f(x-eps)) / 2eps for a scalar function.
double fd_derivative(const std::function<double(double)>& f, double x, double eps = 1e-5);

// Partial of f w.r.t. one scalar of one named parameter.
double fd_partial(const std::function<double(const ParamStore&)>& f, const ParamStore& base,
                  const std::string& name, std::size_t index, double eps = 1e-5);

// Full finite-difference gradient over every scalar in the store. Cost is
// 2 * total_scalars forward evaluations; intended for reduced configurations.
GradMap fd_gradient(const std::function<double(const ParamStore&)>& f, const ParamStore& base,
                    double eps = 1e-5);

// Largest rel_error between analytic and finite-difference gradients.
double max_grad_rel_error(const GradMap& analytic, const GradMap& fd);

}  // namespace rmm
