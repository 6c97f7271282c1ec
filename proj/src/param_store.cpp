#include "rmm/param_store.hpp"

namespace rmm {

void ParamStore::add(const std::string& name, Tensor t) {
    auto [it, inserted] = params_.emplace(name, std::move(t));
    if (!inserted) throw ContractError("duplicate parameter name '" + name + "'");
}

bool ParamStore::has(const std::string& name) const {
    return params_.count(name) != 0;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

Tensor& ParamStore::get_mutable(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

std::size_t ParamStore::total_scalars() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

}  // namespace rmm
