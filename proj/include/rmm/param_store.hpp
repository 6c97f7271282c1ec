#pragma once
// Named parameter tensors with deterministic (lexicographic) iteration order.

#include <map>
#include <string>

#include "rmm/tensor.hpp"

namespace rmm {

class ParamStore {
public:
    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    Tensor& get_mutable(const std::string& name);
    std::size_t size() const { return params_.size(); }
    std::size_t total_scalars() const;

    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::map<std::string, Tensor> params_;
};

// name -> gradient tensor, same shapes as the owning store.
using GradMap = std::map<std::string, Tensor>;

}  // namespace rmm
