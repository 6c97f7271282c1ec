#pragma once
// Reverse-mode autodiff over Tensor values.
//
// A Tape owns every node created during one forward pass. Ops validate shapes
// eagerly, compute the forward value, and record a closure that pulls the
// node's gradient back into its inputs. backward() walks nodes in reverse
// creation order (a valid topological order by construction), skipping nodes
// whose gradient was never touched, and returns gradients for exactly the
// parameters of the store passed in. Parameter nodes are memoized by name so
// every use of a parameter in the graph accumulates into one gradient.
//
// Tapes are cheap and single-use: build, backward, discard.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rmm/param_store.hpp"
#include "rmm/tensor.hpp"

namespace rmm {

struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

class Tape {
public:
    // ---- leaves ----
    Var param(const ParamStore& store, const std::string& name);  // memoized by name
    Var constant(Tensor t);
    Var zeros_const(std::vector<std::size_t> shape);

    // ---- elementwise / linear ----
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double c);
    Var add_rowvec(Var m, Var v);             // [n,d] + [d] broadcast over rows
    Var matmul(Var a, Var b);                 // [m,k]x[k,n]
    Var matmul_nt(Var a, Var b);              // [m,k]x[n,k]^T -> [m,n]
    Var gelu(Var a);                          // exact erf form

    // ---- shape / indexing ----
    Var slice_cols(Var a, std::size_t c0, std::size_t c1);       // [n,d] -> [n,c1-c0]
    Var concat_cols(const std::vector<Var>& parts);
    Var gather_rows(Var a, std::vector<std::size_t> rows);       // duplicates allowed
    Var row_at(Var a, std::size_t r);                            // [n,d] -> [d]
    Var mean_rows(Var a);                                        // [n,d] -> [d]
    // Scatter rows of `visible` (may be absent) into a [total,d] grid at
    // visible_indices; every other row is the broadcast fill vector.
    Var assemble_rows(std::optional<Var> visible, Var fill_vec,
                      const std::vector<std::size_t>& visible_indices, std::size_t total);

    // ---- normalization / activation ----
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);  // per row
    Var softmax_rows(Var x);

    // ---- reductions to scalar (rank-1 [1] tensors) ----
    Var abs_sum(Var a);
    Var sq_sum(Var a);
    // Sum over rows of (logsumexp(row) - row[target]) with the softmax support
    // restricted to columns [support_begin, cols). Targets must lie in the
    // support. Returns the *sum*; callers divide by their own count.
    Var masked_nll_sum(Var logits, const std::vector<int>& targets, std::size_t support_begin);

    // ---- access ----
    const Tensor& val(Var v) const;
    double scalar(Var v) const;  // throws unless numel()==1

    // Gradients of `loss` (scalar) w.r.t. every parameter in `collect_for`.
    // Parameters that never entered the graph get zero gradients.
    GradMap backward(Var loss, const ParamStore& collect_for);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until first accumulation
        std::function<void(Tape&, std::size_t)> pull;
    };

    std::vector<Node> nodes_;
    std::unordered_map<std::string, std::size_t> param_nodes_;

    Var push(Tensor value, std::function<void(Tape&, std::size_t)> pull);
    Tensor& grad_ref(std::size_t id);          // zeros-on-first-use
    bool has_grad(std::size_t id) const;
    const Tensor& node_val(std::size_t id) const { return nodes_[id].value; }

    void check_rank2(Var v, const char* op) const;
};

}  // namespace rmm
