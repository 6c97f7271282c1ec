#include "rmm/graph.hpp"

#include <cmath>

namespace rmm {

namespace {

// C += A*B with ikj loop order; all row-major.
void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

double norm_cdf(double x) {
    return 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
}

double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) * 0.3989422804014326779;
}

}  // namespace

// ---- infrastructure ----

Var Tape::push(Tensor value, std::function<void(Tape&, std::size_t)> pull) {
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(pull)});
    return Var{nodes_.size() - 1};
}

Tensor& Tape::grad_ref(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.values.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

bool Tape::has_grad(std::size_t id) const {
    return !nodes_[id].grad.values.empty();
}

const Tensor& Tape::val(Var v) const {
    if (v.id >= nodes_.size()) throw ContractError("Var refers to no node on this tape");
    return nodes_[v.id].value;
}

double Tape::scalar(Var v) const {
    const Tensor& t = val(v);
    if (t.numel() != 1) throw ContractError("scalar() on tensor of shape " + shape_str(t.shape));
    return t.values[0];
}

void Tape::check_rank2(Var v, const char* op) const {
    if (val(v).rank() != 2) {
        throw ConfigError(std::string(op) + ": expected rank-2 tensor, got shape " + shape_str(val(v).shape));
    }
}

// ---- leaves ----

Var Tape::param(const ParamStore& store, const std::string& name) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) return Var{it->second};
    Var v = push(store.get(name), nullptr);
    param_nodes_.emplace(name, v.id);
    return v;
}

Var Tape::constant(Tensor t) {
    return push(std::move(t), nullptr);
}

Var Tape::zeros_const(std::vector<std::size_t> shape) {
    return constant(Tensor::zeros(std::move(shape)));
}

// ---- elementwise / linear ----

Var Tape::add(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) {
        throw ConfigError("add: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    }
    Tensor out = A;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += B.values[i];
    return push(std::move(out), [a, b](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(a.id);
        Tensor& gb = t.grad_ref(b.id);
        for (std::size_t i = 0; i < g.values.size(); ++i) {
            ga.values[i] += g.values[i];
            gb.values[i] += g.values[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) {
        throw ConfigError("sub: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    }
    Tensor out = A;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= B.values[i];
    return push(std::move(out), [a, b](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(a.id);
        Tensor& gb = t.grad_ref(b.id);
        for (std::size_t i = 0; i < g.values.size(); ++i) {
            ga.values[i] += g.values[i];
            gb.values[i] -= g.values[i];
        }
    });
}

Var Tape::scale(Var a, double c) {
    Tensor out = val(a);
    for (double& x : out.values) x *= c;
    return push(std::move(out), [a, c](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(a.id);
        for (std::size_t i = 0; i < g.values.size(); ++i) ga.values[i] += c * g.values[i];
    });
}

Var Tape::add_rowvec(Var m, Var v) {
    check_rank2(m, "add_rowvec");
    const Tensor& M = val(m);
    const Tensor& V = val(v);
    if (V.rank() != 1 || V.shape[0] != M.cols()) {
        throw ConfigError("add_rowvec: vector shape " + shape_str(V.shape) +
                          " does not match matrix " + shape_str(M.shape));
    }
    Tensor out = M;
    std::size_t rows = M.rows(), cols = M.cols();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.values[r * cols + c] += V.values[c];
    return push(std::move(out), [m, v, rows, cols](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& gm = t.grad_ref(m.id);
        Tensor& gv = t.grad_ref(v.id);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                gm.values[r * cols + c] += g.values[r * cols + c];
                gv.values[c] += g.values[r * cols + c];
            }
    });
}

Var Tape::matmul(Var a, Var b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.cols() != B.rows()) {
        throw ConfigError("matmul: inner dims differ, " + shape_str(A.shape) + " x " + shape_str(B.shape));
    }
    std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor out = Tensor::zeros({m, n});
    matmul_acc(A.values.data(), B.values.data(), out.values.data(), m, k, n);
    return push(std::move(out), [a, b, m, k, n](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& A2 = t.node_val(a.id);
        const Tensor& B2 = t.node_val(b.id);
        Tensor& ga = t.grad_ref(a.id);
        Tensor& gb = t.grad_ref(b.id);
        // dA += G * B^T
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += g.values[i * n + j] * B2.values[p * n + j];
                ga.values[i * k + p] += s;
            }
        // dB += A^T * G
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < m; ++i) {
                double av = A2.values[i * k + p];
                if (av == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) gb.values[p * n + j] += av * g.values[i * n + j];
            }
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    check_rank2(a, "matmul_nt");
    check_rank2(b, "matmul_nt");
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.cols() != B.cols()) {
        throw ConfigError("matmul_nt: trailing dims differ, " + shape_str(A.shape) + " x " +
                          shape_str(B.shape) + "^T");
    }
    std::size_t m = A.rows(), k = A.cols(), n = B.rows();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += A.values[i * k + p] * B.values[j * k + p];
            out.values[i * n + j] = s;
        }
    return push(std::move(out), [a, b, m, k, n](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& A2 = t.node_val(a.id);
        const Tensor& B2 = t.node_val(b.id);
        Tensor& ga = t.grad_ref(a.id);
        Tensor& gb = t.grad_ref(b.id);
        // C = A B^T: dA += G * B ; dB += G^T * A
        matmul_acc(g.values.data(), B2.values.data(), ga.values.data(), m, n, k);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < m; ++i) {
                double gv = g.values[i * n + j];
                if (gv == 0.0) continue;
                for (std::size_t p = 0; p < k; ++p) gb.values[j * k + p] += gv * A2.values[i * k + p];
            }
    });
}

Var Tape::gelu(Var a) {
    const Tensor& A = val(a);
    Tensor out = A;
    for (double& x : out.values) x = x * norm_cdf(x);
    return push(std::move(out), [a](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& A2 = t.node_val(a.id);
        Tensor& ga = t.grad_ref(a.id);
        for (std::size_t i = 0; i < g.values.size(); ++i) {
            double x = A2.values[i];
            ga.values[i] += g.values[i] * (norm_cdf(x) + x * norm_pdf(x));
        }
    });
}

// ---- shape / indexing ----

Var Tape::slice_cols(Var a, std::size_t c0, std::size_t c1) {
    check_rank2(a, "slice_cols");
    const Tensor& A = val(a);
    if (!(c0 < c1 && c1 <= A.cols())) {
        throw ConfigError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                          ") invalid for " + shape_str(A.shape));
    }
    std::size_t rows = A.rows(), cols = A.cols(), w = c1 - c0;
    Tensor out = Tensor::zeros({rows, w});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) out.values[r * w + c] = A.values[r * cols + c0 + c];
    return push(std::move(out), [a, c0, rows, cols, w](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(a.id);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) ga.values[r * cols + c0 + c] += g.values[r * w + c];
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ConfigError("concat_cols: no parts");
    std::size_t rows = 0, total = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        check_rank2(parts[i], "concat_cols");
        const Tensor& P = val(parts[i]);
        if (i == 0) rows = P.rows();
        if (P.rows() != rows) {
            throw ConfigError("concat_cols: row counts differ (" + std::to_string(rows) + " vs " +
                              std::to_string(P.rows()) + ")");
        }
        total += P.cols();
    }
    Tensor out = Tensor::zeros({rows, total});
    std::vector<std::size_t> offsets(parts.size());
    std::size_t off = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const Tensor& P = val(parts[i]);
        offsets[i] = off;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < P.cols(); ++c)
                out.values[r * total + off + c] = P.values[r * P.cols() + c];
        off += P.cols();
    }
    std::vector<Var> captured = parts;
    return push(std::move(out), [captured, offsets, rows, total](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        for (std::size_t i = 0; i < captured.size(); ++i) {
            Tensor& gp = t.grad_ref(captured[i].id);
            std::size_t w = gp.cols();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < w; ++c)
                    gp.values[r * w + c] += g.values[r * total + offsets[i] + c];
        }
    });
}

Var Tape::gather_rows(Var a, std::vector<std::size_t> rows_idx) {
    check_rank2(a, "gather_rows");
    const Tensor& A = val(a);
    if (rows_idx.empty()) throw ConfigError("gather_rows: empty index list");
    std::size_t cols = A.cols();
    Tensor out = Tensor::zeros({rows_idx.size(), cols});
    for (std::size_t r = 0; r < rows_idx.size(); ++r) {
        if (rows_idx[r] >= A.rows()) {
            throw ConfigError("gather_rows: index " + std::to_string(rows_idx[r]) +
                              " out of range for " + shape_str(A.shape));
        }
        for (std::size_t c = 0; c < cols; ++c)
            out.values[r * cols + c] = A.values[rows_idx[r] * cols + c];
    }
    return push(std::move(out), [a, rows_idx, cols](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(a.id);
        for (std::size_t r = 0; r < rows_idx.size(); ++r)
            for (std::size_t c = 0; c < cols; ++c)
                ga.values[rows_idx[r] * cols + c] += g.values[r * cols + c];
    });
}

Var Tape::row_at(Var a, std::size_t r) {
    check_rank2(a, "row_at");
    const Tensor& A = val(a);
    if (r >= A.rows()) {
        throw ConfigError("row_at: row " + std::to_string(r) + " out of range for " + shape_str(A.shape));
    }
    std::size_t cols = A.cols();
    Tensor out = Tensor::zeros({cols});
    for (std::size_t c = 0; c < cols; ++c) out.values[c] = A.values[r * cols + c];
    return push(std::move(out), [a, r, cols](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(a.id);
        for (std::size_t c = 0; c < cols; ++c) ga.values[r * cols + c] += g.values[c];
    });
}

Var Tape::mean_rows(Var a) {
    check_rank2(a, "mean_rows");
    const Tensor& A = val(a);
    std::size_t rows = A.rows(), cols = A.cols();
    Tensor out = Tensor::zeros({cols});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.values[c] += A.values[r * cols + c];
    for (double& x : out.values) x /= static_cast<double>(rows);
    return push(std::move(out), [a, rows, cols](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(a.id);
        double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) ga.values[r * cols + c] += g.values[c] * inv;
    });
}

Var Tape::assemble_rows(std::optional<Var> visible, Var fill_vec,
                        const std::vector<std::size_t>& visible_indices, std::size_t total) {
    const Tensor& F = val(fill_vec);
    if (F.rank() != 1) throw ConfigError("assemble_rows: fill vector must be rank 1");
    std::size_t cols = F.shape[0];
    if (total == 0) throw ConfigError("assemble_rows: total must be positive");
    if (visible.has_value()) {
        check_rank2(*visible, "assemble_rows");
        const Tensor& V = val(*visible);
        if (V.rows() != visible_indices.size() || V.cols() != cols) {
            throw ConfigError("assemble_rows: visible shape " + shape_str(V.shape) + " vs " +
                              std::to_string(visible_indices.size()) + " indices, width " +
                              std::to_string(cols));
        }
    } else if (!visible_indices.empty()) {
        throw ConfigError("assemble_rows: indices given but no visible tensor");
    }
    Tensor out = Tensor::zeros({total, cols});
    std::vector<bool> taken(total, false);
    for (std::size_t i = 0; i < visible_indices.size(); ++i) {
        std::size_t slot = visible_indices[i];
        if (slot >= total || taken[slot]) {
            throw ConfigError("assemble_rows: bad or duplicate slot " + std::to_string(slot));
        }
        taken[slot] = true;
        const Tensor& V = val(*visible);
        for (std::size_t c = 0; c < cols; ++c) out.values[slot * cols + c] = V.values[i * cols + c];
    }
    for (std::size_t slot = 0; slot < total; ++slot) {
        if (taken[slot]) continue;
        for (std::size_t c = 0; c < cols; ++c) out.values[slot * cols + c] = F.values[c];
    }
    std::vector<std::size_t> vi = visible_indices;
    return push(std::move(out), [visible, fill_vec, vi, total, cols](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        std::vector<bool> taken(total, false);
        if (visible.has_value()) {
            Tensor& gv = t.grad_ref(visible->id);
            for (std::size_t i = 0; i < vi.size(); ++i) {
                taken[vi[i]] = true;
                for (std::size_t c = 0; c < cols; ++c)
                    gv.values[i * cols + c] += g.values[vi[i] * cols + c];
            }
        }
        Tensor& gf = t.grad_ref(fill_vec.id);
        for (std::size_t slot = 0; slot < total; ++slot) {
            if (taken[slot]) continue;
            for (std::size_t c = 0; c < cols; ++c) gf.values[c] += g.values[slot * cols + c];
        }
    });
}

// ---- normalization / activation ----

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
    check_rank2(x, "layer_norm");
    const Tensor& X = val(x);
    const Tensor& G = val(gamma);
    const Tensor& B = val(beta);
    std::size_t rows = X.rows(), cols = X.cols();
    if (G.rank() != 1 || G.shape[0] != cols || B.rank() != 1 || B.shape[0] != cols) {
        throw ConfigError("layer_norm: gamma/beta must be rank-1 of width " + std::to_string(cols));
    }
    Tensor out = Tensor::zeros({rows, cols});
    Tensor xhat = Tensor::zeros({rows, cols});
    std::vector<double> inv_sigma(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mu += X.values[r * cols + c];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            double d = X.values[r * cols + c] - mu;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = is;
        for (std::size_t c = 0; c < cols; ++c) {
            double xh = (X.values[r * cols + c] - mu) * is;
            xhat.values[r * cols + c] = xh;
            out.values[r * cols + c] = xh * G.values[c] + B.values[c];
        }
    }
    return push(std::move(out),
                [x, gamma, beta, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma), rows,
                 cols](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& G2 = t.node_val(gamma.id);
        Tensor& gx = t.grad_ref(x.id);
        Tensor& gg = t.grad_ref(gamma.id);
        Tensor& gb = t.grad_ref(beta.id);
        for (std::size_t r = 0; r < rows; ++r) {
            double mean_h = 0.0, mean_hx = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                double gv = g.values[r * cols + c];
                double xh = xhat.values[r * cols + c];
                double h = gv * G2.values[c];
                gg.values[c] += gv * xh;
                gb.values[c] += gv;
                mean_h += h;
                mean_hx += h * xh;
            }
            mean_h /= static_cast<double>(cols);
            mean_hx /= static_cast<double>(cols);
            for (std::size_t c = 0; c < cols; ++c) {
                double h = g.values[r * cols + c] * G2.values[c];
                double xh = xhat.values[r * cols + c];
                gx.values[r * cols + c] += (h - mean_h - xh * mean_hx) * inv_sigma[r];
            }
        }
    });
}

Var Tape::softmax_rows(Var x) {
    check_rank2(x, "softmax_rows");
    const Tensor& X = val(x);
    std::size_t rows = X.rows(), cols = X.cols();
    Tensor out = Tensor::zeros({rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = X.values[r * cols];
        for (std::size_t c = 1; c < cols; ++c) mx = std::fmax(mx, X.values[r * cols + c]);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            double e = std::exp(X.values[r * cols + c] - mx);
            out.values[r * cols + c] = e;
            z += e;
        }
        for (std::size_t c = 0; c < cols; ++c) out.values[r * cols + c] /= z;
    }
    return push(std::move(out), [x, rows, cols](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.node_val(self);
        Tensor& gx = t.grad_ref(x.id);
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c)
                dot += g.values[r * cols + c] * y.values[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c)
                gx.values[r * cols + c] += y.values[r * cols + c] * (g.values[r * cols + c] - dot);
        }
    });
}

// ---- reductions ----

Var Tape::abs_sum(Var a) {
    const Tensor& A = val(a);
    double s = 0.0;
    for (double x : A.values) s += std::fabs(x);
    return push(Tensor({1}, {s}), [a](Tape& t, std::size_t self) {
        double g = t.nodes_[self].grad.values[0];
        const Tensor& A2 = t.node_val(a.id);
        Tensor& ga = t.grad_ref(a.id);
        for (std::size_t i = 0; i < A2.values.size(); ++i) {
            double x = A2.values[i];
            ga.values[i] += g * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
        }
    });
}

Var Tape::sq_sum(Var a) {
    const Tensor& A = val(a);
    double s = 0.0;
    for (double x : A.values) s += x * x;
    return push(Tensor({1}, {s}), [a](Tape& t, std::size_t self) {
        double g = t.nodes_[self].grad.values[0];
        const Tensor& A2 = t.node_val(a.id);
        Tensor& ga = t.grad_ref(a.id);
        for (std::size_t i = 0; i < A2.values.size(); ++i) ga.values[i] += 2.0 * g * A2.values[i];
    });
}

Var Tape::masked_nll_sum(Var logits, const std::vector<int>& targets, std::size_t support_begin) {
    check_rank2(logits, "masked_nll_sum");
    const Tensor& L = val(logits);
    std::size_t rows = L.rows(), cols = L.cols();
    if (targets.size() != rows) {
        throw ConfigError("masked_nll_sum: " + std::to_string(targets.size()) + " targets for " +
                          std::to_string(rows) + " rows");
    }
    if (support_begin >= cols) {
        throw ConfigError("masked_nll_sum: support_begin " + std::to_string(support_begin) +
                          " leaves no columns of " + std::to_string(cols));
    }
    for (int tgt : targets) {
        if (tgt < static_cast<int>(support_begin) || tgt >= static_cast<int>(cols)) {
            throw ConfigError("masked_nll_sum: target " + std::to_string(tgt) +
                              " outside support [" + std::to_string(support_begin) + "," +
                              std::to_string(cols) + ")");
        }
    }
    // Softmax over the support only; keep per-row probabilities for backward.
    Tensor probs = Tensor::zeros({rows, cols});  // outside support stays 0
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = L.values[r * cols + support_begin];
        for (std::size_t c = support_begin; c < cols; ++c)
            mx = std::fmax(mx, L.values[r * cols + c]);
        double z = 0.0;
        for (std::size_t c = support_begin; c < cols; ++c) {
            double e = std::exp(L.values[r * cols + c] - mx);
            probs.values[r * cols + c] = e;
            z += e;
        }
        for (std::size_t c = support_begin; c < cols; ++c) probs.values[r * cols + c] /= z;
        double lse = mx + std::log(z);
        total += lse - L.values[r * cols + static_cast<std::size_t>(targets[r])];
    }
    std::vector<int> tg = targets;
    return push(Tensor({1}, {total}),
                [logits, tg, probs = std::move(probs), support_begin, rows, cols](Tape& t, std::size_t self) {
        double g = t.nodes_[self].grad.values[0];
        Tensor& gl = t.grad_ref(logits.id);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = support_begin; c < cols; ++c) {
                double d = probs.values[r * cols + c];
                if (c == static_cast<std::size_t>(tg[r])) d -= 1.0;
                gl.values[r * cols + c] += g * d;
            }
        }
    });
}

// ---- backward ----

GradMap Tape::backward(Var loss, const ParamStore& collect_for) {
    const Tensor& L = val(loss);
    if (L.numel() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(L.shape));
    }
    grad_ref(loss.id).values[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.values.empty() || !n.pull) continue;
        n.pull(*this, i);
    }
    GradMap out;
    for (const auto& [name, t] : collect_for) {
        auto it = param_nodes_.find(name);
        if (it != param_nodes_.end() && has_grad(it->second)) {
            out.emplace(name, nodes_[it->second].grad);
        } else {
            out.emplace(name, Tensor::zeros(t.shape));
        }
    }
    return out;
}

}  // namespace rmm
