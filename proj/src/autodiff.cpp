#include "tspsens/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tspsens/error.hpp"

namespace tspsens::ad {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("shape mismatch in ") + what);
}

/// c += a * b
void gemm_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            double* crow = c.data.data() + i * c.cols;
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
}

/// c += a * b^T
void gemm_bt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.rows; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(j, k);
            c(i, j) += s;
        }
    }
}

/// c += a^T * b
void gemm_at_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    for (std::size_t k = 0; k < a.rows; ++k) {
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            double* crow = c.data.data() + i * c.cols;
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
}

}  // namespace

Var Tape::push(Matrix value, std::function<void()> back) {
    nodes_.push_back(Node{std::move(value), Matrix{}, std::move(back)});
    return nodes_.size() - 1;
}

Matrix& Tape::g(Var v) {
    auto& n = nodes_[v];
    if (n.grad.size() != n.value.size() || n.grad.rows != n.value.rows) n.grad = Matrix(n.value.rows, n.value.cols);
    return n.grad;
}

const Matrix& Tape::grad(Var v) { return g(v); }

Var Tape::leaf(Matrix value) { return push(std::move(value)); }

Var Tape::matmul(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    require(A.cols == B.rows, "matmul");
    Matrix out(A.rows, B.cols);
    gemm_acc(A, B, out);
    const Var o = push(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        const Matrix& go = nodes_[o].grad;
        gemm_bt_acc(go, value(b), g(a));
        gemm_at_acc(value(a), go, g(b));
    };
    return o;
}

Var Tape::matmul_bt(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    require(A.cols == B.cols, "matmul_bt");
    Matrix out(A.rows, B.rows);
    gemm_bt_acc(A, B, out);
    const Var o = push(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        const Matrix& go = nodes_[o].grad;
        gemm_acc(go, value(b), g(a));
        gemm_at_acc(go, value(a), g(b));
    };
    return o;
}

Var Tape::add(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    require(A.rows == B.rows && A.cols == B.cols, "add");
    Matrix out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
    const Var o = push(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        const Matrix& go = nodes_[o].grad;
        Matrix& ga = g(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i];
        Matrix& gb = g(b);
        for (std::size_t i = 0; i < go.size(); ++i) gb.data[i] += go.data[i];
    };
    return o;
}

Var Tape::add_bias(Var a, Var bias) {
    const Matrix& A = value(a);
    const Matrix& B = value(bias);
    require(B.rows == 1 && B.cols == A.cols, "add_bias");
    Matrix out = A;
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t c = 0; c < out.cols; ++c) out(r, c) += B(0, c);
    }
    const Var o = push(std::move(out));
    nodes_[o].back = [this, a, bias, o] {
        const Matrix& go = nodes_[o].grad;
        Matrix& ga = g(a);
        Matrix& gb = g(bias);
        for (std::size_t r = 0; r < go.rows; ++r) {
            for (std::size_t c = 0; c < go.cols; ++c) {
                ga(r, c) += go(r, c);
                gb(0, c) += go(r, c);
            }
        }
    };
    return o;
}

Var Tape::scale(Var a, double s) {
    Matrix out = value(a);
    for (double& v : out.data) v *= s;
    const Var o = push(std::move(out));
    nodes_[o].back = [this, a, o, s] {
        const Matrix& go = nodes_[o].grad;
        Matrix& ga = g(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga.data[i] += s * go.data[i];
    };
    return o;
}

Var Tape::relu(Var a) {
    Matrix out = value(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    const Var o = push(std::move(out));
    nodes_[o].back = [this, a, o] {
        const Matrix& go = nodes_[o].grad;
        const Matrix& x = value(a);
        Matrix& ga = g(a);
        for (std::size_t i = 0; i < go.size(); ++i) {
            if (x.data[i] > 0.0) ga.data[i] += go.data[i];
        }
    };
    return o;
}

Var Tape::dropout(Var a, double p, Rng& rng) {
    if (p <= 0.0) return a;
    const Matrix& x = value(a);
    Matrix mask(x.rows, x.cols);
    const double keep_scale = 1.0 / (1.0 - p);
    for (double& m : mask.data) m = rng.uniform() >= p ? keep_scale : 0.0;
    Matrix out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask.data[i];
    const Var o = push(std::move(out));
    nodes_[o].back = [this, a, o, mask = std::move(mask)] {
        const Matrix& go = nodes_[o].grad;
        Matrix& ga = g(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga.data[i] += mask.data[i] * go.data[i];
    };
    return o;
}

Var Tape::layer_norm(Var a, Var gamma, Var beta, double eps) {
    const Matrix& x = value(a);
    const std::size_t rows = x.rows;
    const std::size_t cols = x.cols;
    require(value(gamma).rows == 1 && value(gamma).cols == cols, "layer_norm gamma");
    require(value(beta).rows == 1 && value(beta).cols == cols, "layer_norm beta");
    Matrix xhat(rows, cols);
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += x(r, c);
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
        var /= static_cast<double>(cols);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c) xhat(r, c) = (x(r, c) - mean) * inv_std[r];
    }
    Matrix out(rows, cols);
    const Matrix& gm = value(gamma);
    const Matrix& bt = value(beta);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out(r, c) = gm(0, c) * xhat(r, c) + bt(0, c);
    }
    const Var o = push(std::move(out));
    nodes_[o].back = [this, a, gamma, beta, o, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
        const Matrix& go = nodes_[o].grad;
        const Matrix& gm = value(gamma);
        Matrix& ga = g(a);
        Matrix& gg = g(gamma);
        Matrix& gb = g(beta);
        const std::size_t cols = go.cols;
        const double inv_cols = 1.0 / static_cast<double>(cols);
        for (std::size_t r = 0; r < go.rows; ++r) {
            double sum_dxhat = 0.0;
            double sum_dxhat_xhat = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                const double dxhat = go(r, c) * gm(0, c);
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat(r, c);
                gg(0, c) += go(r, c) * xhat(r, c);
                gb(0, c) += go(r, c);
            }
            for (std::size_t c = 0; c < cols; ++c) {
                const double dxhat = go(r, c) * gm(0, c);
                ga(r, c) += inv_std[r] * (dxhat - inv_cols * sum_dxhat - xhat(r, c) * inv_cols * sum_dxhat_xhat);
            }
        }
    };
    return o;
}

Var Tape::mean_rows(Var a) {
    const Matrix& x = value(a);
    require(x.rows > 0, "mean_rows (empty)");
    Matrix out(1, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < x.cols; ++c) out(0, c) += x(r, c);
    }
    const double inv = 1.0 / static_cast<double>(x.rows);
    for (double& v : out.data) v *= inv;
    const Var o = push(std::move(out));
    nodes_[o].back = [this, a, o, inv] {
        const Matrix& go = nodes_[o].grad;
        Matrix& ga = g(a);
        for (std::size_t r = 0; r < ga.rows; ++r) {
            for (std::size_t c = 0; c < ga.cols; ++c) ga(r, c) += inv * go(0, c);
        }
    };
    return o;
}

Var Tape::broadcast_rows(Var a, std::size_t rows) {
    const Matrix& x = value(a);
    require(x.rows == 1, "broadcast_rows");
    Matrix out(rows, x.cols);
    for (std::size_t r = 0; r < rows; ++r) std::copy(x.data.begin(), x.data.end(), out.row(r).begin());
    const Var o = push(std::move(out));
    nodes_[o].back = [this, a, o] {
        const Matrix& go = nodes_[o].grad;
        Matrix& ga = g(a);
        for (std::size_t r = 0; r < go.rows; ++r) {
            for (std::size_t c = 0; c < go.cols; ++c) ga(0, c) += go(r, c);
        }
    };
    return o;
}

Var Tape::concat_cols(std::span<const Var> parts) {
    require(!parts.empty(), "concat_cols (no inputs)");
    const std::size_t rows = value(parts[0]).rows;
    std::size_t cols = 0;
    for (Var p : parts) {
        require(value(p).rows == rows, "concat_cols");
        cols += value(p).cols;
    }
    Matrix out(rows, cols);
    std::size_t off = 0;
    for (Var p : parts) {
        const Matrix& x = value(p);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < x.cols; ++c) out(r, off + c) = x(r, c);
        }
        off += x.cols;
    }
    const Var o = push(std::move(out));
    nodes_[o].back = [this, o, parts = std::vector<Var>(parts.begin(), parts.end())] {
        const Matrix& go = nodes_[o].grad;
        std::size_t off = 0;
        for (Var p : parts) {
            Matrix& gp = g(p);
            for (std::size_t r = 0; r < gp.rows; ++r) {
                for (std::size_t c = 0; c < gp.cols; ++c) gp(r, c) += go(r, off + c);
            }
            off += gp.cols;
        }
    };
    return o;
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t len) {
    const Matrix& x = value(a);
    require(start + len <= x.cols, "slice_cols");
    Matrix out(x.rows, len);
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < len; ++c) out(r, c) = x(r, start + c);
    }
    const Var o = push(std::move(out));
    nodes_[o].back = [this, a, o, start, len] {
        const Matrix& go = nodes_[o].grad;
        Matrix& ga = g(a);
        for (std::size_t r = 0; r < go.rows; ++r) {
            for (std::size_t c = 0; c < len; ++c) ga(r, start + c) += go(r, c);
        }
    };
    return o;
}

Var Tape::softmax_rows(Var a) {
    Matrix out = value(a);
    for (std::size_t r = 0; r < out.rows; ++r) {
        auto row = out.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : row) v /= sum;
    }
    const Var o = push(std::move(out));
    nodes_[o].back = [this, a, o] {
        const Matrix& go = nodes_[o].grad;
        const Matrix& y = value(o);
        Matrix& ga = g(a);
        for (std::size_t r = 0; r < y.rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < y.cols; ++c) dot += go(r, c) * y(r, c);
            for (std::size_t c = 0; c < y.cols; ++c) ga(r, c) += y(r, c) * (go(r, c) - dot);
        }
    };
    return o;
}

void Tape::backward(Var out, const Matrix& seed) {
    require(seed.rows == value(out).rows && seed.cols == value(out).cols, "backward seed");
    for (auto& n : nodes_) n.grad = Matrix(n.value.rows, n.value.cols);
    nodes_[out].grad = seed;
    for (std::size_t i = out + 1; i-- > 0;) {
        if (nodes_[i].back) nodes_[i].back();
    }
}

}  // namespace tspsens::ad
