#include "druformer/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace druformer {

namespace {

// C[m x n] += A[m x p] * B[p x n], row-major. The j-loop carries independent
// accumulators so it vectorizes without float reassociation.
void gemm_acc(const double* A, const double* B, double* C, int m, int p, int n) {
    for (int i = 0; i < m; ++i) {
        const double* a_row = A + static_cast<size_t>(i) * p;
        double* c_row = C + static_cast<size_t>(i) * n;
        for (int l = 0; l < p; ++l) {
            const double a = a_row[l];
            const double* b_row = B + static_cast<size_t>(l) * n;
            for (int j = 0; j < n; ++j) c_row[j] += a * b_row[j];
        }
    }
}

std::vector<double> transpose_copy(const std::vector<double>& a, int rows, int cols) {
    std::vector<double> t(a.size());
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            t[static_cast<size_t>(j) * rows + i] = a[static_cast<size_t>(i) * cols + j];
    return t;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

bool track(Tensor a) { return Tape::recording() && a.requires_grad(); }
bool track(Tensor a, Tensor b) {
    return Tape::recording() && (a.requires_grad() || b.requires_grad());
}

void acc_into(Tensor t, const std::vector<double>& g) {
    auto& gt = t.grad();
    for (size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
}

int last_dim(Tensor x) {
    require(x.ndim() >= 1, "op requires ndim >= 1");
    return x.shape().back();
}

}  // namespace

Tensor add(Tensor a, Tensor b) {
    require(a.shape() == b.shape(), "add: shape mismatch");
    Tensor out = Tensor::zeros(a.shape());
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + bd[i];
    check_finite("add", od);
    if (track(a, b)) {
        out.set_requires_grad(true);
        Tape::active()->record("add", out, [a, b, out]() mutable {
            const auto& g = out.grad();
            if (a.requires_grad()) acc_into(a, g);
            if (b.requires_grad()) acc_into(b, g);
        });
    }
    return out;
}

Tensor sub(Tensor a, Tensor b) {
    require(a.shape() == b.shape(), "sub: shape mismatch");
    Tensor out = Tensor::zeros(a.shape());
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] - bd[i];
    check_finite("sub", od);
    if (track(a, b)) {
        out.set_requires_grad(true);
        Tape::active()->record("sub", out, [a, b, out]() mutable {
            const auto& g = out.grad();
            if (a.requires_grad()) acc_into(a, g);
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return out;
}

Tensor mul(Tensor a, Tensor b) {
    require(a.shape() == b.shape(), "mul: shape mismatch");
    Tensor out = Tensor::zeros(a.shape());
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * bd[i];
    check_finite("mul", od);
    if (track(a, b)) {
        out.set_requires_grad(true);
        Tape::active()->record("mul", out, [a, b, out]() mutable {
            const auto& g = out.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                const auto& bd2 = b.data();
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd2[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                const auto& ad2 = a.data();
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad2[i];
            }
        });
    }
    return out;
}

Tensor div(Tensor a, Tensor b) {
    require(a.shape() == b.shape(), "div: shape mismatch");
    Tensor out = Tensor::zeros(a.shape());
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] / bd[i];
    check_finite("div", od);
    if (track(a, b)) {
        out.set_requires_grad(true);
        Tape::active()->record("div", out, [a, b, out]() mutable {
            const auto& g = out.grad();
            const auto& ad2 = a.data();
            const auto& bd2 = b.data();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bd2[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * ad2[i] / (bd2[i] * bd2[i]);
            }
        });
    }
    return out;
}

Tensor maximum(Tensor a, Tensor b) {
    require(a.shape() == b.shape(), "maximum: shape mismatch");
    Tensor out = Tensor::zeros(a.shape());
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] >= bd[i] ? ad[i] : bd[i];
    check_finite("maximum", od);
    if (track(a, b)) {
        out.set_requires_grad(true);
        Tape::active()->record("maximum", out, [a, b, out]() mutable {
            const auto& g = out.grad();
            const auto& ad2 = a.data();
            const auto& bd2 = b.data();
            double* ga = a.requires_grad() ? a.grad().data() : nullptr;
            double* gb = b.requires_grad() ? b.grad().data() : nullptr;
            for (size_t i = 0; i < g.size(); ++i) {
                if (ad2[i] >= bd2[i]) {
                    if (ga) ga[i] += g[i];
                } else if (gb) {
                    gb[i] += g[i];
                }
            }
        });
    }
    return out;
}

Tensor minimum(Tensor a, Tensor b) {
    require(a.shape() == b.shape(), "minimum: shape mismatch");
    Tensor out = Tensor::zeros(a.shape());
    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = ad[i] <= bd[i] ? ad[i] : bd[i];
    check_finite("minimum", od);
    if (track(a, b)) {
        out.set_requires_grad(true);
        Tape::active()->record("minimum", out, [a, b, out]() mutable {
            const auto& g = out.grad();
            const auto& ad2 = a.data();
            const auto& bd2 = b.data();
            double* ga = a.requires_grad() ? a.grad().data() : nullptr;
            double* gb = b.requires_grad() ? b.grad().data() : nullptr;
            for (size_t i = 0; i < g.size(); ++i) {
                if (ad2[i] <= bd2[i]) {
                    if (ga) ga[i] += g[i];
                } else if (gb) {
                    gb[i] += g[i];
                }
            }
        });
    }
    return out;
}

Tensor scalar_mul(Tensor x, double c) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = xd[i] * c;
    check_finite("scalar_mul", od);
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("scalar_mul", out, [x, out, c]() mutable {
            const auto& g = out.grad();
            auto& gx = x.grad();
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * c;
        });
    }
    return out;
}

Tensor scalar_add(Tensor x, double c) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = xd[i] + c;
    check_finite("scalar_add", od);
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("scalar_add", out, [x, out]() mutable {
            acc_into(x, out.grad());
        });
    }
    return out;
}

Tensor add_rowvec(Tensor x, Tensor v) {
    require(x.ndim() >= 1 && v.ndim() == 1, "add_rowvec: expects x[... x d], v[d]");
    const int d = last_dim(x);
    require(v.dim(0) == d, "add_rowvec: vector length mismatch");
    Tensor out = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    const auto& vd = v.data();
    auto& od = out.data();
    const size_t rows = xd.size() / static_cast<size_t>(d);
    for (size_t r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j)
            od[r * d + j] = xd[r * d + j] + vd[static_cast<size_t>(j)];
    check_finite("add_rowvec", od);
    if (track(x, v)) {
        out.set_requires_grad(true);
        Tape::active()->record("add_rowvec", out, [x, v, out, rows, d]() mutable {
            const auto& g = out.grad();
            if (x.requires_grad()) acc_into(x, g);
            if (v.requires_grad()) {
                auto& gv = v.grad();
                for (size_t r = 0; r < rows; ++r)
                    for (int j = 0; j < d; ++j) gv[static_cast<size_t>(j)] += g[r * d + j];
            }
        });
    }
    return out;
}

Tensor add_chan(Tensor x, Tensor b) {
    require(x.ndim() == 3 && b.ndim() == 1, "add_chan: expects x[C x H x W], b[C]");
    const int C = x.dim(0);
    require(b.dim(0) == C, "add_chan: channel count mismatch");
    const size_t plane = x.numel() / static_cast<size_t>(C);
    Tensor out = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    const auto& bd = b.data();
    auto& od = out.data();
    for (int c = 0; c < C; ++c) {
        const double bc = bd[static_cast<size_t>(c)];
        for (size_t i = 0; i < plane; ++i) od[c * plane + i] = xd[c * plane + i] + bc;
    }
    check_finite("add_chan", od);
    if (track(x, b)) {
        out.set_requires_grad(true);
        Tape::active()->record("add_chan", out, [x, b, out, C, plane]() mutable {
            const auto& g = out.grad();
            if (x.requires_grad()) acc_into(x, g);
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (int c = 0; c < C; ++c) {
                    double s = 0.0;
                    for (size_t i = 0; i < plane; ++i) s += g[c * plane + i];
                    gb[static_cast<size_t>(c)] += s;
                }
            }
        });
    }
    return out;
}

Tensor matmul(Tensor a, Tensor b) {
    require(a.ndim() == 2 && b.ndim() == 2, "matmul: expects 2-D tensors");
    require(a.dim(1) == b.dim(0), "matmul: inner dimensions differ");
    const int m = a.dim(0), p = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    gemm_acc(a.data().data(), b.data().data(), out.data().data(), m, p, n);
    check_finite("matmul", out.data());
    if (track(a, b)) {
        out.set_requires_grad(true);
        Tape::active()->record("matmul", out, [a, b, out, m, p, n]() mutable {
            const auto& g = out.grad();
            if (a.requires_grad()) {
                // dA += g * B^T
                std::vector<double> bt = transpose_copy(b.data(), p, n);
                gemm_acc(g.data(), bt.data(), a.grad().data(), m, n, p);
            }
            if (b.requires_grad()) {
                // dB += A^T * g
                std::vector<double> at = transpose_copy(a.data(), m, p);
                gemm_acc(at.data(), g.data(), b.grad().data(), p, m, n);
            }
        });
    }
    return out;
}

Tensor transpose(Tensor a) {
    require(a.ndim() == 2, "transpose: expects 2-D tensor");
    const int m = a.dim(0), n = a.dim(1);
    Tensor out = Tensor::from_data({n, m}, transpose_copy(a.data(), m, n));
    if (track(a)) {
        out.set_requires_grad(true);
        Tape::active()->record("transpose", out, [a, out, m, n]() mutable {
            std::vector<double> gt = transpose_copy(out.grad(), n, m);
            acc_into(a, gt);
        });
    }
    return out;
}

Tensor relu(Tensor x) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = xd[i] > 0.0 ? xd[i] : 0.0;
    check_finite("relu", od);
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("relu", out, [x, out]() mutable {
            const auto& g = out.grad();
            const auto& xd2 = x.data();
            auto& gx = x.grad();
            for (size_t i = 0; i < g.size(); ++i)
                if (xd2[i] > 0.0) gx[i] += g[i];
        });
    }
    return out;
}

Tensor sigmoid(Tensor x) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = 1.0 / (1.0 + std::exp(-xd[i]));
    check_finite("sigmoid", od);
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("sigmoid", out, [x, out]() mutable {
            const auto& g = out.grad();
            const auto& od2 = out.data();
            auto& gx = x.grad();
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * od2[i] * (1.0 - od2[i]);
        });
    }
    return out;
}

Tensor abs_val(Tensor x) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = std::fabs(xd[i]);
    check_finite("abs_val", od);
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("abs_val", out, [x, out]() mutable {
            const auto& g = out.grad();
            const auto& xd2 = x.data();
            auto& gx = x.grad();
            for (size_t i = 0; i < g.size(); ++i) {
                if (xd2[i] > 0.0) gx[i] += g[i];
                else if (xd2[i] < 0.0) gx[i] -= g[i];
            }
        });
    }
    return out;
}

Tensor softmax_lastdim(Tensor x) {
    const int d = last_dim(x);
    require(d >= 1, "softmax_lastdim: last dim must be >= 1");
    Tensor out = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    auto& od = out.data();
    const size_t rows = xd.size() / static_cast<size_t>(d);
    for (size_t r = 0; r < rows; ++r) {
        const double* xr = xd.data() + r * d;
        double* yr = od.data() + r * d;
        double mx = xr[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
        double sum = 0.0;
        for (int j = 0; j < d; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        for (int j = 0; j < d; ++j) yr[j] /= sum;
    }
    check_finite("softmax_lastdim", od);
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("softmax_lastdim", out, [x, out, rows, d]() mutable {
            const auto& g = out.grad();
            const auto& y = out.data();
            auto& gx = x.grad();
            for (size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (int j = 0; j < d; ++j) dot += g[r * d + j] * y[r * d + j];
                for (int j = 0; j < d; ++j)
                    gx[r * d + j] += y[r * d + j] * (g[r * d + j] - dot);
            }
        });
    }
    return out;
}

Tensor log_softmax_lastdim(Tensor x) {
    const int d = last_dim(x);
    require(d >= 1, "log_softmax_lastdim: last dim must be >= 1");
    Tensor out = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    auto& od = out.data();
    const size_t rows = xd.size() / static_cast<size_t>(d);
    for (size_t r = 0; r < rows; ++r) {
        const double* xr = xd.data() + r * d;
        double* yr = od.data() + r * d;
        double mx = xr[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
        double sum = 0.0;
        for (int j = 0; j < d; ++j) sum += std::exp(xr[j] - mx);
        const double lse = mx + std::log(sum);
        for (int j = 0; j < d; ++j) yr[j] = xr[j] - lse;
    }
    check_finite("log_softmax_lastdim", od);
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("log_softmax_lastdim", out, [x, out, rows, d]() mutable {
            const auto& g = out.grad();
            const auto& y = out.data();
            auto& gx = x.grad();
            for (size_t r = 0; r < rows; ++r) {
                double gsum = 0.0;
                for (int j = 0; j < d; ++j) gsum += g[r * d + j];
                for (int j = 0; j < d; ++j)
                    gx[r * d + j] += g[r * d + j] - std::exp(y[r * d + j]) * gsum;
            }
        });
    }
    return out;
}

Tensor layer_norm(Tensor x, Tensor gamma, Tensor beta, double eps) {
    const int d = last_dim(x);
    require(gamma.ndim() == 1 && gamma.dim(0) == d, "layer_norm: gamma shape mismatch");
    require(beta.ndim() == 1 && beta.dim(0) == d, "layer_norm: beta shape mismatch");
    Tensor out = Tensor::zeros(x.shape());
    const auto& xd = x.data();
    const auto& gm = gamma.data();
    const auto& bt = beta.data();
    auto& od = out.data();
    const size_t rows = xd.size() / static_cast<size_t>(d);
    std::vector<double> inv_sigma(rows), mean(rows);
    for (size_t r = 0; r < rows; ++r) {
        const double* xr = xd.data() + r * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xr[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= d;  // population variance
        const double is = 1.0 / std::sqrt(var + eps);
        mean[r] = mu;
        inv_sigma[r] = is;
        double* yr = od.data() + r * d;
        for (int j = 0; j < d; ++j) yr[j] = gm[static_cast<size_t>(j)] * (xr[j] - mu) * is + bt[static_cast<size_t>(j)];
    }
    check_finite("layer_norm", od);
    if (Tape::recording() && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad())) {
        out.set_requires_grad(true);
        Tape::active()->record(
            "layer_norm", out,
            [x, gamma, beta, out, rows, d, mean, inv_sigma]() mutable {
                const auto& g = out.grad();
                const auto& xd2 = x.data();
                const auto& gm2 = gamma.data();
                for (size_t r = 0; r < rows; ++r) {
                    const double* xr = xd2.data() + r * d;
                    const double* gr = g.data() + r * d;
                    const double is = inv_sigma[r];
                    const double mu = mean[r];
                    double mean_gh = 0.0, mean_ghy = 0.0;
                    std::vector<double> yhat(static_cast<size_t>(d));
                    for (int j = 0; j < d; ++j) {
                        yhat[static_cast<size_t>(j)] = (xr[j] - mu) * is;
                        const double gh = gr[j] * gm2[static_cast<size_t>(j)];
                        mean_gh += gh;
                        mean_ghy += gh * yhat[static_cast<size_t>(j)];
                    }
                    mean_gh /= d;
                    mean_ghy /= d;
                    if (x.requires_grad()) {
                        auto& gx = x.grad();
                        for (int j = 0; j < d; ++j) {
                            const double gh = gr[j] * gm2[static_cast<size_t>(j)];
                            gx[r * d + j] += is * (gh - mean_gh - yhat[static_cast<size_t>(j)] * mean_ghy);
                        }
                    }
                    if (gamma.requires_grad()) {
                        auto& gg = gamma.grad();
                        for (int j = 0; j < d; ++j) gg[static_cast<size_t>(j)] += gr[j] * yhat[static_cast<size_t>(j)];
                    }
                    if (beta.requires_grad()) {
                        auto& gb = beta.grad();
                        for (int j = 0; j < d; ++j) gb[static_cast<size_t>(j)] += gr[j];
                    }
                }
            });
    }
    return out;
}

namespace {

// cols[(C_in*kh*kw) x (H'*W')] from x[C_in x H x W].
std::vector<double> im2col(const std::vector<double>& x, int C, int H, int W,
                           int kh, int kw, int stride, int Ho, int Wo) {
    std::vector<double> cols(static_cast<size_t>(C) * kh * kw * Ho * Wo);
    const size_t ncols = static_cast<size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                const size_t row = (static_cast<size_t>(c) * kh + i) * kw + j;
                double* dst = cols.data() + row * ncols;
                for (int y = 0; y < Ho; ++y) {
                    const int sy = y * stride + i;
                    const double* src = x.data() + (static_cast<size_t>(c) * H + sy) * W;
                    for (int xo = 0; xo < Wo; ++xo) dst[static_cast<size_t>(y) * Wo + xo] = src[xo * stride + j];
                }
            }
        }
    }
    return cols;
}

void col2im_acc(const std::vector<double>& cols, std::vector<double>& gx, int C, int H, int W,
                int kh, int kw, int stride, int Ho, int Wo) {
    const size_t ncols = static_cast<size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                const size_t row = (static_cast<size_t>(c) * kh + i) * kw + j;
                const double* src = cols.data() + row * ncols;
                for (int y = 0; y < Ho; ++y) {
                    const int sy = y * stride + i;
                    double* dst = gx.data() + (static_cast<size_t>(c) * H + sy) * W;
                    for (int xo = 0; xo < Wo; ++xo) dst[xo * stride + j] += src[static_cast<size_t>(y) * Wo + xo];
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(Tensor x, Tensor kernels, int stride) {
    require(x.ndim() == 3, "conv2d: input must be [C_in x H x W]");
    require(kernels.ndim() == 4, "conv2d: kernels must be [C_out x C_in x kh x kw]");
    require(stride >= 1, "conv2d: stride must be >= 1");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int Co = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    require(kernels.dim(1) == C, "conv2d: channel mismatch");
    require(kh <= H && kw <= W, "conv2d: kernel larger than input");
    const int Ho = (H - kh) / stride + 1;
    const int Wo = (W - kw) / stride + 1;
    const int krows = C * kh * kw;
    const size_t ncols = static_cast<size_t>(Ho) * Wo;

    auto cols = std::make_shared<std::vector<double>>(im2col(x.data(), C, H, W, kh, kw, stride, Ho, Wo));
    Tensor out = Tensor::zeros({Co, Ho, Wo});
    gemm_acc(kernels.data().data(), cols->data(), out.data().data(), Co, krows, static_cast<int>(ncols));
    check_finite("conv2d", out.data());
    if (track(x, kernels)) {
        out.set_requires_grad(true);
        Tape::active()->record(
            "conv2d", out,
            [x, kernels, out, cols, C, H, W, kh, kw, stride, Ho, Wo, Co, krows, ncols]() mutable {
                const auto& g = out.grad();
                if (kernels.requires_grad()) {
                    // dK += g * cols^T
                    std::vector<double> colsT = transpose_copy(*cols, krows, static_cast<int>(ncols));
                    gemm_acc(g.data(), colsT.data(), kernels.grad().data(), Co, static_cast<int>(ncols), krows);
                }
                if (x.requires_grad()) {
                    // dcols = K^T * g, then scatter back
                    std::vector<double> kt = transpose_copy(kernels.data(), Co, krows);
                    std::vector<double> dcols(static_cast<size_t>(krows) * ncols, 0.0);
                    gemm_acc(kt.data(), g.data(), dcols.data(), krows, Co, static_cast<int>(ncols));
                    col2im_acc(dcols, x.grad(), C, H, W, kh, kw, stride, Ho, Wo);
                }
            });
    }
    return out;
}

Tensor pad2d(Tensor x, int p) {
    require(x.ndim() == 3, "pad2d: input must be [C x H x W]");
    require(p >= 0, "pad2d: negative padding");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int Hp = H + 2 * p, Wp = W + 2 * p;
    Tensor out = Tensor::zeros({C, Hp, Wp});
    const auto& xd = x.data();
    auto& od = out.data();
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int xi = 0; xi < W; ++xi)
                od[(static_cast<size_t>(c) * Hp + y + p) * Wp + xi + p] =
                    xd[(static_cast<size_t>(c) * H + y) * W + xi];
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("pad2d", out, [x, out, C, H, W, Hp, Wp, p]() mutable {
            const auto& g = out.grad();
            auto& gx = x.grad();
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < H; ++y)
                    for (int xi = 0; xi < W; ++xi)
                        gx[(static_cast<size_t>(c) * H + y) * W + xi] +=
                            g[(static_cast<size_t>(c) * Hp + y + p) * Wp + xi + p];
        });
    }
    return out;
}

Tensor flatten_spatial(Tensor x) {
    require(x.ndim() == 3, "flatten_spatial: input must be [C x H x W]");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int HW = H * W;
    Tensor out = Tensor::zeros({HW, C});
    const auto& xd = x.data();
    auto& od = out.data();
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < HW; ++i)
            od[static_cast<size_t>(i) * C + c] = xd[static_cast<size_t>(c) * HW + i];
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("flatten_spatial", out, [x, out, C, HW]() mutable {
            const auto& g = out.grad();
            auto& gx = x.grad();
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < HW; ++i)
                    gx[static_cast<size_t>(c) * HW + i] += g[static_cast<size_t>(i) * C + c];
        });
    }
    return out;
}

Tensor reshape(Tensor x, std::vector<int> new_shape) {
    require(shape_numel(new_shape) == x.numel(), "reshape: element count mismatch");
    Tensor out = Tensor::from_data(std::move(new_shape), x.data());
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("reshape", out, [x, out]() mutable {
            acc_into(x, out.grad());
        });
    }
    return out;
}

Tensor concat_rows(Tensor a, Tensor b) {
    require(a.ndim() == 2 && b.ndim() == 2, "concat_rows: expects 2-D tensors");
    require(a.dim(1) == b.dim(1), "concat_rows: column count mismatch");
    const int ra = a.dim(0), rb = b.dim(0), d = a.dim(1);
    Tensor out = Tensor::zeros({ra + rb, d});
    auto& od = out.data();
    std::copy(a.data().begin(), a.data().end(), od.begin());
    std::copy(b.data().begin(), b.data().end(), od.begin() + a.numel());
    if (track(a, b)) {
        out.set_requires_grad(true);
        Tape::active()->record("concat_rows", out, [a, b, out, ra, rb, d]() mutable {
            const auto& g = out.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (size_t i = 0; i < static_cast<size_t>(ra) * d; ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                const size_t off = static_cast<size_t>(ra) * d;
                for (size_t i = 0; i < static_cast<size_t>(rb) * d; ++i) gb[i] += g[off + i];
            }
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols: empty input");
    const int r = parts[0].dim(0);
    int total = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        require(p.ndim() == 2 && p.dim(0) == r, "concat_cols: row count mismatch");
        total += p.dim(1);
        any_grad = any_grad || p.requires_grad();
    }
    Tensor out = Tensor::zeros({r, total});
    auto& od = out.data();
    int off = 0;
    for (const auto& p : parts) {
        const int d = p.dim(1);
        const auto& pd = p.data();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < d; ++j)
                od[static_cast<size_t>(i) * total + off + j] = pd[static_cast<size_t>(i) * d + j];
        off += d;
    }
    if (Tape::recording() && any_grad) {
        out.set_requires_grad(true);
        std::vector<Tensor> held = parts;
        Tape::active()->record("concat_cols", out, [held, out, r, total]() mutable {
            const auto& g = out.grad();
            int off2 = 0;
            for (auto& p : held) {
                const int d = p.dim(1);
                if (p.requires_grad()) {
                    auto& gp = p.grad();
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < d; ++j)
                            gp[static_cast<size_t>(i) * d + j] += g[static_cast<size_t>(i) * total + off2 + j];
                }
                off2 += d;
            }
        });
    }
    return out;
}

Tensor slice_rows(Tensor x, int r0, int r1) {
    require(x.ndim() == 2, "slice_rows: expects 2-D tensor");
    require(0 <= r0 && r0 < r1 && r1 <= x.dim(0), "slice_rows: range out of bounds");
    const int d = x.dim(1);
    Tensor out = Tensor::zeros({r1 - r0, d});
    std::copy(x.data().begin() + static_cast<size_t>(r0) * d,
              x.data().begin() + static_cast<size_t>(r1) * d, out.data().begin());
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("slice_rows", out, [x, out, r0, d]() mutable {
            const auto& g = out.grad();
            auto& gx = x.grad();
            const size_t off = static_cast<size_t>(r0) * d;
            for (size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
        });
    }
    return out;
}

Tensor slice_cols(Tensor x, int c0, int c1) {
    require(x.ndim() == 2, "slice_cols: expects 2-D tensor");
    require(0 <= c0 && c0 < c1 && c1 <= x.dim(1), "slice_cols: range out of bounds");
    const int r = x.dim(0), d = x.dim(1), w = c1 - c0;
    Tensor out = Tensor::zeros({r, w});
    const auto& xd = x.data();
    auto& od = out.data();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j)
            od[static_cast<size_t>(i) * w + j] = xd[static_cast<size_t>(i) * d + c0 + j];
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("slice_cols", out, [x, out, r, d, w, c0]() mutable {
            const auto& g = out.grad();
            auto& gx = x.grad();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < w; ++j)
                    gx[static_cast<size_t>(i) * d + c0 + j] += g[static_cast<size_t>(i) * w + j];
        });
    }
    return out;
}

Tensor select_rows(Tensor x, const std::vector<int>& idx) {
    require(x.ndim() == 2, "select_rows: expects 2-D tensor");
    const int d = x.dim(1);
    for (int i : idx) require(0 <= i && i < x.dim(0), "select_rows: index out of range");
    Tensor out = Tensor::zeros({static_cast<int>(idx.size()), d});
    const auto& xd = x.data();
    auto& od = out.data();
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy(xd.begin() + static_cast<size_t>(idx[r]) * d,
                  xd.begin() + static_cast<size_t>(idx[r] + 1) * d, od.begin() + r * d);
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("select_rows", out, [x, out, idx, d]() mutable {
            const auto& g = out.grad();
            auto& gx = x.grad();
            for (size_t r = 0; r < idx.size(); ++r)
                for (int j = 0; j < d; ++j)
                    gx[static_cast<size_t>(idx[r]) * d + j] += g[r * d + j];
        });
    }
    return out;
}

Tensor gather_rows(Tensor x, const std::vector<int>& col_idx) {
    require(x.ndim() == 2, "gather_rows: expects 2-D tensor");
    require(static_cast<int>(col_idx.size()) == x.dim(0), "gather_rows: one index per row required");
    const int d = x.dim(1);
    for (int c : col_idx) require(0 <= c && c < d, "gather_rows: column index out of range");
    Tensor out = Tensor::zeros({x.dim(0)});
    const auto& xd = x.data();
    auto& od = out.data();
    for (size_t r = 0; r < col_idx.size(); ++r) od[r] = xd[r * d + col_idx[r]];
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("gather_rows", out, [x, out, col_idx, d]() mutable {
            const auto& g = out.grad();
            auto& gx = x.grad();
            for (size_t r = 0; r < col_idx.size(); ++r) gx[r * d + col_idx[r]] += g[r];
        });
    }
    return out;
}

Tensor sum_all(Tensor x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor out = Tensor::scalar(s);
    check_finite("sum_all", out.data());
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("sum_all", out, [x, out]() mutable {
            const double g = out.grad()[0];
            auto& gx = x.grad();
            for (double& v : gx) v += g;
        });
    }
    return out;
}

Tensor mean_all(Tensor x) {
    require(x.numel() > 0, "mean_all: empty tensor");
    double s = 0.0;
    for (double v : x.data()) s += v;
    const double inv = 1.0 / static_cast<double>(x.numel());
    Tensor out = Tensor::scalar(s * inv);
    check_finite("mean_all", out.data());
    if (track(x)) {
        out.set_requires_grad(true);
        Tape::active()->record("mean_all", out, [x, out, inv]() mutable {
            const double g = out.grad()[0] * inv;
            auto& gx = x.grad();
            for (double& v : gx) v += g;
        });
    }
    return out;
}

}  // namespace druformer
