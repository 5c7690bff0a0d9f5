#include "druformer/gradcheck.hpp"

#include <cmath>

#include "druformer/nn.hpp"
#include "druformer/ops.hpp"

namespace druformer {

GradCheckResult gradcheck(const std::vector<Tensor>& leaves,
                          const std::function<Tensor()>& forward,
                          const GradCheckOptions& opts) {
    std::vector<std::vector<double>> analytic;
    {
        for (const auto& leaf : leaves) {
            Tensor l = leaf;
            l.zero_grad();
        }
        Tape tape;
        Tensor loss = forward();
        tape.backward(loss);
        for (const auto& leaf : leaves) {
            Tensor l = leaf;
            analytic.push_back(l.grad());
        }
    }

    GradCheckResult res;
    res.pass = true;
    RngService probe_rng(opts.probe_seed);
    NoGradGuard no_grad;
    for (size_t li = 0; li < leaves.size(); ++li) {
        Tensor leaf = leaves[li];
        std::vector<size_t> elems;
        if (opts.probes_per_leaf >= 0 && static_cast<size_t>(opts.probes_per_leaf) < leaf.numel()) {
            for (int p = 0; p < opts.probes_per_leaf; ++p)
                elems.push_back(static_cast<size_t>(probe_rng.uniform_int(static_cast<int>(leaf.numel()))));
        } else {
            for (size_t e = 0; e < leaf.numel(); ++e) elems.push_back(e);
        }
        for (size_t e : elems) {
            const double saved = leaf.data()[e];
            leaf.data()[e] = saved + opts.h;
            const double fp = forward().item();
            leaf.data()[e] = saved - opts.h;
            const double fm = forward().item();
            leaf.data()[e] = saved;
            const double numeric = (fp - fm) / (2.0 * opts.h);
            const double a = analytic[li][e];
            const double rel = std::fabs(a - numeric) / std::max(std::fabs(a) + std::fabs(numeric), 1e-6);
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_site = "leaf" + std::to_string(li) + "[" + std::to_string(e) + "]";
            }
        }
    }
    res.pass = res.max_rel_err < opts.tol;
    return res;
}

namespace {

Tensor random_tensor(std::vector<int> shape, RngService& rng, bool requires_grad = true) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (double& v : t.data()) v = rng.normal();
    return t;
}

// Pushes values away from zero so relu/abs finite differences stay smooth.
void avoid_zero(Tensor& t, double margin) {
    for (double& v : t.data()) {
        if (std::fabs(v) < margin) v = v >= 0.0 ? margin : -margin;
    }
}

// Keeps |a - b| >= margin elementwise so min/max picks a stable side.
void avoid_ties(const Tensor& a, Tensor& b, double margin) {
    for (size_t i = 0; i < a.numel(); ++i) {
        if (std::fabs(a.data()[i] - b.data()[i]) < margin) b.data()[i] += 2.0 * margin;
    }
}

GradCheckResult check_binary(uint64_t seed, bool kink,
                             const std::function<Tensor(const Tensor&, const Tensor&)>& op) {
    RngService rng(seed);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    if (kink) avoid_ties(a, b, 0.05);
    Tensor w = Tensor::zeros({3, 4});
    for (double& v : w.data()) v = rng.uniform(0.5, 1.5);
    auto fwd = [&]() { return sum_all(mul(op(a, b), w)); };
    return gradcheck({a, b}, fwd);
}

GradCheckResult check_unary(uint64_t seed, bool kink, std::vector<int> shape,
                            const std::function<Tensor(const Tensor&)>& op) {
    RngService rng(seed);
    Tensor x = random_tensor(shape, rng);
    if (kink) avoid_zero(x, 0.05);
    Tensor w;
    {
        NoGradGuard ng;
        Tensor probe = op(x);
        RngService wrng(seed + 7);
        w = Tensor::zeros(probe.shape());
        for (double& v : w.data()) v = wrng.uniform(0.5, 1.5);
    }
    auto fwd = [&, w]() { return sum_all(mul(op(x), w)); };
    return gradcheck({x}, fwd);
}

}  // namespace

std::vector<OpCheck> builtin_op_checks() {
    std::vector<OpCheck> checks;
    auto add_check = [&](std::string name, std::function<GradCheckResult(uint64_t)> fn) {
        checks.push_back(OpCheck{std::move(name), std::move(fn)});
    };

    add_check("add", [](uint64_t s) { return check_binary(s, false, [](const Tensor& a, const Tensor& b) { return add(a, b); }); });
    add_check("sub", [](uint64_t s) { return check_binary(s, false, [](const Tensor& a, const Tensor& b) { return sub(a, b); }); });
    add_check("mul", [](uint64_t s) { return check_binary(s, false, [](const Tensor& a, const Tensor& b) { return mul(a, b); }); });
    add_check("div", [](uint64_t s) {
        return check_binary(s, false, [](const Tensor& a, const Tensor& b) {
            return div(a, scalar_add(sigmoid(b), 0.5));  // keep the denominator in [0.5, 1.5]
        });
    });
    add_check("maximum", [](uint64_t s) { return check_binary(s, true, [](const Tensor& a, const Tensor& b) { return maximum(a, b); }); });
    add_check("minimum", [](uint64_t s) { return check_binary(s, true, [](const Tensor& a, const Tensor& b) { return minimum(a, b); }); });
    add_check("scalar_mul", [](uint64_t s) { return check_unary(s, false, {3, 4}, [](const Tensor& x) { return scalar_mul(x, -1.7); }); });
    add_check("scalar_add", [](uint64_t s) { return check_unary(s, false, {3, 4}, [](const Tensor& x) { return scalar_add(x, 0.9); }); });
    add_check("add_rowvec", [](uint64_t s) {
        RngService rng(s);
        Tensor x = random_tensor({4, 5}, rng);
        Tensor v = random_tensor({5}, rng);
        Tensor w = Tensor::zeros({4, 5});
        RngService wrng(s + 7);
        for (double& val : w.data()) val = wrng.uniform(0.5, 1.5);
        auto fwd = [&, w]() { return sum_all(mul(add_rowvec(x, v), w)); };
        return gradcheck({x, v}, fwd);
    });
    add_check("add_chan", [](uint64_t s) {
        RngService rng(s);
        Tensor x = random_tensor({3, 4, 4}, rng);
        Tensor b = random_tensor({3}, rng);
        Tensor w = Tensor::zeros({3, 4, 4});
        RngService wrng(s + 7);
        for (double& val : w.data()) val = wrng.uniform(0.5, 1.5);
        auto fwd = [&, w]() { return sum_all(mul(add_chan(x, b), w)); };
        return gradcheck({x, b}, fwd);
    });
    add_check("matmul", [](uint64_t s) {
        RngService rng(s);
        Tensor a = random_tensor({3, 5}, rng);
        Tensor b = random_tensor({5, 4}, rng);
        Tensor w = Tensor::zeros({3, 4});
        RngService wrng(s + 7);
        for (double& val : w.data()) val = wrng.uniform(0.5, 1.5);
        auto fwd = [&, w]() { return sum_all(mul(matmul(a, b), w)); };
        return gradcheck({a, b}, fwd);
    });
    add_check("transpose", [](uint64_t s) {
        return check_unary(s, false, {3, 5}, [](const Tensor& x) { return transpose(x); });
    });
    add_check("relu", [](uint64_t s) { return check_unary(s, true, {3, 4}, [](const Tensor& x) { return relu(x); }); });
    add_check("sigmoid", [](uint64_t s) { return check_unary(s, false, {3, 4}, [](const Tensor& x) { return sigmoid(x); }); });
    add_check("abs_val", [](uint64_t s) { return check_unary(s, true, {3, 4}, [](const Tensor& x) { return abs_val(x); }); });
    add_check("softmax_lastdim", [](uint64_t s) {
        return check_unary(s, false, {4, 6}, [](const Tensor& x) { return softmax_lastdim(x); });
    });
    add_check("log_softmax_lastdim", [](uint64_t s) {
        return check_unary(s, false, {4, 6}, [](const Tensor& x) { return log_softmax_lastdim(x); });
    });
    add_check("layer_norm", [](uint64_t s) {
        RngService rng(s);
        Tensor x = random_tensor({3, 8}, rng);
        Tensor gamma = random_tensor({8}, rng);
        Tensor beta = random_tensor({8}, rng);
        Tensor w = Tensor::zeros({3, 8});
        RngService wrng(s + 7);
        for (double& val : w.data()) val = wrng.uniform(0.5, 1.5);
        auto fwd = [&, w]() { return sum_all(mul(layer_norm(x, gamma, beta, 1e-5), w)); };
        return gradcheck({x, gamma, beta}, fwd);
    });
    add_check("conv2d", [](uint64_t s) {
        RngService rng(s);
        Tensor x = random_tensor({2, 6, 6}, rng);
        Tensor k = random_tensor({3, 2, 3, 3}, rng);
        Tensor w = Tensor::zeros({3, 2, 2});
        RngService wrng(s + 7);
        for (double& val : w.data()) val = wrng.uniform(0.5, 1.5);
        auto fwd = [&, w]() { return sum_all(mul(conv2d(x, k, 2), w)); };
        return gradcheck({x, k}, fwd);
    });
    add_check("pad2d", [](uint64_t s) {
        return check_unary(s, false, {2, 3, 3}, [](const Tensor& x) { return pad2d(x, 1); });
    });
    add_check("flatten_spatial", [](uint64_t s) {
        return check_unary(s, false, {3, 2, 4}, [](const Tensor& x) { return flatten_spatial(x); });
    });
    add_check("reshape", [](uint64_t s) {
        return check_unary(s, false, {3, 4}, [](const Tensor& x) { return reshape(x, {2, 6}); });
    });
    add_check("concat_rows", [](uint64_t s) {
        RngService rng(s);
        Tensor a = random_tensor({2, 4}, rng);
        Tensor b = random_tensor({3, 4}, rng);
        Tensor w = Tensor::zeros({5, 4});
        RngService wrng(s + 7);
        for (double& val : w.data()) val = wrng.uniform(0.5, 1.5);
        auto fwd = [&, w]() { return sum_all(mul(concat_rows(a, b), w)); };
        return gradcheck({a, b}, fwd);
    });
    add_check("concat_cols", [](uint64_t s) {
        RngService rng(s);
        Tensor a = random_tensor({3, 2}, rng);
        Tensor b = random_tensor({3, 3}, rng);
        Tensor c = random_tensor({3, 1}, rng);
        Tensor w = Tensor::zeros({3, 6});
        RngService wrng(s + 7);
        for (double& val : w.data()) val = wrng.uniform(0.5, 1.5);
        auto fwd = [&, w]() { return sum_all(mul(concat_cols({a, b, c}), w)); };
        return gradcheck({a, b, c}, fwd);
    });
    add_check("slice_rows", [](uint64_t s) {
        return check_unary(s, false, {5, 3}, [](const Tensor& x) { return slice_rows(x, 1, 4); });
    });
    add_check("slice_cols", [](uint64_t s) {
        return check_unary(s, false, {3, 6}, [](const Tensor& x) { return slice_cols(x, 2, 5); });
    });
    add_check("select_rows", [](uint64_t s) {
        return check_unary(s, false, {5, 3},
                           [](const Tensor& x) { return select_rows(x, {4, 0, 2, 0}); });
    });
    add_check("gather_rows", [](uint64_t s) {
        return check_unary(s, false, {4, 5},
                           [](const Tensor& x) { return gather_rows(x, {1, 0, 4, 2}); });
    });
    add_check("sum_all", [](uint64_t s) {
        return check_unary(s, false, {3, 4}, [](const Tensor& x) { return sum_all(x); });
    });
    add_check("mean_all", [](uint64_t s) {
        return check_unary(s, false, {3, 4}, [](const Tensor& x) { return mean_all(x); });
    });
    add_check("linear_ffn", [](uint64_t s) {
        RngService rng(s);
        Ffn ffn = Ffn::init(4, 6, 3, rng);
        Tensor x = random_tensor({2, 4}, rng);
        Tensor w = Tensor::zeros({2, 3});
        RngService wrng(s + 7);
        for (double& val : w.data()) val = wrng.uniform(0.5, 1.5);
        auto fwd = [&, w]() { return sum_all(mul(ffn.forward(x), w)); };
        return gradcheck({x, ffn.fc1.W, ffn.fc1.b, ffn.fc2.W, ffn.fc2.b}, fwd);
    });
    add_check("multi_head_attention", [](uint64_t s) {
        RngService rng(s);
        MultiHeadAttention mha = MultiHeadAttention::init(8, 2, true, rng);
        Tensor x = random_tensor({4, 8}, rng);
        Tensor w = Tensor::zeros({4, 8});
        RngService wrng(s + 7);
        for (double& val : w.data()) val = wrng.uniform(0.5, 1.5);
        auto fwd = [&, w]() { return sum_all(mul(mha.forward(x, x).output, w)); };
        std::vector<Tensor> leaves = {x, mha.q[0].W, mha.k[1].W, mha.v[0].W, mha.out_proj.W};
        return gradcheck(leaves, fwd);
    });

    return checks;
}

}  // namespace druformer
