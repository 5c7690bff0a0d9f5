#include "druformer/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace druformer {

void ParamRegistry::add(const std::string& name, Tensor t) {
    for (const auto& p : params_) {
        if (p.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
    }
    params_.push_back(Param{name, std::move(t)});
}

size_t ParamRegistry::total_elements() const {
    size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

void ParamRegistry::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

const Tensor* ParamRegistry::find(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.name == name) return &p.tensor;
    }
    return nullptr;
}

Tensor xavier_init(int fan_in, int fan_out, std::vector<int> shape, RngService& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (double& v : t.data()) v = rng.uniform(-a, a);
    return t;
}

Linear Linear::init(int in, int out, RngService& rng) {
    if (in < 1 || out < 1) throw std::invalid_argument("Linear: dimensions must be >= 1");
    Linear l;
    l.W = xavier_init(in, out, {in, out}, rng);
    l.b = Tensor::zeros({out}, true);
    return l;
}

void Linear::register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".W", W);
    reg.add(prefix + ".b", b);
}

Ffn Ffn::init(int in, int hidden, int out, RngService& rng) {
    if (hidden < 1) throw std::invalid_argument("Ffn: hidden width must be >= 1");
    Ffn f;
    f.fc1 = Linear::init(in, hidden, rng);
    f.fc2 = Linear::init(hidden, out, rng);
    return f;
}

void Ffn::register_params(ParamRegistry& reg, const std::string& prefix) const {
    fc1.register_params(reg, prefix + ".fc1");
    fc2.register_params(reg, prefix + ".fc2");
}

LayerNormParams LayerNormParams::init(int d, double eps) {
    LayerNormParams ln;
    ln.gamma = Tensor::full({d}, 1.0, true);
    ln.beta = Tensor::zeros({d}, true);
    ln.eps = eps;
    return ln;
}

void LayerNormParams::register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".gamma", gamma);
    reg.add(prefix + ".beta", beta);
}

MultiHeadAttention MultiHeadAttention::init(int d_model, int n_heads, bool with_out_proj,
                                            RngService& rng) {
    if (n_heads < 1 || d_model % n_heads != 0) {
        throw std::invalid_argument("MultiHeadAttention: d_model must be divisible by n_heads");
    }
    MultiHeadAttention mha;
    mha.n_heads = n_heads;
    mha.d_model = d_model;
    mha.d_head = d_model / n_heads;
    for (int h = 0; h < n_heads; ++h) {
        mha.q.push_back(Linear::init(mha.d_head, mha.d_head, rng));
        mha.k.push_back(Linear::init(mha.d_head, mha.d_head, rng));
        mha.v.push_back(Linear::init(mha.d_head, mha.d_head, rng));
    }
    mha.has_out_proj = with_out_proj;
    if (with_out_proj) mha.out_proj = Linear::init(d_model, d_model, rng);
    return mha;
}

MultiHeadAttention::Result MultiHeadAttention::forward(const Tensor& query,
                                                       const Tensor& memory) const {
    if (query.ndim() != 2 || query.dim(1) != d_model || memory.ndim() != 2 ||
        memory.dim(1) != d_model) {
        throw std::invalid_argument("MultiHeadAttention: input width must equal d_model");
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));
    std::vector<Tensor> head_outs;
    std::vector<Tensor> maps;
    for (int h = 0; h < n_heads; ++h) {
        Tensor qs = slice_cols(query, h * d_head, (h + 1) * d_head);
        Tensor ms = slice_cols(memory, h * d_head, (h + 1) * d_head);
        Tensor qh = q[static_cast<size_t>(h)].forward(qs);
        Tensor kh = k[static_cast<size_t>(h)].forward(ms);
        Tensor vh = v[static_cast<size_t>(h)].forward(ms);
        Tensor scores = scalar_mul(matmul(qh, transpose(kh)), scale);
        Tensor a = softmax_lastdim(scores);
        maps.push_back(a);
        head_outs.push_back(matmul(a, vh));
    }
    Tensor out = concat_cols(head_outs);
    if (has_out_proj) out = out_proj.forward(out);
    return Result{out, std::move(maps)};
}

void MultiHeadAttention::register_params(ParamRegistry& reg, const std::string& prefix) const {
    for (int h = 0; h < n_heads; ++h) {
        const std::string hs = std::to_string(h);
        q[static_cast<size_t>(h)].register_params(reg, prefix + ".q" + hs);
        k[static_cast<size_t>(h)].register_params(reg, prefix + ".k" + hs);
        v[static_cast<size_t>(h)].register_params(reg, prefix + ".v" + hs);
    }
    if (has_out_proj) out_proj.register_params(reg, prefix + ".out");
}

}  // namespace druformer
