#pragma once

#include <string>
#include <vector>

#include "druformer/ops.hpp"
#include "druformer/tensor.hpp"

namespace druformer {

struct Param {
    std::string name;
    Tensor tensor;
};

// Deterministically ordered list of trainable tensors; the registration
// order defines optimizer-state and checkpoint layout.
class ParamRegistry {
public:
    void add(const std::string& name, Tensor t);
    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }
    size_t total_elements() const;
    void zero_grad();
    const Tensor* find(const std::string& name) const;

private:
    std::vector<Param> params_;
};

// Xavier-uniform weight init, zero bias.
Tensor xavier_init(int fan_in, int fan_out, std::vector<int> shape, RngService& rng);

struct Linear {
    Tensor W;  // [in x out]
    Tensor b;  // [out]

    static Linear init(int in, int out, RngService& rng);
    Tensor forward(const Tensor& x) const { return add_rowvec(matmul(x, W), b); }
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

// affine -> ReLU -> affine
struct Ffn {
    Linear fc1, fc2;

    static Ffn init(int in, int hidden, int out, RngService& rng);
    Tensor forward(const Tensor& x) const { return fc2.forward(relu(fc1.forward(x))); }
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

struct LayerNormParams {
    Tensor gamma, beta;
    double eps = 1e-5;

    static LayerNormParams init(int d, double eps = 1e-5);
    Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

// Multi-head attention where head h reads the h-th d_head-wide subspace of
// its inputs and applies per-head q/k/v maps. The encoder/decoder variant
// adds an output projection; the DRU variant feeds the raw concatenation to
// its FFN instead and exposes the per-head attention maps.
struct MultiHeadAttention {
    int n_heads = 0;
    int d_model = 0;
    int d_head = 0;
    std::vector<Linear> q, k, v;
    bool has_out_proj = false;
    Linear out_proj;

    static MultiHeadAttention init(int d_model, int n_heads, bool with_out_proj, RngService& rng);

    struct Result {
        Tensor output;                // [rq x d_model]
        std::vector<Tensor> maps;     // n_heads of [rq x rm], row-stochastic
    };
    Result forward(const Tensor& query, const Tensor& memory) const;
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

}  // namespace druformer
