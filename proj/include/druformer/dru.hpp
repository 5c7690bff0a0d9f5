#pragma once

#include <string>
#include <vector>

#include "druformer/geometry.hpp"
#include "druformer/nn.hpp"
#include "druformer/pe.hpp"

namespace druformer {

// One relationship-attention block: per-head maps over the entity set,
// residual + norm around both the attention and the FFN.
struct DruLayer {
    MultiHeadAttention mha;  // no output projection; the FFN follows the concat
    Ffn ffn;
    LayerNormParams ln1, ln2;

    static DruLayer init(int d_d, int n_heads, int ffn_hidden, RngService& rng);
    struct Result {
        Tensor output;             // [k x d_d]
        std::vector<Tensor> maps;  // H of [k x k], row-stochastic
    };
    Result forward(Tensor m_in) const;
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

// Driving Relationship self-Understanding: ego/intention fusion and L
// relationship layers exposing their attention maps.
struct DRUModule {
    Tensor ego;               // [1 x d_d] learned ego-vehicle token
    LayerNormParams fuse_ln;  // the norm of norm(C + e)
    std::vector<DruLayer> layers;

    static DRUModule init(int d_d, int n_heads, int n_layers, RngService& rng);

    // M = norm(C + e) concatenated over O; rows 1..N bit-equal O.
    Tensor fuse_entities(Tensor intention, Tensor participants) const;

    struct Result {
        Tensor y;                                // [k x d_d]
        std::vector<std::vector<Tensor>> maps;   // L x H of [k x k]
    };
    Result forward(Tensor entity_set) const;

    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

// Importance prediction over the understood entity set.
struct ImportanceHead {
    Mlp3 box_mlp;
    Linear cls;

    static ImportanceHead init(int d_d, RngService& rng);
    struct Output {
        Tensor boxes;   // [k x 4] cxcywh in (0,1)
        Tensor logits;  // [k x 2] {important, no-object}
    };
    Output forward(Tensor y) const;
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

// Square relationship map with row/col 0 reserved for the ego-vehicle.
struct RelMap {
    int n = 0;
    std::vector<double> v;

    double& at(int i, int j) { return v[static_cast<size_t>(i) * n + j]; }
    double at(int i, int j) const { return v[static_cast<size_t>(i) * n + j]; }
};

// Pairwise cosine similarity of the rows of Y; diagonal 1, zero rows guarded.
RelMap cosine_relmap(const Tensor& y);

// exp(-||center_i - center_j|| / sigma); row 0 uses the fixed ego anchor box.
inline constexpr BoxCxCyWh kEgoAnchorBox{0.5, 0.95, 0.2, 0.1};
RelMap location_relmap(std::vector<BoxCxCyWh> boxes, double sigma);

// Same-class indicator; row 0 is the ego class.
RelMap semantic_relmap(std::vector<std::string> classes);

}  // namespace druformer
