#pragma once

#include <vector>

#include "druformer/nn.hpp"

namespace druformer {

struct PEConfig {
    int image_h = 128;
    int image_w = 128;
    int downsample = 16;  // power of two; one stride-2 conv stage per factor of 2
    int d_s = 128;        // backbone output channels
    int d_d = 64;         // token dimension
    int n_queries = 16;   // N
    int enc_layers = 3;
    int dec_layers = 3;
    int n_heads = 8;

    void validate() const;
    int h_s() const { return image_h / downsample; }
    int w_s() const { return image_w / downsample; }
    int seq_len() const { return h_s() * w_s(); }
};

// Stride-2 conv stages (pad 1, kernel 3) halving the spatial dims each
// stage; channels 16 -> 32 -> ... -> d_s.
struct Backbone {
    std::vector<Tensor> kernels;
    std::vector<Tensor> biases;

    static Backbone init(const PEConfig& cfg, RngService& rng);
    Tensor forward(Tensor image) const;
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

// Deterministic 2D sine/cosine grid encoding, values in [-1, 1].
// d_d must be divisible by 4 (sin/cos pairs for each of y and x).
Tensor sine_posenc(int h_s, int w_s, int d_d);

struct EncoderLayer {
    MultiHeadAttention mha;
    Ffn ffn;
    LayerNormParams ln1, ln2;

    static EncoderLayer init(int d_d, int n_heads, int ffn_hidden, RngService& rng);
    struct Result {
        Tensor output;
        std::vector<Tensor> maps;
    };
    Result forward(Tensor x) const;
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

struct DecoderLayer {
    MultiHeadAttention self_attn;
    MultiHeadAttention cross_attn;
    Ffn ffn;
    LayerNormParams ln1, ln2, ln3;

    static DecoderLayer init(int d_d, int n_heads, int ffn_hidden, RngService& rng);
    Tensor forward(Tensor queries, Tensor memory) const;
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

// Three linear layers with ReLU between; used by the box heads.
struct Mlp3 {
    Linear l1, l2, l3;

    static Mlp3 init(int in, int hidden, int out, RngService& rng);
    Tensor forward(Tensor x) const { return l3.forward(relu(l2.forward(relu(l1.forward(x))))); }
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

// Box + class prediction over participant tokens; pretraining only.
struct DetectHead {
    Mlp3 box_mlp;
    Linear cls;

    static DetectHead init(int d_d, int n_classes, RngService& rng);
    struct Output {
        Tensor boxes;   // [N x 4] cxcywh in (0,1)
        Tensor logits;  // [N x (n_classes+1)]
    };
    Output forward(Tensor tokens) const;
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

// Participants Extractor: backbone -> flatten/embed -> encoder -> decoder.
struct PEModule {
    PEConfig cfg;
    Backbone backbone;
    Linear input_proj;  // d_s -> d_d channel projection after flattening
    Tensor queries;     // [N x d_d] learned
    Tensor query_pos;   // [N x d_d] learned positional embeddings
    Tensor pos;         // sine encoding, fixed (no grad)
    std::vector<EncoderLayer> enc;
    std::vector<DecoderLayer> dec;

    static PEModule init(const PEConfig& cfg, RngService& rng);

    Tensor backbone_forward(Tensor image) const { return backbone.forward(std::move(image)); }
    Tensor flatten_embed(Tensor z) const;
    Tensor encode(Tensor f, Tensor p) const;
    Tensor decode(Tensor q, Tensor p_p, Tensor s) const;
    // image -> participant tokens O, the full Eq. 1-3 pipeline.
    Tensor forward_tokens(Tensor image) const;

    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

}  // namespace druformer
