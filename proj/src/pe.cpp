#include "druformer/pe.hpp"

#include <cmath>
#include <stdexcept>

namespace druformer {

void PEConfig::validate() const {
    if (d_d % n_heads != 0) throw std::invalid_argument("PEConfig: d_d must be divisible by n_heads");
    if (downsample < 2 || (downsample & (downsample - 1)) != 0) {
        throw std::invalid_argument("PEConfig: downsample must be a power of two >= 2");
    }
    if (image_h % downsample != 0 || image_w % downsample != 0) {
        throw std::invalid_argument("PEConfig: image dims must be divisible by downsample");
    }
    if (d_d >= d_s) throw std::invalid_argument("PEConfig: d_d must be smaller than d_s");
    if (d_d % 4 != 0) throw std::invalid_argument("PEConfig: d_d must be divisible by 4 for posenc");
    if (n_queries < 1 || enc_layers < 1 || dec_layers < 1) {
        throw std::invalid_argument("PEConfig: layer and query counts must be >= 1");
    }
}

Backbone Backbone::init(const PEConfig& cfg, RngService& rng) {
    cfg.validate();
    int n_stages = 0;
    for (int d = cfg.downsample; d > 1; d /= 2) ++n_stages;
    Backbone bb;
    int in_ch = 3;
    for (int s = 0; s < n_stages; ++s) {
        const int out_ch = (s == n_stages - 1) ? cfg.d_s : 16 << s;
        const int fan_in = in_ch * 9;
        const int fan_out = out_ch * 9;
        bb.kernels.push_back(xavier_init(fan_in, fan_out, {out_ch, in_ch, 3, 3}, rng));
        bb.biases.push_back(Tensor::zeros({out_ch}, true));
        in_ch = out_ch;
    }
    return bb;
}

Tensor Backbone::forward(Tensor image) const {
    Tensor x = std::move(image);
    for (size_t s = 0; s < kernels.size(); ++s) {
        x = relu(add_chan(conv2d(pad2d(x, 1), kernels[s], 2), biases[s]));
    }
    return x;
}

void Backbone::register_params(ParamRegistry& reg, const std::string& prefix) const {
    for (size_t s = 0; s < kernels.size(); ++s) {
        reg.add(prefix + ".stage" + std::to_string(s) + ".kernel", kernels[s]);
        reg.add(prefix + ".stage" + std::to_string(s) + ".bias", biases[s]);
    }
}

Tensor sine_posenc(int h_s, int w_s, int d_d) {
    if (d_d % 4 != 0) throw std::invalid_argument("sine_posenc: d_d must be divisible by 4");
    const int quarter = d_d / 4;
    Tensor pe = Tensor::zeros({h_s * w_s, d_d});
    auto& data = pe.data();
    for (int y = 0; y < h_s; ++y) {
        for (int x = 0; x < w_s; ++x) {
            double* row = data.data() + (static_cast<size_t>(y) * w_s + x) * d_d;
            for (int t = 0; t < quarter; ++t) {
                const double freq = std::pow(10000.0, 2.0 * t / (d_d / 2.0));
                row[2 * t] = std::sin(y / freq);
                row[2 * t + 1] = std::cos(y / freq);
                row[d_d / 2 + 2 * t] = std::sin(x / freq);
                row[d_d / 2 + 2 * t + 1] = std::cos(x / freq);
            }
        }
    }
    return pe;
}

EncoderLayer EncoderLayer::init(int d_d, int n_heads, int ffn_hidden, RngService& rng) {
    EncoderLayer l;
    l.mha = MultiHeadAttention::init(d_d, n_heads, true, rng);
    l.ffn = Ffn::init(d_d, ffn_hidden, d_d, rng);
    l.ln1 = LayerNormParams::init(d_d);
    l.ln2 = LayerNormParams::init(d_d);
    return l;
}

EncoderLayer::Result EncoderLayer::forward(Tensor x) const {
    auto attn = mha.forward(x, x);
    Tensor a = ln1.forward(add(x, attn.output));
    Tensor out = ln2.forward(add(a, ffn.forward(a)));
    return Result{out, std::move(attn.maps)};
}

void EncoderLayer::register_params(ParamRegistry& reg, const std::string& prefix) const {
    mha.register_params(reg, prefix + ".mha");
    ffn.register_params(reg, prefix + ".ffn");
    ln1.register_params(reg, prefix + ".ln1");
    ln2.register_params(reg, prefix + ".ln2");
}

DecoderLayer DecoderLayer::init(int d_d, int n_heads, int ffn_hidden, RngService& rng) {
    DecoderLayer l;
    l.self_attn = MultiHeadAttention::init(d_d, n_heads, true, rng);
    l.cross_attn = MultiHeadAttention::init(d_d, n_heads, true, rng);
    l.ffn = Ffn::init(d_d, ffn_hidden, d_d, rng);
    l.ln1 = LayerNormParams::init(d_d);
    l.ln2 = LayerNormParams::init(d_d);
    l.ln3 = LayerNormParams::init(d_d);
    return l;
}

Tensor DecoderLayer::forward(Tensor queries, Tensor memory) const {
    Tensor a = ln1.forward(add(queries, self_attn.forward(queries, queries).output));
    Tensor b = ln2.forward(add(a, cross_attn.forward(a, memory).output));
    return ln3.forward(add(b, ffn.forward(b)));
}

void DecoderLayer::register_params(ParamRegistry& reg, const std::string& prefix) const {
    self_attn.register_params(reg, prefix + ".self");
    cross_attn.register_params(reg, prefix + ".cross");
    ffn.register_params(reg, prefix + ".ffn");
    ln1.register_params(reg, prefix + ".ln1");
    ln2.register_params(reg, prefix + ".ln2");
    ln3.register_params(reg, prefix + ".ln3");
}

Mlp3 Mlp3::init(int in, int hidden, int out, RngService& rng) {
    Mlp3 m;
    m.l1 = Linear::init(in, hidden, rng);
    m.l2 = Linear::init(hidden, hidden, rng);
    m.l3 = Linear::init(hidden, out, rng);
    return m;
}

void Mlp3::register_params(ParamRegistry& reg, const std::string& prefix) const {
    l1.register_params(reg, prefix + ".l1");
    l2.register_params(reg, prefix + ".l2");
    l3.register_params(reg, prefix + ".l3");
}

DetectHead DetectHead::init(int d_d, int n_classes, RngService& rng) {
    DetectHead h;
    h.box_mlp = Mlp3::init(d_d, d_d, 4, rng);
    h.cls = Linear::init(d_d, n_classes + 1, rng);
    return h;
}

DetectHead::Output DetectHead::forward(Tensor tokens) const {
    return Output{sigmoid(box_mlp.forward(tokens)), cls.forward(tokens)};
}

void DetectHead::register_params(ParamRegistry& reg, const std::string& prefix) const {
    box_mlp.register_params(reg, prefix + ".box");
    cls.register_params(reg, prefix + ".cls");
}

PEModule PEModule::init(const PEConfig& cfg, RngService& rng) {
    cfg.validate();
    PEModule pe;
    pe.cfg = cfg;
    pe.backbone = Backbone::init(cfg, rng);
    pe.input_proj = Linear::init(cfg.d_s, cfg.d_d, rng);
    pe.queries = xavier_init(cfg.n_queries, cfg.d_d, {cfg.n_queries, cfg.d_d}, rng);
    pe.query_pos = xavier_init(cfg.n_queries, cfg.d_d, {cfg.n_queries, cfg.d_d}, rng);
    pe.pos = sine_posenc(cfg.h_s(), cfg.w_s(), cfg.d_d);
    const int ffn_hidden = 4 * cfg.d_d;
    for (int i = 0; i < cfg.enc_layers; ++i)
        pe.enc.push_back(EncoderLayer::init(cfg.d_d, cfg.n_heads, ffn_hidden, rng));
    for (int i = 0; i < cfg.dec_layers; ++i)
        pe.dec.push_back(DecoderLayer::init(cfg.d_d, cfg.n_heads, ffn_hidden, rng));
    return pe;
}

Tensor PEModule::flatten_embed(Tensor z) const {
    return input_proj.forward(flatten_spatial(std::move(z)));
}

Tensor PEModule::encode(Tensor f, Tensor p) const {
    Tensor x = add(std::move(f), std::move(p));
    for (const auto& layer : enc) x = layer.forward(x).output;
    return x;
}

Tensor PEModule::decode(Tensor q, Tensor p_p, Tensor s) const {
    Tensor x = add(std::move(q), std::move(p_p));
    for (const auto& layer : dec) x = layer.forward(x, s);
    return x;
}

Tensor PEModule::forward_tokens(Tensor image) const {
    Tensor z = backbone.forward(std::move(image));
    Tensor f = flatten_embed(z);
    Tensor s = encode(f, pos);
    return decode(queries, query_pos, s);
}

void PEModule::register_params(ParamRegistry& reg, const std::string& prefix) const {
    backbone.register_params(reg, prefix + ".backbone");
    input_proj.register_params(reg, prefix + ".proj");
    reg.add(prefix + ".queries", queries);
    reg.add(prefix + ".query_pos", query_pos);
    for (size_t i = 0; i < enc.size(); ++i)
        enc[i].register_params(reg, prefix + ".enc" + std::to_string(i));
    for (size_t i = 0; i < dec.size(); ++i)
        dec[i].register_params(reg, prefix + ".dec" + std::to_string(i));
}

}  // namespace druformer
