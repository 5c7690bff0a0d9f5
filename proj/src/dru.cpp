#include "druformer/dru.hpp"

#include <cmath>
#include <stdexcept>

#include "druformer/ops.hpp"

namespace druformer {

DruLayer DruLayer::init(int d_d, int n_heads, int ffn_hidden, RngService& rng) {
    DruLayer l;
    l.mha = MultiHeadAttention::init(d_d, n_heads, false, rng);
    l.ffn = Ffn::init(d_d, ffn_hidden, d_d, rng);
    l.ln1 = LayerNormParams::init(d_d);
    l.ln2 = LayerNormParams::init(d_d);
    return l;
}

DruLayer::Result DruLayer::forward(Tensor m_in) const {
    auto attn = mha.forward(m_in, m_in);
    Tensor a = ln1.forward(add(m_in, attn.output));
    Tensor out = ln2.forward(add(a, ffn.forward(a)));
    return Result{out, std::move(attn.maps)};
}

void DruLayer::register_params(ParamRegistry& reg, const std::string& prefix) const {
    mha.register_params(reg, prefix + ".mha");
    ffn.register_params(reg, prefix + ".ffn");
    ln1.register_params(reg, prefix + ".ln1");
    ln2.register_params(reg, prefix + ".ln2");
}

DRUModule DRUModule::init(int d_d, int n_heads, int n_layers, RngService& rng) {
    if (n_layers < 0) throw std::invalid_argument("DRUModule: n_layers must be >= 0");
    DRUModule dru;
    dru.ego = xavier_init(1, d_d, {1, d_d}, rng);
    dru.fuse_ln = LayerNormParams::init(d_d);
    for (int i = 0; i < n_layers; ++i)
        dru.layers.push_back(DruLayer::init(d_d, n_heads, 4 * d_d, rng));
    return dru;
}

Tensor DRUModule::fuse_entities(Tensor intention, Tensor participants) const {
    if (intention.ndim() != 2 || intention.dim(0) != 1 || intention.dim(1) != ego.dim(1)) {
        throw std::invalid_argument("fuse_entities: intention must be [1 x d_d]");
    }
    if (participants.ndim() != 2 || participants.dim(1) != ego.dim(1)) {
        throw std::invalid_argument("fuse_entities: participants must be [N x d_d]");
    }
    Tensor fused = fuse_ln.forward(add(std::move(intention), ego));
    return concat_rows(fused, std::move(participants));
}

DRUModule::Result DRUModule::forward(Tensor entity_set) const {
    Result res;
    Tensor x = std::move(entity_set);
    for (const auto& layer : layers) {
        auto out = layer.forward(x);
        x = out.output;
        res.maps.push_back(std::move(out.maps));
    }
    res.y = x;
    return res;
}

void DRUModule::register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".ego", ego);
    fuse_ln.register_params(reg, prefix + ".fuse_ln");
    for (size_t i = 0; i < layers.size(); ++i)
        layers[i].register_params(reg, prefix + ".layer" + std::to_string(i));
}

ImportanceHead ImportanceHead::init(int d_d, RngService& rng) {
    ImportanceHead h;
    h.box_mlp = Mlp3::init(d_d, d_d, 4, rng);
    h.cls = Linear::init(d_d, 2, rng);
    return h;
}

ImportanceHead::Output ImportanceHead::forward(Tensor y) const {
    return Output{sigmoid(box_mlp.forward(y)), cls.forward(y)};
}

void ImportanceHead::register_params(ParamRegistry& reg, const std::string& prefix) const {
    box_mlp.register_params(reg, prefix + ".box");
    cls.register_params(reg, prefix + ".cls");
}

RelMap cosine_relmap(const Tensor& y) {
    if (y.ndim() != 2) throw std::invalid_argument("cosine_relmap: expects [k x d]");
    const int k = y.dim(0), d = y.dim(1);
    std::vector<double> norms(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
            const double v = y.data()[static_cast<size_t>(i) * d + j];
            s += v * v;
        }
        norms[static_cast<size_t>(i)] = std::max(std::sqrt(s), 1e-12);
    }
    RelMap m;
    m.n = k;
    m.v.assign(static_cast<size_t>(k) * k, 0.0);
    for (int i = 0; i < k; ++i) {
        m.at(i, i) = 1.0;
        for (int j = i + 1; j < k; ++j) {
            double dot = 0.0;
            for (int c = 0; c < d; ++c) {
                dot += y.data()[static_cast<size_t>(i) * d + c] *
                       y.data()[static_cast<size_t>(j) * d + c];
            }
            const double cos = dot / (norms[static_cast<size_t>(i)] * norms[static_cast<size_t>(j)]);
            m.at(i, j) = cos;
            m.at(j, i) = cos;
        }
    }
    return m;
}

RelMap location_relmap(std::vector<BoxCxCyWh> boxes, double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("location_relmap: sigma must be positive");
    if (boxes.empty()) throw std::invalid_argument("location_relmap: no boxes");
    boxes[0] = kEgoAnchorBox;
    const int k = static_cast<int>(boxes.size());
    RelMap m;
    m.n = k;
    m.v.assign(static_cast<size_t>(k) * k, 0.0);
    for (int i = 0; i < k; ++i) {
        m.at(i, i) = 1.0;
        for (int j = i + 1; j < k; ++j) {
            const double dx = boxes[static_cast<size_t>(i)].cx - boxes[static_cast<size_t>(j)].cx;
            const double dy = boxes[static_cast<size_t>(i)].cy - boxes[static_cast<size_t>(j)].cy;
            const double w = std::exp(-std::sqrt(dx * dx + dy * dy) / sigma);
            m.at(i, j) = w;
            m.at(j, i) = w;
        }
    }
    return m;
}

RelMap semantic_relmap(std::vector<std::string> classes) {
    if (classes.empty()) throw std::invalid_argument("semantic_relmap: no classes");
    classes[0] = "ego";
    const int k = static_cast<int>(classes.size());
    RelMap m;
    m.n = k;
    m.v.assign(static_cast<size_t>(k) * k, 0.0);
    for (int i = 0; i < k; ++i) {
        m.at(i, i) = 1.0;
        for (int j = i + 1; j < k; ++j) {
            const double same = classes[static_cast<size_t>(i)] == classes[static_cast<size_t>(j)] ? 1.0 : 0.0;
            m.at(i, j) = same;
            m.at(j, i) = same;
        }
    }
    return m;
}

}  // namespace druformer
