#include "druformer/gradsuite.hpp"

#include "druformer/matching.hpp"
#include "druformer/ops.hpp"

namespace druformer {

ModelConfig toy_model_config() {
    ModelConfig cfg;
    cfg.pe.image_h = 8;
    cfg.pe.image_w = 8;
    cfg.pe.downsample = 4;
    cfg.pe.d_s = 16;
    cfg.pe.d_d = 8;
    cfg.pe.n_queries = 3;
    cfg.pe.enc_layers = 1;
    cfg.pe.dec_layers = 1;
    cfg.pe.n_heads = 2;
    cfg.dru_layers = 1;
    cfg.dru_heads = 2;
    cfg.n_classes = 2;
    cfg.vocab_size = 4;
    return cfg;
}

GradCheckResult composite_pe_dru_gradcheck(uint64_t seed, int probes_per_leaf) {
    const ModelConfig cfg = toy_model_config();
    DruformerModel model = DruformerModel::init(cfg, seed);

    RngService rng(seed ^ 0xABCDULL);
    Tensor image = Tensor::zeros({3, cfg.pe.image_h, cfg.pe.image_w}, true);
    for (double& v : image.data()) v = rng.uniform(0.0, 1.0);
    const int intention = rng.uniform_int(cfg.vocab_size);
    const std::vector<BoxCxCyWh> gt = {{0.45, 0.55, 0.4, 0.3}};
    const LossWeights weights;

    // The assignment is recomputed per forward; at random init it is stable
    // under the probe size h, so the composite stays differentiable.
    auto fwd = [&]() {
        auto out = model.forward(image, intention);
        const int k = out.boxes.dim(0);
        Tensor boxes = slice_rows(out.boxes, 1, k);
        Tensor logits = slice_rows(out.logits, 1, k);
        Assignment assign = hungarian(match_cost(boxes, logits, gt, weights));
        return set_loss(boxes, logits, gt, assign, weights).total;
    };

    std::vector<Tensor> leaves = {image};
    ParamRegistry reg = model.build_registry();
    for (auto& p : reg.params()) leaves.push_back(p.tensor);

    GradCheckOptions opts;
    opts.probes_per_leaf = probes_per_leaf;
    opts.probe_seed = seed;
    return gradcheck(leaves, fwd, opts);
}

}  // namespace druformer
