#include "druformer/model.hpp"

#include <stdexcept>

#include "druformer/ops.hpp"

namespace druformer {

void ModelConfig::validate() const {
    pe.validate();
    if (pe.d_d % dru_heads != 0) {
        throw std::invalid_argument("ModelConfig: d_d must be divisible by dru_heads");
    }
    if (dru_layers < 1 || dru_layers > 6) {
        throw std::invalid_argument("ModelConfig: dru_layers must be in 1..6");
    }
    if (n_classes < 1 || vocab_size < 1) {
        throw std::invalid_argument("ModelConfig: class and vocab sizes must be >= 1");
    }
}

DruformerModel DruformerModel::init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    // One fixed draw order: ablation flags must not shift unrelated inits.
    RngService rng = RngService::for_stream(seed, 0x0D15EA5EULL);
    DruformerModel m;
    m.cfg = cfg;
    m.pe = PEModule::init(cfg.pe, rng);
    m.ie = IEModule::init(cfg.vocab_size, cfg.pe.d_d, rng);
    m.dru = DRUModule::init(cfg.pe.d_d, cfg.dru_heads, cfg.use_dru ? cfg.dru_layers : 0, rng);
    m.detect_head = DetectHead::init(cfg.pe.d_d, cfg.n_classes, rng);
    m.importance_head = ImportanceHead::init(cfg.pe.d_d, rng);
    return m;
}

DruformerModel::Output DruformerModel::forward(Tensor image, int intention_id) const {
    Output out;
    out.participant_tokens = pe.forward_tokens(std::move(image));
    Tensor intention = cfg.use_intention ? ie.embed(intention_id)
                                         : Tensor::zeros({1, cfg.pe.d_d});
    out.entity_set = dru.fuse_entities(intention, out.participant_tokens);
    if (cfg.use_dru) {
        auto dru_out = dru.forward(out.entity_set);
        out.y = dru_out.y;
        out.maps = std::move(dru_out.maps);
    } else {
        out.y = out.entity_set;
    }
    auto head = importance_head.forward(out.y);
    out.boxes = head.boxes;
    out.logits = head.logits;
    return out;
}

DruformerModel::DetectOutput DruformerModel::forward_detect(Tensor image) const {
    Tensor tokens = pe.forward_tokens(std::move(image));
    auto head = detect_head.forward(tokens);
    return DetectOutput{head.boxes, head.logits};
}

ParamRegistry DruformerModel::build_registry() const {
    ParamRegistry reg;
    pe.register_params(reg, "pe");
    ie.register_params(reg, "ie");
    dru.register_params(reg, "dru");
    detect_head.register_params(reg, "detect");
    importance_head.register_params(reg, "importance");
    return reg;
}

size_t DruformerModel::param_count() const {
    return build_registry().total_elements();
}

}  // namespace druformer
