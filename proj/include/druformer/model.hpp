#pragma once

#include <string>

#include "druformer/dru.hpp"
#include "druformer/ie.hpp"
#include "druformer/matching.hpp"
#include "druformer/pe.hpp"

namespace druformer {

struct ModelConfig {
    PEConfig pe;
    int dru_layers = 3;
    int dru_heads = 8;
    bool use_intention = true;
    bool use_dru = true;
    int n_classes = 4;   // detection class registry (synthetic scenes)
    int vocab_size = 4;  // intention vocabulary

    void validate() const;
    int k() const { return pe.n_queries + 1; }
};

// Full pipeline: PE tokens + intention embedding fused through the DRU into
// per-slot importance boxes and logits. The detection head is kept in the
// parameter set so pretraining weights travel inside full checkpoints.
struct DruformerModel {
    ModelConfig cfg;
    PEModule pe;
    IEModule ie;
    DRUModule dru;  // carries the fuse norm and ego token even when use_dru is off
    DetectHead detect_head;
    ImportanceHead importance_head;

    static DruformerModel init(const ModelConfig& cfg, uint64_t seed);

    struct Output {
        Tensor participant_tokens;              // O: [N x d_d]
        Tensor entity_set;                      // M: [k x d_d]
        Tensor y;                               // [k x d_d]
        Tensor boxes;                           // [k x 4]
        Tensor logits;                          // [k x 2]
        std::vector<std::vector<Tensor>> maps;  // L x H of [k x k]
    };
    Output forward(Tensor image, int intention_id) const;

    struct DetectOutput {
        Tensor boxes;   // [N x 4]
        Tensor logits;  // [N x (n_classes+1)]
    };
    DetectOutput forward_detect(Tensor image) const;

    // Deterministic parameter order; defines optimizer state and checkpoints.
    ParamRegistry build_registry() const;
    size_t param_count() const;
};

}  // namespace druformer
