#pragma once

#include <functional>
#include <optional>
#include <string>

#include "druformer/checkpoint.hpp"
#include "druformer/config.hpp"
#include "druformer/scenes.hpp"

namespace druformer {

// Non-finite loss or activations; the CLI maps this to exit code 2.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

struct TrainResult {
    std::string checkpoint_path;
    double final_loss = 0.0;
    long steps = 0;
    // Attention invariants observed during training (criterion material).
    double max_rowsum_deviation = 0.0;
    bool entity_rows_bitequal = true;
    double best_val_miou = -1.0;
    double best_val_acc = -1.0;
};

struct TrainHooks {
    // Called after each optimizer step with the batch-mean components.
    std::function<void(long step, double l_b, double l_giou, double l_c, double total)> on_step;
    std::function<void(int epoch, double mean_loss)> on_epoch;
};

// Stage 1: PE + detection head as a plain detector over all participants.
TrainResult pretrain_pe(const RunConfig& cfg, const Dataset& data, const std::string& out_dir,
                        const std::string& resume_from = "", const TrainHooks& hooks = {});

// Stage 2: end-to-end importance training (PE fine-tuned, detect head
// frozen). pe_checkpoint may be empty for from-scratch training.
TrainResult train_full(const RunConfig& cfg, const Dataset& data, const std::string& out_dir,
                       const std::string& pe_checkpoint = "",
                       const std::string& resume_from = "", const TrainHooks& hooks = {});

// Model-section-only and PE-section-only hashes for compatibility checks.
std::string model_hash(const RunConfig& cfg);
std::string pe_hash(const RunConfig& cfg);

// Restores a full-training checkpoint into a freshly built model.
struct LoadedModel {
    RunConfig cfg;
    DruformerModel model;
    std::string stage;
    std::string config_hash;
};
LoadedModel load_model_checkpoint(const std::string& path);

}  // namespace druformer
