#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "druformer/model.hpp"
#include "druformer/scenes.hpp"

namespace druformer {

struct BreakdownEntry {
    int n = 0;
    double miou = 0.0;
    double acc = 0.0;
};

struct EvalReport {
    int num_samples = 0;
    double miou = 0.0;
    double acc = 0.0;
    std::map<std::string, BreakdownEntry> per_class;   // gt important class or "none"
    std::map<std::string, BreakdownEntry> per_layout;
    std::string config_hash;

    std::string to_json() const;
};

// Test-time decision: the highest-importance-probability slot's box, or no
// prediction when every probability is below the threshold. Row 0 (the
// ego/intention token) never predicts.
struct InferenceDecision {
    std::optional<BoxCxCyWh> box;
    double probability = 0.0;
    int slot = -1;
};
InferenceDecision decide_prediction(const Tensor& boxes, const Tensor& logits,
                                    double threshold = 0.5, bool skip_first_row = true);

// Deterministic metrics over a scene list; scene fan-out across n_threads
// with id-ordered merging.
EvalReport evaluate_model(const DruformerModel& model, const Dataset& data,
                          const std::vector<size_t>& indices, const std::string& config_hash,
                          int n_threads = 1);

// DRUFORMER_THREADS, default 1.
int eval_threads_from_env();

// Detection-stage mIoU: Hungarian-matched prediction IoU per participant,
// averaged over all ground-truth participants.
double detection_miou(const DruformerModel& model, const Dataset& data,
                      const std::vector<size_t>& indices, const LossWeights& weights,
                      int n_threads = 1);

// Fig-5-style export: (top_k+1)-entity DRU/location/semantic maps as CSV and
// PGM, row/col 0 = ego. Returns the written file paths.
std::vector<std::string> export_relmaps(const DruformerModel& model, const SceneSpec& spec,
                                        Tensor image, int top_k, const std::string& out_dir,
                                        const std::string& config_hash);

// Burns a 2px box outline into a copy of the raster.
void draw_box_outline(Tensor& image, const BoxCxCyWh& box, double r, double g, double b);

}  // namespace druformer
