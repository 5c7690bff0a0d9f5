#pragma once

#include <vector>

#include "druformer/nn.hpp"

namespace druformer {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

// One decoupled-weight-decay adaptive update on a single flat buffer.
// t is the 1-based step count already incremented for this update.
void adamw_update(std::vector<double>& param, const std::vector<double>& grad,
                  std::vector<double>& m, std::vector<double>& v, long t,
                  const AdamWConfig& cfg);

class AdamW {
public:
    AdamW(ParamRegistry& registry, AdamWConfig cfg);

    void step();
    long step_count() const { return t_; }

    // Exposed for checkpointing; layout parallels the registry order.
    std::vector<std::vector<double>>& moment1() { return m_; }
    std::vector<std::vector<double>>& moment2() { return v_; }
    void set_step_count(long t) { t_ = t; }

private:
    ParamRegistry& registry_;
    AdamWConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

}  // namespace druformer
