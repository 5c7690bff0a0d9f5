#include "druformer/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace druformer {

void adamw_update(std::vector<double>& param, const std::vector<double>& grad,
                  std::vector<double>& m, std::vector<double>& v, long t,
                  const AdamWConfig& cfg) {
    if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
        throw std::invalid_argument("adamw_update: shape mismatch");
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (size_t i = 0; i < param.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        param[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * param[i]);
    }
}

AdamW::AdamW(ParamRegistry& registry, AdamWConfig cfg) : registry_(registry), cfg_(cfg) {
    for (auto& p : registry_.params()) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void AdamW::step() {
    ++t_;
    auto& params = registry_.params();
    for (size_t i = 0; i < params.size(); ++i) {
        adamw_update(params[i].tensor.data(), params[i].tensor.grad(), m_[i], v_[i], t_, cfg_);
    }
}

}  // namespace druformer
