#pragma once

#include <functional>
#include <string>
#include <vector>

#include "druformer/tensor.hpp"

namespace druformer {

struct GradCheckResult {
    bool pass = false;
    double max_rel_err = 0.0;
    std::string worst_site;  // "<leaf index>[<element>]" of the worst element
};

struct GradCheckOptions {
    double h = 1e-5;
    double tol = 1e-4;
    // When >= 0, check only this many randomly chosen elements per leaf.
    int probes_per_leaf = -1;
    uint64_t probe_seed = 0;
};

// Central finite-difference check of d(forward())/d(leaf) against the tape
// gradients. `forward` must rebuild the graph from the leaves' current data
// and return a scalar; the numeric side never touches backward rules, so it
// is an independent oracle for them.
GradCheckResult gradcheck(const std::vector<Tensor>& leaves,
                          const std::function<Tensor()>& forward,
                          const GradCheckOptions& opts = {});

// One named gradcheck per differentiable op, randomized by seed. Inputs are
// kept away from relu/abs/min/max kinks so the finite differences converge.
struct OpCheck {
    std::string name;
    std::function<GradCheckResult(uint64_t seed)> run;
};

std::vector<OpCheck> builtin_op_checks();

}  // namespace druformer
