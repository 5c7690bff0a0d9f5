#pragma once

#include "druformer/gradcheck.hpp"
#include "druformer/model.hpp"

namespace druformer {

// Small config exercising every architectural piece on an 8x8 input.
ModelConfig toy_model_config();

// Finite-difference check of one full image -> PE -> DRU -> set-loss step
// against the tape gradients, probing a random parameter subset per leaf.
GradCheckResult composite_pe_dru_gradcheck(uint64_t seed, int probes_per_leaf = 2);

}  // namespace druformer
