#pragma once

#include <string>

#include "druformer/matching.hpp"
#include "druformer/model.hpp"
#include "druformer/optimizer.hpp"

namespace druformer {

struct TrainConfig {
    int epochs = 60;
    int batch_size = 8;
    int checkpoint_every = 0;  // epochs; 0 = final only
};

struct RunConfig {
    uint64_t seed = 1;
    ModelConfig model;
    LossWeights loss;
    double no_object_weight = 0.1;
    AdamWConfig optim;
    TrainConfig train;
    std::string dataset;
    std::string intention_vocab;  // empty = builtin

    void validate() const;
    std::string to_json() const;      // canonical (sorted keys) dump
    std::string hash() const;         // FNV-1a over the canonical dump

    static RunConfig from_json(const std::string& text);
    static RunConfig from_file(const std::string& path);
};

std::string fnv1a_hex(const std::string& text);

}  // namespace druformer
