#pragma once

#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "druformer/nn.hpp"

namespace druformer {

class UnknownIntentionError : public std::runtime_error {
public:
    explicit UnknownIntentionError(const std::string& text)
        : std::runtime_error("unknown intention: \"" + text + "\"") {}
};

// Closed direction vocabulary with a synonym table; free text is matched
// after lowercasing, trimming and collapsing separators.
struct IntentionVocab {
    std::vector<std::string> canonical;   // dense ids 0..V-1
    std::map<std::string, int> lookup;    // normalized text -> id

    static IntentionVocab builtin();
    static IntentionVocab from_json_file(const std::string& path);

    int size() const { return static_cast<int>(canonical.size()); }
    const std::string& name(int id) const;
    int parse(const std::string& text) const;  // throws UnknownIntentionError
    // Falls back to default_id with a logged warning instead of throwing.
    int parse_or_default(const std::string& text, int default_id, std::ostream* warn) const;
};

std::string normalize_intention_text(const std::string& text);

// Learned V x d_d embedding table standing in for a text encoder.
struct IEModule {
    Tensor table;

    static IEModule init(int vocab_size, int d_d, RngService& rng);
    Tensor embed(int id) const;  // [1 x d_d], participates in gradient flow
    void register_params(ParamRegistry& reg, const std::string& prefix) const;
};

}  // namespace druformer
