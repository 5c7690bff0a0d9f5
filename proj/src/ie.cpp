#include "druformer/ie.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "json.hpp"

namespace druformer {

std::string normalize_intention_text(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char raw : text) {
        char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (c == '-' || c == '_' || std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(c);
    }
    return out;
}

IntentionVocab IntentionVocab::builtin() {
    IntentionVocab v;
    v.canonical = {"go-straight", "turn-left", "turn-right", "stop"};
    const std::vector<std::pair<std::string, int>> synonyms = {
        {"straight", 0}, {"going straight", 0}, {"ahead", 0}, {"forward", 0},
        {"left", 1},     {"turning left", 1},
        {"right", 2},    {"turning right", 2},
        {"halt", 3},     {"brake", 3},
    };
    for (int i = 0; i < v.size(); ++i) v.lookup[normalize_intention_text(v.canonical[static_cast<size_t>(i)])] = i;
    for (const auto& [text, id] : synonyms) v.lookup[normalize_intention_text(text)] = id;
    return v;
}

IntentionVocab IntentionVocab::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("intention vocab: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    IntentionVocab v;
    for (const auto& name : j.at("canonical")) v.canonical.push_back(name.get<std::string>());
    if (v.canonical.empty()) throw std::runtime_error("intention vocab: empty canonical list");
    for (int i = 0; i < v.size(); ++i) v.lookup[normalize_intention_text(v.canonical[static_cast<size_t>(i)])] = i;
    if (j.contains("synonyms")) {
        for (const auto& [text, target] : j.at("synonyms").items()) {
            const std::string canon = target.get<std::string>();
            const auto it = std::find(v.canonical.begin(), v.canonical.end(), canon);
            if (it == v.canonical.end()) {
                throw std::runtime_error("intention vocab: synonym \"" + text +
                                         "\" maps to unknown intention \"" + canon + "\"");
            }
            v.lookup[normalize_intention_text(text)] =
                static_cast<int>(it - v.canonical.begin());
        }
    }
    return v;
}

const std::string& IntentionVocab::name(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("intention id out of range");
    return canonical[static_cast<size_t>(id)];
}

int IntentionVocab::parse(const std::string& text) const {
    const auto it = lookup.find(normalize_intention_text(text));
    if (it == lookup.end()) throw UnknownIntentionError(text);
    return it->second;
}

int IntentionVocab::parse_or_default(const std::string& text, int default_id,
                                     std::ostream* warn) const {
    const auto it = lookup.find(normalize_intention_text(text));
    if (it != lookup.end()) return it->second;
    if (warn) {
        *warn << "warning: unknown intention \"" << text << "\", using \"" << name(default_id)
              << "\"\n";
    }
    return default_id;
}

IEModule IEModule::init(int vocab_size, int d_d, RngService& rng) {
    IEModule ie;
    ie.table = xavier_init(vocab_size, d_d, {vocab_size, d_d}, rng);
    return ie;
}

Tensor IEModule::embed(int id) const {
    if (id < 0 || id >= table.dim(0)) throw std::out_of_range("IEModule::embed: id out of range");
    return select_rows(table, {id});
}

void IEModule::register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".table", table);
}

}  // namespace druformer
