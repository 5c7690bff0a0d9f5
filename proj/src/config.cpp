#include "druformer/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace druformer {

using nlohmann::json;

std::string fnv1a_hex(const std::string& text) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : text) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void RunConfig::validate() const {
    model.validate();
    if (train.epochs < 1 || train.batch_size < 1) {
        throw std::invalid_argument("RunConfig: epochs and batch_size must be >= 1");
    }
    if (optim.lr <= 0.0) throw std::invalid_argument("RunConfig: lr must be positive");
    if (loss.lambda_b < 0 || loss.lambda_giou < 0 || loss.lambda_c < 0 ||
        (loss.lambda_b == 0 && loss.lambda_giou == 0 && loss.lambda_c == 0)) {
        throw std::invalid_argument("RunConfig: loss weights must be nonnegative, not all zero");
    }
    if (no_object_weight <= 0.0) {
        throw std::invalid_argument("RunConfig: no_object_weight must be positive");
    }
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) {
            throw std::invalid_argument("config: unknown key \"" + key + "\" in " + where);
        }
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["model"] = {{"image_h", model.pe.image_h},
                  {"image_w", model.pe.image_w},
                  {"downsample", model.pe.downsample},
                  {"d_s", model.pe.d_s},
                  {"d_d", model.pe.d_d},
                  {"n_queries", model.pe.n_queries},
                  {"enc_layers", model.pe.enc_layers},
                  {"dec_layers", model.pe.dec_layers},
                  {"n_heads", model.pe.n_heads},
                  {"dru_layers", model.dru_layers},
                  {"dru_heads", model.dru_heads},
                  {"use_intention", model.use_intention},
                  {"use_dru", model.use_dru},
                  {"n_classes", model.n_classes},
                  {"vocab_size", model.vocab_size}};
    j["loss"] = {{"lambda_b", loss.lambda_b},
                 {"lambda_giou", loss.lambda_giou},
                 {"lambda_c", loss.lambda_c},
                 {"no_object_weight", no_object_weight}};
    j["optim"] = {{"lr", optim.lr},
                  {"weight_decay", optim.weight_decay},
                  {"beta1", optim.beta1},
                  {"beta2", optim.beta2},
                  {"eps", optim.eps}};
    j["train"] = {{"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"checkpoint_every", train.checkpoint_every}};
    j["data"] = {{"dataset", dataset}, {"intention_vocab", intention_vocab}};
    return j.dump();  // nlohmann objects iterate in sorted key order
}

std::string RunConfig::hash() const { return fnv1a_hex(to_json()); }

RunConfig RunConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    reject_unknown(j, {"seed", "model", "loss", "optim", "train", "data"}, "top level");
    RunConfig c;
    maybe(j, "seed", c.seed);
    if (j.contains("model")) {
        const json& m = j.at("model");
        reject_unknown(m,
                       {"image_h", "image_w", "downsample", "d_s", "d_d", "n_queries",
                        "enc_layers", "dec_layers", "n_heads", "dru_layers", "dru_heads",
                        "use_intention", "use_dru", "n_classes", "vocab_size"},
                       "model");
        maybe(m, "image_h", c.model.pe.image_h);
        maybe(m, "image_w", c.model.pe.image_w);
        maybe(m, "downsample", c.model.pe.downsample);
        maybe(m, "d_s", c.model.pe.d_s);
        maybe(m, "d_d", c.model.pe.d_d);
        maybe(m, "n_queries", c.model.pe.n_queries);
        maybe(m, "enc_layers", c.model.pe.enc_layers);
        maybe(m, "dec_layers", c.model.pe.dec_layers);
        maybe(m, "n_heads", c.model.pe.n_heads);
        maybe(m, "dru_layers", c.model.dru_layers);
        maybe(m, "dru_heads", c.model.dru_heads);
        maybe(m, "use_intention", c.model.use_intention);
        maybe(m, "use_dru", c.model.use_dru);
        maybe(m, "n_classes", c.model.n_classes);
        maybe(m, "vocab_size", c.model.vocab_size);
    }
    if (j.contains("loss")) {
        const json& l = j.at("loss");
        reject_unknown(l, {"lambda_b", "lambda_giou", "lambda_c", "no_object_weight"}, "loss");
        maybe(l, "lambda_b", c.loss.lambda_b);
        maybe(l, "lambda_giou", c.loss.lambda_giou);
        maybe(l, "lambda_c", c.loss.lambda_c);
        maybe(l, "no_object_weight", c.no_object_weight);
    }
    if (j.contains("optim")) {
        const json& o = j.at("optim");
        reject_unknown(o, {"lr", "weight_decay", "beta1", "beta2", "eps"}, "optim");
        maybe(o, "lr", c.optim.lr);
        maybe(o, "weight_decay", c.optim.weight_decay);
        maybe(o, "beta1", c.optim.beta1);
        maybe(o, "beta2", c.optim.beta2);
        maybe(o, "eps", c.optim.eps);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown(t, {"epochs", "batch_size", "checkpoint_every"}, "train");
        maybe(t, "epochs", c.train.epochs);
        maybe(t, "batch_size", c.train.batch_size);
        maybe(t, "checkpoint_every", c.train.checkpoint_every);
    }
    if (j.contains("data")) {
        const json& d = j.at("data");
        reject_unknown(d, {"dataset", "intention_vocab"}, "data");
        maybe(d, "dataset", c.dataset);
        maybe(d, "intention_vocab", c.intention_vocab);
    }
    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

}  // namespace druformer
