#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "druformer/config.hpp"
#include "druformer/evaluate.hpp"
#include "druformer/gradsuite.hpp"
#include "druformer/image_io.hpp"
#include "druformer/scenes.hpp"
#include "druformer/train.hpp"

namespace fs = std::filesystem;
using namespace druformer;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitDivergence = 2;

RunConfig load_run_config(const std::string& path, uint64_t seed_override, bool has_seed) {
    RunConfig cfg = path.empty() ? RunConfig{} : RunConfig::from_file(path);
    if (has_seed) cfg.seed = seed_override;
    cfg.validate();
    return cfg;
}

SynthConfig load_synth_config(const std::string& path) {
    SynthConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("gen config: cannot open " + path);
    const json j = json::parse(in);
    if (j.contains("layout_probs")) {
        for (int i = 0; i < 3; ++i) cfg.layout_probs[i] = j.at("layout_probs").at(i);
    }
    if (j.contains("class_probs")) {
        for (int i = 0; i < 4; ++i) cfg.class_probs[i] = j.at("class_probs").at(i);
    }
    if (j.contains("min_participants")) cfg.min_participants = j.at("min_participants");
    if (j.contains("max_participants")) cfg.max_participants = j.at("max_participants");
    if (j.contains("signal_red_prob")) cfg.signal_red_prob = j.at("signal_red_prob");
    return cfg;
}

int cmd_gen_data(const std::string& out, int n, uint64_t seed, const std::string& gen_config) {
    generate_dataset(out, n, seed, load_synth_config(gen_config));
    std::cout << "wrote " << n << " scenes to " << out << "\n";
    return kExitOk;
}

int cmd_pretrain(const RunConfig& cfg, const std::string& data_dir, const std::string& out,
                 const std::string& resume) {
    Dataset data = read_dataset(data_dir);
    TrainResult res = pretrain_pe(cfg, data, out, resume);
    std::cout << "pretrain done: " << res.checkpoint_path << " final loss " << res.final_loss
              << "\n";
    return kExitOk;
}

int cmd_train(RunConfig cfg, const std::string& data_dir, const std::string& out,
              const std::string& pe_ckpt, const std::string& resume, bool no_intention,
              bool no_dru, int dru_layers) {
    if (no_intention) cfg.model.use_intention = false;
    if (no_dru) cfg.model.use_dru = false;
    if (dru_layers > 0) cfg.model.dru_layers = dru_layers;
    cfg.validate();
    Dataset data = read_dataset(data_dir);
    TrainResult res = train_full(cfg, data, out, pe_ckpt, resume);
    std::cout << "train done: " << res.checkpoint_path << " final loss " << res.final_loss
              << " best val miou " << res.best_val_miou << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& split,
             const std::string& out_path, const std::string& config_path) {
    LoadedModel lm = load_model_checkpoint(ckpt_path);
    if (lm.stage != "full") throw std::runtime_error("eval: expects a full-training checkpoint");
    if (!config_path.empty()) {
        RunConfig cli_cfg = RunConfig::from_file(config_path);
        if (cli_cfg.hash() != lm.config_hash) {
            throw std::runtime_error("eval: checkpoint/config hash mismatch (" + cli_cfg.hash() +
                                     " vs " + lm.config_hash + ")");
        }
    }
    Dataset data = read_dataset(data_dir);
    EvalReport report = evaluate_model(lm.model, data, data.split(split), lm.config_hash,
                                       eval_threads_from_env());
    const std::string text = report.to_json();
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << text << "\n";
        if (!out) throw std::runtime_error("eval: cannot write " + out_path);
    }
    std::cout << text << "\n";
    return kExitOk;
}

int cmd_infer(const std::string& ckpt_path, const std::string& image_path,
              const std::string& intention_text, const std::string& out_json,
              const std::string& out_image, const std::string& label_spec,
              bool default_intention) {
    LoadedModel lm = load_model_checkpoint(ckpt_path);
    if (lm.stage != "full") throw std::runtime_error("infer: expects a full-training checkpoint");
    IntentionVocab vocab = lm.cfg.intention_vocab.empty()
                               ? IntentionVocab::builtin()
                               : IntentionVocab::from_json_file(lm.cfg.intention_vocab);
    const int intention = default_intention
                              ? vocab.parse_or_default(intention_text, 0, &std::cerr)
                              : vocab.parse(intention_text);

    Tensor image = read_ppm(image_path);
    if (image.dim(1) != lm.cfg.model.pe.image_h || image.dim(2) != lm.cfg.model.pe.image_w) {
        throw std::runtime_error("infer: image dims do not match the model config");
    }
    NoGradGuard no_grad;
    auto out = lm.model.forward(image, intention);
    InferenceDecision dec = decide_prediction(out.boxes, out.logits);

    json j;
    j["intention"] = vocab.name(intention);
    j["probability"] = dec.probability;
    j["slot"] = dec.slot;
    j["config_hash"] = lm.config_hash;
    if (dec.box.has_value()) j["box"] = {dec.box->cx, dec.box->cy, dec.box->w, dec.box->h};
    else j["box"] = nullptr;
    const std::string text = j.dump(2);
    if (!out_json.empty()) {
        std::ofstream f(out_json);
        f << text << "\n";
    }
    std::cout << text << "\n";

    if (!out_image.empty()) {
        Tensor annotated = Tensor::from_data(image.shape(), image.data());
        if (!label_spec.empty()) {
            BoxCxCyWh label{};
            char comma;
            std::istringstream ss(label_spec);
            if (!(ss >> label.cx >> comma >> label.cy >> comma >> label.w >> comma >> label.h)) {
                throw std::runtime_error("infer: --label expects cx,cy,w,h");
            }
            draw_box_outline(annotated, label, 1.0, 0.05, 0.05);
        }
        if (dec.box.has_value()) draw_box_outline(annotated, *dec.box, 0.1, 0.3, 1.0);
        write_ppm(out_image, annotated);
    }
    return kExitOk;
}

int cmd_export_relmaps(const std::string& ckpt_path, const std::string& data_dir,
                       const std::string& scene_id, const std::string& out_dir, int top_k) {
    LoadedModel lm = load_model_checkpoint(ckpt_path);
    if (lm.stage != "full") {
        throw std::runtime_error("export-relmaps: expects a full-training checkpoint");
    }
    Dataset data = read_dataset(data_dir);
    const SceneRecord* rec = nullptr;
    for (const auto& r : data.scenes) {
        if (r.spec.id == scene_id) {
            rec = &r;
            break;
        }
    }
    if (!rec) throw std::runtime_error("export-relmaps: scene not found: " + scene_id);
    auto files = export_relmaps(lm.model, rec->spec, read_ppm(rec->image_path), top_k, out_dir,
                                lm.config_hash);
    for (const auto& f : files) std::cout << f << "\n";
    return kExitOk;
}

int cmd_gradcheck(int seeds, const std::string& corrupt_op, const std::string& out_path) {
    if (!corrupt_op.empty()) Tape::set_corrupted_op(corrupt_op);
    json report = json::array();
    bool all_pass = true;

    auto checks = builtin_op_checks();
    for (const auto& check : checks) {
        double worst = 0.0;
        bool pass = true;
        for (int s = 0; s < seeds && pass; ++s) {
            GradCheckResult r = check.run(1000 + static_cast<uint64_t>(s));
            worst = std::max(worst, r.max_rel_err);
            pass = pass && r.pass;
        }
        all_pass = all_pass && pass;
        std::cout << "op " << check.name << ": " << (pass ? "PASS" : "FAIL") << " max-rel-err "
                  << worst << "\n";
        report.push_back({{"op", check.name}, {"pass", pass}, {"max_rel_err", worst}});
    }
    {
        double worst = 0.0;
        bool pass = true;
        for (int s = 0; s < seeds && pass; ++s) {
            GradCheckResult r = composite_pe_dru_gradcheck(2000 + static_cast<uint64_t>(s));
            worst = std::max(worst, r.max_rel_err);
            pass = pass && r.pass;
        }
        all_pass = all_pass && pass;
        std::cout << "op composite_pe_dru: " << (pass ? "PASS" : "FAIL") << " max-rel-err "
                  << worst << "\n";
        report.push_back({{"op", "composite_pe_dru"}, {"pass", pass}, {"max_rel_err", worst}});
    }
    Tape::clear_corrupted_op();

    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << report.dump(2) << "\n";
    }
    std::cout << (all_pass ? "gradcheck PASS" : "gradcheck FAIL") << "\n";
    return all_pass ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DRUformer: driving-scene important object detection"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, ckpt, pe_ckpt, resume, split = "test";
    std::string image_path, intention_text, out_json, out_image, label_spec, scene_id;
    std::string gen_config, corrupt_op, out_path;
    uint64_t seed = 0;
    bool has_seed = false, no_intention = false, no_dru = false, default_intention = false;
    int n_scenes = 2000, dru_layers = 0, top_k = 10, gradcheck_seeds = 100;

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "Seed override")->each([&](const std::string&) {
            has_seed = true;
        });
    };

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic scene dataset");
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_option("--n", n_scenes, "Number of scenes");
    gen->add_option("--gen-config", gen_config, "Generator config JSON");
    add_seed(gen);

    auto* pre = app.add_subcommand("pretrain-pe", "Pretrain the participants extractor");
    pre->add_option("--config", config_path, "Run config JSON");
    pre->add_option("--data", data_dir, "Dataset directory")->required();
    pre->add_option("--out", out_dir, "Output directory")->required();
    pre->add_option("--resume", resume, "Resume from checkpoint");
    add_seed(pre);

    auto* tr = app.add_subcommand("train", "Train the full model");
    tr->add_option("--config", config_path, "Run config JSON");
    tr->add_option("--data", data_dir, "Dataset directory")->required();
    tr->add_option("--out", out_dir, "Output directory")->required();
    tr->add_option("--pe-checkpoint", pe_ckpt, "PE pretraining checkpoint");
    tr->add_option("--resume", resume, "Resume from checkpoint");
    tr->add_flag("--no-intention", no_intention, "Zero the intention path");
    tr->add_flag("--no-dru", no_dru, "Replace the DRU stack with identity");
    tr->add_option("--dru-layers", dru_layers, "Relationship layer count (1-6)");
    add_seed(tr);

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    ev->add_option("--checkpoint", ckpt, "Checkpoint path")->required();
    ev->add_option("--data", data_dir, "Dataset directory")->required();
    ev->add_option("--split", split, "train|val|test");
    ev->add_option("--out", out_path, "Metrics report JSON path");
    ev->add_option("--config", config_path, "Config to cross-check against the checkpoint");

    auto* in = app.add_subcommand("infer", "Predict the important object for one image");
    in->add_option("--checkpoint", ckpt, "Checkpoint path")->required();
    in->add_option("--image", image_path, "Input PPM image")->required();
    in->add_option("--intention", intention_text, "Driving intention command")->required();
    in->add_option("--out-json", out_json, "Prediction JSON path");
    in->add_option("--out-image", out_image, "Annotated PPM path");
    in->add_option("--label", label_spec, "Ground-truth box cx,cy,w,h to draw");
    in->add_flag("--default-intention", default_intention,
                 "Fall back to go-straight on unknown intention text");

    auto* ex = app.add_subcommand("export-relmaps", "Export relationship maps for a scene");
    ex->add_option("--checkpoint", ckpt, "Checkpoint path")->required();
    ex->add_option("--data", data_dir, "Dataset directory")->required();
    ex->add_option("--scene-id", scene_id, "Scene id")->required();
    ex->add_option("--out", out_dir, "Output directory")->required();
    ex->add_option("--top-k", top_k, "Participants to keep");

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    gc->add_option("--seeds", gradcheck_seeds, "Seeds per op");
    gc->add_option("--corrupt-op", corrupt_op, "Skip this op's backward rule (negative control)");
    gc->add_option("--out", out_path, "Report JSON path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            if (n_scenes <= 0) throw std::invalid_argument("gen-data: --n must be positive");
            return cmd_gen_data(out_dir, n_scenes, has_seed ? seed : 0, gen_config);
        }
        if (pre->parsed()) {
            return cmd_pretrain(load_run_config(config_path, seed, has_seed), data_dir, out_dir,
                                resume);
        }
        if (tr->parsed()) {
            return cmd_train(load_run_config(config_path, seed, has_seed), data_dir, out_dir,
                             pe_ckpt, resume, no_intention, no_dru, dru_layers);
        }
        if (ev->parsed()) return cmd_eval(ckpt, data_dir, split, out_path, config_path);
        if (in->parsed()) {
            return cmd_infer(ckpt, image_path, intention_text, out_json, out_image, label_spec,
                             default_intention);
        }
        if (ex->parsed()) return cmd_export_relmaps(ckpt, data_dir, scene_id, out_dir, top_k);
        if (gc->parsed()) return cmd_gradcheck(gradcheck_seeds, corrupt_op, out_path);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const NonFiniteError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}
