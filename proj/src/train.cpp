#include "druformer/train.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"

#include "druformer/evaluate.hpp"
#include "druformer/image_io.hpp"
#include "druformer/ops.hpp"
#include "druformer/optimizer.hpp"

namespace druformer {

namespace fs = std::filesystem;
using nlohmann::json;

std::string model_hash(const RunConfig& cfg) {
    const json j = json::parse(cfg.to_json());
    return fnv1a_hex(j.at("model").dump());
}

std::string pe_hash(const RunConfig& cfg) {
    const json j = json::parse(cfg.to_json()).at("model");
    json pe = {{"image_h", j.at("image_h")},     {"image_w", j.at("image_w")},
               {"downsample", j.at("downsample")}, {"d_s", j.at("d_s")},
               {"d_d", j.at("d_d")},             {"n_queries", j.at("n_queries")},
               {"enc_layers", j.at("enc_layers")}, {"dec_layers", j.at("dec_layers")},
               {"n_heads", j.at("n_heads")},     {"n_classes", j.at("n_classes")}};
    return fnv1a_hex(pe.dump());
}

namespace {

constexpr const char* kMagic = "druformer-ckpt-v1";

struct ImageCache {
    std::map<size_t, std::vector<uint8_t>> raw;
    int h = 0, w = 0;

    void preload(const Dataset& data, const std::vector<size_t>& indices) {
        for (size_t idx : indices) {
            if (raw.count(idx)) continue;
            raw[idx] = read_ppm_raw(data.scenes[idx].image_path, &h, &w);
        }
    }
    Tensor get(size_t idx) const { return ppm_raw_to_tensor(raw.at(idx), h, w); }
};

void registry_for_stage(const DruformerModel& model, const std::string& stage,
                        ParamRegistry& out) {
    if (stage == "pe_pretrain") {
        model.pe.register_params(out, "pe");
        model.detect_head.register_params(out, "detect");
    } else {
        model.pe.register_params(out, "pe");
        model.ie.register_params(out, "ie");
        model.dru.register_params(out, "dru");
        model.importance_head.register_params(out, "importance");
    }
}

struct TrainState {
    DruformerModel model;
    ParamRegistry train_reg;   // parameters the optimizer updates
    ParamRegistry full_reg;    // everything stored in checkpoints
    std::unique_ptr<AdamW> opt;
    RngService rng{0};
    int start_epoch = 0;
    long step = 0;
    double best_val_miou = -1.0;
    double best_val_acc = -1.0;
};

void save_checkpoint_file(const std::string& path, const RunConfig& cfg,
                          const std::string& stage, const TrainState& st, int epochs_done) {
    json meta;
    meta["magic"] = kMagic;
    meta["stage"] = stage;
    meta["config"] = json::parse(cfg.to_json());
    meta["config_hash"] = cfg.hash();
    meta["model_hash"] = model_hash(cfg);
    meta["pe_hash"] = pe_hash(cfg);
    meta["epoch"] = epochs_done;
    meta["step"] = st.step;
    meta["adamw_t"] = st.opt->step_count();
    meta["rng"] = st.rng.serialize();
    meta["best_val_miou"] = st.best_val_miou;
    meta["best_val_acc"] = st.best_val_acc;

    Checkpoint ck;
    ck.meta_json = meta.dump();
    for (const auto& p : st.full_reg.params()) ck.tensors.emplace_back(p.name, p.tensor);
    const auto& params = st.train_reg.params();
    for (size_t i = 0; i < params.size(); ++i) {
        ck.tensors.emplace_back("adamw.m." + params[i].name,
                                Tensor::from_data(params[i].tensor.shape(), st.opt->moment1()[i]));
        ck.tensors.emplace_back("adamw.v." + params[i].name,
                                Tensor::from_data(params[i].tensor.shape(), st.opt->moment2()[i]));
    }
    write_checkpoint(path, ck);
}

void resume_from_file(const std::string& path, const RunConfig& cfg, const std::string& stage,
                      TrainState& st) {
    Checkpoint ck = read_checkpoint(path);
    const json meta = json::parse(ck.meta_json);
    if (meta.value("magic", "") != kMagic) {
        throw std::runtime_error("resume: not a druformer checkpoint: " + path);
    }
    if (meta.at("stage").get<std::string>() != stage) {
        throw std::runtime_error("resume: checkpoint stage mismatch");
    }
    if (meta.at("config_hash").get<std::string>() != cfg.hash()) {
        throw std::runtime_error("resume: incompatible checkpoint hash (config differs)");
    }
    load_into_registry(ck, st.full_reg);
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : ck.tensors) by_name[name] = &t;
    const auto& params = st.train_reg.params();
    for (size_t i = 0; i < params.size(); ++i) {
        const auto m = by_name.find("adamw.m." + params[i].name);
        const auto v = by_name.find("adamw.v." + params[i].name);
        if (m == by_name.end() || v == by_name.end()) {
            throw std::runtime_error("resume: missing optimizer state for " + params[i].name);
        }
        st.opt->moment1()[i] = (*m).second->data();
        st.opt->moment2()[i] = (*v).second->data();
    }
    st.opt->set_step_count(meta.at("adamw_t").get<long>());
    st.rng.deserialize(meta.at("rng").get<std::string>());
    st.start_epoch = meta.at("epoch").get<int>();
    st.step = meta.at("step").get<long>();
    st.best_val_miou = meta.at("best_val_miou").get<double>();
    st.best_val_acc = meta.at("best_val_acc").get<double>();
}

struct SceneLoss {
    SetLossOutput loss;
    double map_rowsum_dev = 0.0;
    bool rows_bitequal = true;
};

SceneLoss detect_scene_loss(const DruformerModel& model, const RunConfig& cfg, Tensor image,
                            const SceneSpec& spec) {
    auto out = model.forward_detect(std::move(image));
    std::vector<BoxCxCyWh> gt_boxes;
    std::vector<int> gt_classes;
    for (const auto& p : spec.participants) {
        gt_boxes.push_back(p.box);
        gt_classes.push_back(static_cast<int>(p.cls));
    }
    Assignment assign =
        hungarian(match_cost(out.boxes, out.logits, gt_boxes, gt_classes, cfg.loss));
    SceneLoss r;
    r.loss = set_loss(out.boxes, out.logits, gt_boxes, gt_classes, assign, cfg.loss,
                      cfg.no_object_weight);
    return r;
}

SceneLoss importance_scene_loss(const DruformerModel& model, const RunConfig& cfg, Tensor image,
                                const SceneSpec& spec) {
    auto out = model.forward(std::move(image), spec.intention);
    const int k = out.boxes.dim(0);

    SceneLoss r;
    // Attention invariants, asserted on every training step.
    for (const auto& layer_maps : out.maps) {
        for (const auto& m : layer_maps) {
            const int rows = m.dim(0), cols = m.dim(1);
            for (int i = 0; i < rows; ++i) {
                double s = 0.0;
                for (int j = 0; j < cols; ++j) {
                    const double v = m.data()[static_cast<size_t>(i) * cols + j];
                    if (v < 0.0 || v > 1.0) {
                        throw std::runtime_error("relationship map entry outside [0,1]");
                    }
                    s += v;
                }
                r.map_rowsum_dev = std::max(r.map_rowsum_dev, std::fabs(s - 1.0));
            }
        }
    }
    if (r.map_rowsum_dev > 1e-9) {
        throw std::runtime_error("relationship map row sum deviates beyond 1e-9");
    }
    const size_t n_part = out.participant_tokens.numel();
    r.rows_bitequal = std::memcmp(out.entity_set.data().data() + out.entity_set.dim(1),
                                  out.participant_tokens.data().data(),
                                  n_part * sizeof(double)) == 0;
    if (!r.rows_bitequal) {
        throw std::runtime_error("entity set rows 1..N are not bit-equal to O");
    }

    // The ego/intention row never matches a ground-truth box.
    Tensor boxes = slice_rows(out.boxes, 1, k);
    Tensor logits = slice_rows(out.logits, 1, k);
    std::vector<BoxCxCyWh> gt_boxes;
    if (spec.important_idx.has_value()) {
        gt_boxes.push_back(spec.participants[static_cast<size_t>(*spec.important_idx)].box);
    }
    Assignment assign = hungarian(match_cost(boxes, logits, gt_boxes, cfg.loss));
    r.loss = set_loss(boxes, logits, gt_boxes, assign, cfg.loss, cfg.no_object_weight);
    return r;
}

TrainResult run_training(const RunConfig& cfg, const Dataset& data, const std::string& out_dir,
                         const std::string& stage, const std::string& pe_checkpoint,
                         const std::string& resume_from, const TrainHooks& hooks) {
    cfg.validate();
    fs::create_directories(out_dir);

    TrainState st;
    st.model = DruformerModel::init(cfg.model, cfg.seed);
    registry_for_stage(st.model, stage, st.train_reg);
    st.full_reg = st.model.build_registry();
    if (stage == "pe_pretrain") {
        // Pretraining stores only what it trains.
        st.full_reg = ParamRegistry();
        registry_for_stage(st.model, stage, st.full_reg);
    }
    st.opt = std::make_unique<AdamW>(st.train_reg, cfg.optim);
    st.rng = RngService::for_stream(cfg.seed, 0x7124121ULL);

    if (!pe_checkpoint.empty()) {
        Checkpoint ck = read_checkpoint(pe_checkpoint);
        const json meta = json::parse(ck.meta_json);
        if (meta.value("magic", "") != kMagic || meta.at("stage") != "pe_pretrain") {
            throw std::runtime_error("train: " + pe_checkpoint + " is not a PE checkpoint");
        }
        if (meta.at("pe_hash").get<std::string>() != pe_hash(cfg)) {
            throw std::runtime_error("train: incompatible checkpoint hash (PE config differs)");
        }
        ParamRegistry pe_reg;
        registry_for_stage(st.model, "pe_pretrain", pe_reg);
        load_into_registry(ck, pe_reg);
    }
    if (!resume_from.empty()) resume_from_file(resume_from, cfg, stage, st);

    const std::vector<size_t>& train_idx = data.train;
    if (train_idx.empty()) throw std::runtime_error("train: dataset has an empty train split");
    ImageCache cache;
    cache.preload(data, train_idx);

    std::ofstream log(fs::path(out_dir) / "loss_log.jsonl",
                      resume_from.empty() ? std::ios::trunc : std::ios::app);
    if (resume_from.empty()) {
        log << json({{"config_hash", cfg.hash()}, {"stage", stage}}).dump() << "\n";
    }

    TrainResult result;
    result.best_val_miou = st.best_val_miou;
    result.best_val_acc = st.best_val_acc;
    double epoch_loss = 0.0;

    for (int epoch = st.start_epoch; epoch < cfg.train.epochs; ++epoch) {
        std::vector<size_t> order = train_idx;
        st.rng.shuffle(order);
        epoch_loss = 0.0;
        size_t batches = 0;
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.train.batch_size)) {
            const size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.train.batch_size));
            const double inv_b = 1.0 / static_cast<double>(end - at);
            double l_b = 0.0, l_giou = 0.0, l_c = 0.0;
            try {
                Tape tape;
                Tensor total = Tensor::scalar(0.0);
                for (size_t i = at; i < end; ++i) {
                    const SceneRecord& rec = data.scenes[order[i]];
                    SceneLoss sl = stage == "pe_pretrain"
                                       ? detect_scene_loss(st.model, cfg, cache.get(order[i]), rec.spec)
                                       : importance_scene_loss(st.model, cfg, cache.get(order[i]),
                                                               rec.spec);
                    total = add(total, scalar_mul(sl.loss.total, inv_b));
                    l_b += sl.loss.l_b * inv_b;
                    l_giou += sl.loss.l_giou * inv_b;
                    l_c += sl.loss.l_c * inv_b;
                    result.max_rowsum_deviation =
                        std::max(result.max_rowsum_deviation, sl.map_rowsum_dev);
                    result.entity_rows_bitequal =
                        result.entity_rows_bitequal && sl.rows_bitequal;
                }
                st.train_reg.zero_grad();
                tape.backward(total);
                st.opt->step();
                epoch_loss += total.item();
                ++batches;
                ++st.step;
                log << json({{"step", st.step},
                             {"l_b", l_b},
                             {"l_giou", l_giou},
                             {"l_c", l_c},
                             {"total", total.item()}})
                           .dump()
                    << "\n";
                if (hooks.on_step) hooks.on_step(st.step, l_b, l_giou, l_c, total.item());
            } catch (const NonFiniteError& e) {
                throw DivergenceError(std::string("training diverged at step ") +
                                      std::to_string(st.step + 1) + ": " + e.what());
            }
        }
        epoch_loss /= static_cast<double>(batches);
        if (hooks.on_epoch) hooks.on_epoch(epoch, epoch_loss);

        if (stage == "full" && !data.val.empty()) {
            EvalReport val = evaluate_model(st.model, data, data.val, cfg.hash(),
                                            eval_threads_from_env());
            if (val.miou > st.best_val_miou) st.best_val_miou = val.miou;
            if (val.acc > st.best_val_acc) st.best_val_acc = val.acc;
        }

        if (cfg.train.checkpoint_every > 0 && (epoch + 1) % cfg.train.checkpoint_every == 0 &&
            epoch + 1 < cfg.train.epochs) {
            save_checkpoint_file(
                (fs::path(out_dir) / ("checkpoint_epoch_" + std::to_string(epoch + 1) + ".ckpt"))
                    .string(),
                cfg, stage, st, epoch + 1);
        }
    }

    result.checkpoint_path = (fs::path(out_dir) / "checkpoint.ckpt").string();
    save_checkpoint_file(result.checkpoint_path, cfg, stage, st, cfg.train.epochs);
    result.final_loss = epoch_loss;
    result.steps = st.step;
    result.best_val_miou = st.best_val_miou;
    result.best_val_acc = st.best_val_acc;
    return result;
}

}  // namespace

TrainResult pretrain_pe(const RunConfig& cfg, const Dataset& data, const std::string& out_dir,
                        const std::string& resume_from, const TrainHooks& hooks) {
    return run_training(cfg, data, out_dir, "pe_pretrain", "", resume_from, hooks);
}

TrainResult train_full(const RunConfig& cfg, const Dataset& data, const std::string& out_dir,
                       const std::string& pe_checkpoint, const std::string& resume_from,
                       const TrainHooks& hooks) {
    return run_training(cfg, data, out_dir, "full", pe_checkpoint, resume_from, hooks);
}

LoadedModel load_model_checkpoint(const std::string& path) {
    Checkpoint ck = read_checkpoint(path);
    const json meta = json::parse(ck.meta_json);
    if (meta.value("magic", "") != kMagic) {
        throw std::runtime_error("checkpoint: not a druformer checkpoint: " + path);
    }
    LoadedModel lm{RunConfig::from_json(meta.at("config").dump()),
                   DruformerModel(),
                   meta.at("stage").get<std::string>(),
                   meta.at("config_hash").get<std::string>()};
    lm.model = DruformerModel::init(lm.cfg.model, lm.cfg.seed);
    if (lm.stage == "pe_pretrain") {
        ParamRegistry pe_reg;
        lm.model.pe.register_params(pe_reg, "pe");
        lm.model.detect_head.register_params(pe_reg, "detect");
        load_into_registry(ck, pe_reg);
    } else {
        ParamRegistry reg = lm.model.build_registry();
        load_into_registry(ck, reg);
    }
    return lm;
}

}  // namespace druformer
