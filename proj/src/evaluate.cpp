#include "druformer/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include "json.hpp"

#include "druformer/image_io.hpp"
#include "druformer/matching.hpp"
#include "druformer/ops.hpp"

namespace druformer {

namespace fs = std::filesystem;
using nlohmann::json;

InferenceDecision decide_prediction(const Tensor& boxes, const Tensor& logits, double threshold,
                                    bool skip_first_row) {
    NoGradGuard no_grad;
    const int k = boxes.dim(0);
    const int start = skip_first_row ? 1 : 0;
    Tensor probs = softmax_lastdim(logits);
    InferenceDecision d;
    for (int i = start; i < k; ++i) {
        const double p = probs.data()[static_cast<size_t>(i) * 2];
        if (d.slot < 0 || p > d.probability) {
            d.probability = p;
            d.slot = i;
        }
    }
    if (d.slot >= 0 && d.probability >= threshold) {
        const double* b = boxes.data().data() + static_cast<size_t>(d.slot) * 4;
        d.box = BoxCxCyWh{b[0], b[1], b[2], b[3]};
    }
    return d;
}

namespace {

struct SampleResult {
    double iou_value = 0.0;
    std::string cls;
    std::string layout;
};

template <typename Fn>
void parallel_over(size_t n, int n_threads, Fn&& fn) {
    if (n_threads <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    };
    std::vector<std::thread> pool;
    const int t = std::min<int>(n_threads, static_cast<int>(n));
    pool.reserve(static_cast<size_t>(t));
    for (int i = 0; i < t; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

BreakdownEntry make_entry(const std::vector<const SampleResult*>& rs) {
    BreakdownEntry e;
    e.n = static_cast<int>(rs.size());
    double s = 0.0;
    int hits = 0;
    for (const auto* r : rs) {
        s += r->iou_value;
        if (r->iou_value > 0.5) ++hits;
    }
    if (e.n > 0) {
        e.miou = s / e.n;
        e.acc = static_cast<double>(hits) / e.n;
    }
    return e;
}

}  // namespace

int eval_threads_from_env() {
    const char* env = std::getenv("DRUFORMER_THREADS");
    if (!env) return 1;
    const int v = std::atoi(env);
    return v >= 1 ? v : 1;
}

EvalReport evaluate_model(const DruformerModel& model, const Dataset& data,
                          const std::vector<size_t>& indices, const std::string& config_hash,
                          int n_threads) {
    std::vector<SampleResult> results(indices.size());
    parallel_over(indices.size(), n_threads, [&](size_t i) {
        NoGradGuard no_grad;
        const SceneRecord& rec = data.scenes[indices[i]];
        Tensor image = read_ppm(rec.image_path);
        auto out = model.forward(std::move(image), rec.spec.intention);
        InferenceDecision dec = decide_prediction(out.boxes, out.logits);

        EvalPair pair;
        if (dec.box.has_value()) pair.prediction = to_xyxy_unchecked(*dec.box);
        if (rec.spec.important_idx.has_value()) {
            pair.label =
                to_xyxy(rec.spec.participants[static_cast<size_t>(*rec.spec.important_idx)].box);
        }
        SampleResult r;
        r.iou_value = pair_iou(pair);
        r.layout = layout_name(rec.spec.layout);
        r.cls = rec.spec.important_idx.has_value()
                    ? class_name(
                          rec.spec.participants[static_cast<size_t>(*rec.spec.important_idx)].cls)
                    : "none";
        results[i] = std::move(r);
    });

    EvalReport report;
    report.num_samples = static_cast<int>(results.size());
    report.config_hash = config_hash;
    double s = 0.0;
    int hits = 0;
    std::map<std::string, std::vector<const SampleResult*>> by_class, by_layout;
    for (const auto& r : results) {
        s += r.iou_value;
        if (r.iou_value > 0.5) ++hits;
        by_class[r.cls].push_back(&r);
        by_layout[r.layout].push_back(&r);
    }
    if (report.num_samples > 0) {
        report.miou = s / report.num_samples;
        report.acc = static_cast<double>(hits) / report.num_samples;
    }
    for (const auto& [name, rs] : by_class) report.per_class[name] = make_entry(rs);
    for (const auto& [name, rs] : by_layout) report.per_layout[name] = make_entry(rs);
    return report;
}

std::string EvalReport::to_json() const {
    json j;
    j["num_samples"] = num_samples;
    j["miou"] = miou;
    j["acc"] = acc;
    j["config_hash"] = config_hash;
    auto dump_breakdown = [](const std::map<std::string, BreakdownEntry>& m) {
        json out;
        for (const auto& [name, e] : m) {
            out[name] = {{"n", e.n}, {"miou", e.miou}, {"acc", e.acc}};
        }
        return out;
    };
    j["per_class"] = dump_breakdown(per_class);
    j["per_layout"] = dump_breakdown(per_layout);
    return j.dump(2);
}

double detection_miou(const DruformerModel& model, const Dataset& data,
                      const std::vector<size_t>& indices, const LossWeights& weights,
                      int n_threads) {
    std::vector<double> sums(indices.size(), 0.0);
    std::vector<int> counts(indices.size(), 0);
    parallel_over(indices.size(), n_threads, [&](size_t i) {
        NoGradGuard no_grad;
        const SceneRecord& rec = data.scenes[indices[i]];
        if (rec.spec.participants.empty()) return;
        Tensor image = read_ppm(rec.image_path);
        auto out = model.forward_detect(std::move(image));
        std::vector<BoxCxCyWh> gt_boxes;
        std::vector<int> gt_classes;
        for (const auto& p : rec.spec.participants) {
            gt_boxes.push_back(p.box);
            gt_classes.push_back(static_cast<int>(p.cls));
        }
        Assignment assign =
            hungarian(match_cost(out.boxes, out.logits, gt_boxes, gt_classes, weights));
        for (size_t g = 0; g < gt_boxes.size(); ++g) {
            const double* b =
                out.boxes.data().data() + static_cast<size_t>(assign.pred_for_gt[g]) * 4;
            sums[i] += iou(to_xyxy_unchecked(BoxCxCyWh{b[0], b[1], b[2], b[3]}),
                           to_xyxy(gt_boxes[g]));
        }
        counts[i] = static_cast<int>(gt_boxes.size());
    });
    double total = 0.0;
    int n = 0;
    for (size_t i = 0; i < sums.size(); ++i) {
        total += sums[i];
        n += counts[i];
    }
    return n > 0 ? total / n : 0.0;
}

std::vector<std::string> export_relmaps(const DruformerModel& model, const SceneSpec& spec,
                                        Tensor image, int top_k, const std::string& out_dir,
                                        const std::string& config_hash) {
    NoGradGuard no_grad;
    if (top_k < 1) throw std::invalid_argument("export_relmaps: top_k must be >= 1");
    auto out = model.forward(std::move(image), spec.intention);
    const int n_slots = out.boxes.dim(0) - 1;  // participant slots, ego excluded
    if (top_k > n_slots) {
        std::cerr << "warning: requested top " << top_k << " participants but only " << n_slots
                  << " slots exist; using " << n_slots << "\n";
        top_k = n_slots;
    }

    Tensor probs = softmax_lastdim(out.logits);
    std::vector<int> slots(static_cast<size_t>(n_slots));
    for (int i = 0; i < n_slots; ++i) slots[static_cast<size_t>(i)] = i + 1;
    std::stable_sort(slots.begin(), slots.end(), [&](int a, int b) {
        return probs.data()[static_cast<size_t>(a) * 2] > probs.data()[static_cast<size_t>(b) * 2];
    });
    slots.resize(static_cast<size_t>(top_k));

    // Row 0 = ego, rows 1..top_k = selected slots by descending probability.
    std::vector<int> rows = {0};
    rows.insert(rows.end(), slots.begin(), slots.end());
    Tensor y_sel = select_rows(out.y, rows);
    RelMap dru_map = cosine_relmap(y_sel);

    std::vector<BoxCxCyWh> boxes(rows.size());
    for (size_t i = 1; i < rows.size(); ++i) {
        const double* b = out.boxes.data().data() + static_cast<size_t>(rows[i]) * 4;
        boxes[i] = BoxCxCyWh{b[0], b[1], b[2], b[3]};
    }
    RelMap loc_map = location_relmap(boxes, 0.25);

    // Classes from the pretraining detection head's argmax per slot.
    auto det = model.detect_head.forward(out.participant_tokens);
    const int n_logits = det.logits.dim(1);
    std::vector<std::string> classes(rows.size(), "ego");
    for (size_t i = 1; i < rows.size(); ++i) {
        const double* lg = det.logits.data().data() + static_cast<size_t>(rows[i] - 1) * n_logits;
        int best = 0;
        for (int c = 1; c < n_logits - 1; ++c) {
            if (lg[c] > lg[best]) best = c;
        }
        classes[i] = class_name(static_cast<ParticipantClass>(best));
    }
    RelMap sem_map = semantic_relmap(classes);

    fs::create_directories(out_dir);
    std::vector<std::string> files;
    auto emit = [&](const RelMap& m, const std::string& kind) {
        const std::string base = (fs::path(out_dir) / (spec.id + "." + kind)).string();
        write_csv_matrix(base + ".csv", m.v, m.n, m.n, "config_hash=" + config_hash);
        write_pgm_scaled(base + ".pgm", m.v, m.n, m.n);
        files.push_back(base + ".csv");
        files.push_back(base + ".pgm");
    };
    emit(dru_map, "dru");
    emit(loc_map, "loc");
    emit(sem_map, "sem");
    return files;
}

void draw_box_outline(Tensor& image, const BoxCxCyWh& box, double r, double g, double b) {
    const int H = image.dim(1), W = image.dim(2);
    const size_t plane = static_cast<size_t>(H) * W;
    const BoxXyXy xy = to_xyxy_unchecked(box);
    const int x0 = std::clamp(static_cast<int>(std::floor(xy.x0 * W)), 0, W - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(xy.y0 * H)), 0, H - 1);
    const int x1 = std::clamp(static_cast<int>(std::ceil(xy.x1 * W)) - 1, 0, W - 1);
    const int y1 = std::clamp(static_cast<int>(std::ceil(xy.y1 * H)) - 1, 0, H - 1);
    auto put = [&](int px, int py) {
        const size_t at = static_cast<size_t>(py) * W + px;
        image.data()[at] = r;
        image.data()[plane + at] = g;
        image.data()[2 * plane + at] = b;
    };
    for (int t = 0; t < 2; ++t) {
        for (int px = x0; px <= x1; ++px) {
            put(px, std::min(y0 + t, H - 1));
            put(px, std::max(y1 - t, 0));
        }
        for (int py = y0; py <= y1; ++py) {
            put(std::min(x0 + t, W - 1), py);
            put(std::max(x1 - t, 0), py);
        }
    }
}

}  // namespace druformer
