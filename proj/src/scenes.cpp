#include "druformer/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"

#include "druformer/image_io.hpp"

namespace druformer {

namespace fs = std::filesystem;
using nlohmann::json;

const char* layout_name(Layout l) {
    switch (l) {
        case Layout::kWideRoad: return "wide-road";
        case Layout::kNarrowRoad: return "narrow-road";
        case Layout::kIntersection: return "intersection";
    }
    return "?";
}

Layout layout_from_name(const std::string& name) {
    if (name == "wide-road") return Layout::kWideRoad;
    if (name == "narrow-road") return Layout::kNarrowRoad;
    if (name == "intersection") return Layout::kIntersection;
    throw std::invalid_argument("unknown layout: " + name);
}

const char* class_name(ParticipantClass c) {
    switch (c) {
        case ParticipantClass::kVehicle: return "vehicle";
        case ParticipantClass::kPedestrian: return "pedestrian";
        case ParticipantClass::kSignal: return "signal";
        case ParticipantClass::kLaneMarker: return "lane-marker";
    }
    return "?";
}

ParticipantClass class_from_name(const std::string& name) {
    if (name == "vehicle") return ParticipantClass::kVehicle;
    if (name == "pedestrian") return ParticipantClass::kPedestrian;
    if (name == "signal") return ParticipantClass::kSignal;
    if (name == "lane-marker") return ParticipantClass::kLaneMarker;
    throw std::invalid_argument("unknown participant class: " + name);
}

namespace {

// Intersection road bands, shared by the rules and the renderer.
constexpr double kVertX0 = 0.38, kVertX1 = 0.62;
constexpr double kHorzY0 = 0.30, kHorzY1 = 0.50;
// Rule constants (the generator config must agree with them).
constexpr double kSignalDistanceThreshold = 0.5;
constexpr double kSignalGovernsRadius = 0.18;

struct Rect {
    double x0, y0, x1, y1;
    bool contains(const Point& p) const {
        return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
    }
};

constexpr Rect kApproach{kVertX0, kHorzY1, kVertX1, 1.0};
constexpr Rect kCrossing{kVertX0, kHorzY0, kVertX1, kHorzY1};
constexpr Rect kLeftBranch{0.0, kHorzY0, kVertX0, kHorzY1};
constexpr Rect kRightBranch{kVertX1, kHorzY0, 1.0, kHorzY1};
constexpr Rect kAheadBranch{kVertX0, 0.0, kVertX1, kHorzY0};

// Intention ids follow the builtin vocabulary order.
constexpr int kStraight = 0, kLeft = 1, kRight = 2, kStop = 3;

struct RoadGeom {
    double hw_bottom, hw_top;
    double half_width_at(double y) const { return hw_top + (hw_bottom - hw_top) * y; }
};

RoadGeom road_geometry(Layout layout) {
    if (layout == Layout::kWideRoad) return RoadGeom{0.22, 0.10};
    return RoadGeom{0.11, 0.05};  // narrow road
}

std::vector<Point> build_lane_polygon(Layout layout) {
    if (layout == Layout::kIntersection) {
        // plus-shaped drivable region
        return {{kVertX0, 0.0}, {kVertX1, 0.0},     {kVertX1, kHorzY0}, {1.0, kHorzY0},
                {1.0, kHorzY1}, {kVertX1, kHorzY1}, {kVertX1, 1.0},     {kVertX0, 1.0},
                {kVertX0, kHorzY1}, {0.0, kHorzY1}, {0.0, kHorzY0},     {kVertX0, kHorzY0}};
    }
    const RoadGeom g = road_geometry(layout);
    return {{0.5 - g.hw_top, 0.0}, {0.5 + g.hw_top, 0.0}, {0.5 + g.hw_bottom, 1.0},
            {0.5 - g.hw_bottom, 1.0}};
}

Point branch_entry(int intention) {
    switch (intention) {
        case kLeft: return Point{kVertX0, (kHorzY0 + kHorzY1) / 2.0};
        case kRight: return Point{kVertX1, (kHorzY0 + kHorzY1) / 2.0};
        case kStop: return Point{0.5, kHorzY1};
        default: return Point{0.5, kHorzY0};  // straight
    }
}

double dist(const Point& a, const Point& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

Point center_of(const Participant& p) { return Point{p.box.cx, p.box.cy}; }

bool signal_governs(const SceneSpec& spec, const Participant& p, int intention) {
    if (p.cls != ParticipantClass::kSignal || !p.signal_red) return false;
    if (spec.layout == Layout::kIntersection) {
        return dist(center_of(p), branch_entry(intention)) <= kSignalGovernsRadius;
    }
    const RoadGeom g = road_geometry(spec.layout);
    return std::fabs(p.box.cx - 0.5) <= g.half_width_at(p.box.cy) + 0.08;
}

}  // namespace

bool point_in_polygon(const Point& p, const std::vector<Point>& poly) {
    bool inside = false;
    const size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = poly[i];
        const Point& b = poly[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

bool in_intention_path(const SceneSpec& spec, const Point& p, int intention) {
    if (spec.layout != Layout::kIntersection) return point_in_polygon(p, spec.lane);
    if (kApproach.contains(p)) return true;
    if (intention == kStop) return false;
    if (kCrossing.contains(p)) return true;
    switch (intention) {
        case kLeft: return kLeftBranch.contains(p);
        case kRight: return kRightBranch.contains(p);
        default: return kAheadBranch.contains(p);
    }
}

std::optional<int> importance_rule(SceneSpec& spec) {
    const int n = static_cast<int>(spec.participants.size());
    const int intent = spec.intention;

    // Rule 1-2: in-lane pedestrians, narrowed to the commanded path at
    // intersections; nearest to ego wins.
    int best_ped = -1;
    double best_ped_dist = 1e9;
    for (int i = 0; i < n; ++i) {
        const Participant& p = spec.participants[static_cast<size_t>(i)];
        if (p.cls != ParticipantClass::kPedestrian) continue;
        const Point c = center_of(p);
        if (!point_in_polygon(c, spec.lane)) continue;
        if (!in_intention_path(spec, c, intent)) continue;
        const double d = dist(c, kEgoPoint);
        if (d < best_ped_dist) {
            best_ped_dist = d;
            best_ped = i;
        }
    }
    if (best_ped >= 0) {
        spec.important_idx = best_ped;
        return spec.important_idx;
    }

    // Rule 3: nearest in-path vehicle ahead of the ego.
    int best_veh = -1;
    double best_veh_dist = 1e9;
    for (int i = 0; i < n; ++i) {
        const Participant& p = spec.participants[static_cast<size_t>(i)];
        if (p.cls != ParticipantClass::kVehicle) continue;
        const Point c = center_of(p);
        if (c.y >= kEgoPoint.y) continue;
        if (!in_intention_path(spec, c, intent)) continue;
        const double d = dist(c, kEgoPoint);
        if (d < best_veh_dist) {
            best_veh_dist = d;
            best_veh = i;
        }
    }

    // Rule 4: a red signal governing the commanded branch outranks distant
    // (or absent) vehicles.
    int best_sig = -1;
    double best_sig_dist = 1e9;
    const Point entry = branch_entry(intent);
    for (int i = 0; i < n; ++i) {
        const Participant& p = spec.participants[static_cast<size_t>(i)];
        if (!signal_governs(spec, p, intent)) continue;
        const double d = dist(center_of(p), entry);
        if (d < best_sig_dist) {
            best_sig_dist = d;
            best_sig = i;
        }
    }

    if (best_veh >= 0) {
        if (best_sig >= 0 && best_veh_dist > kSignalDistanceThreshold) {
            spec.important_idx = best_sig;
        } else {
            spec.important_idx = best_veh;
        }
    } else if (best_sig >= 0) {
        spec.important_idx = best_sig;
    } else {
        spec.important_idx.reset();
    }
    return spec.important_idx;
}

bool is_intention_ambiguous(const SceneSpec& spec) {
    if (spec.layout != Layout::kIntersection) return false;
    SceneSpec probe = spec;
    probe.intention = kStraight;
    const auto straight = importance_rule(probe);
    probe.intention = kLeft;
    const auto left = importance_rule(probe);
    probe.intention = kRight;
    const auto right = importance_rule(probe);
    return straight != left || straight != right;
}

namespace {

struct SizeRange {
    double w_lo, w_hi, h_lo, h_hi;
};

SizeRange size_range(ParticipantClass c) {
    switch (c) {
        case ParticipantClass::kVehicle: return {0.10, 0.18, 0.08, 0.14};
        case ParticipantClass::kPedestrian: return {0.035, 0.060, 0.060, 0.100};
        case ParticipantClass::kSignal: return {0.035, 0.050, 0.060, 0.090};
        case ParticipantClass::kLaneMarker: return {0.025, 0.040, 0.050, 0.090};
    }
    return {0.05, 0.1, 0.05, 0.1};
}

int pick_weighted(RngService& rng, const double* probs, int n) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (int i = 0; i < n; ++i) {
        cum += probs[i];
        if (u < cum) return i;
    }
    return n - 1;
}

Point sample_in_rect(RngService& rng, const Rect& r, double margin) {
    return Point{rng.uniform(r.x0 + margin, r.x1 - margin),
                 rng.uniform(r.y0 + margin, r.y1 - margin)};
}

Point sample_center(RngService& rng, const SceneSpec& spec, ParticipantClass cls) {
    if (spec.layout == Layout::kIntersection) {
        if (cls == ParticipantClass::kSignal) {
            const int branch = rng.uniform_int(4);
            const Point e = branch_entry(branch == 3 ? kStop : branch);
            return Point{e.x + rng.uniform(-0.06, 0.06), e.y + rng.uniform(-0.06, 0.06)};
        }
        const Rect corners[4] = {{0.02, 0.02, kVertX0 - 0.02, kHorzY0 - 0.02},
                                 {kVertX1 + 0.02, 0.02, 0.98, kHorzY0 - 0.02},
                                 {0.02, kHorzY1 + 0.02, kVertX0 - 0.02, 0.98},
                                 {kVertX1 + 0.02, kHorzY1 + 0.02, 0.98, 0.98}};
        if (cls == ParticipantClass::kPedestrian) {
            // left / ahead / right / approach / off-road
            const double probs[5] = {0.22, 0.22, 0.18, 0.08, 0.30};
            switch (pick_weighted(rng, probs, 5)) {
                case 0: return sample_in_rect(rng, kLeftBranch, 0.03);
                case 1: return sample_in_rect(rng, kAheadBranch, 0.03);
                case 2: return sample_in_rect(rng, kRightBranch, 0.03);
                case 3: return sample_in_rect(rng, Rect{kVertX0, kHorzY1, kVertX1, 0.85}, 0.03);
                default: return sample_in_rect(rng, corners[rng.uniform_int(4)], 0.0);
            }
        }
        if (cls == ParticipantClass::kVehicle) {
            const double probs[6] = {0.20, 0.10, 0.15, 0.15, 0.15, 0.25};
            switch (pick_weighted(rng, probs, 6)) {
                case 0: return sample_in_rect(rng, Rect{kVertX0, kHorzY1, kVertX1, 0.85}, 0.04);
                case 1: return sample_in_rect(rng, kCrossing, 0.03);
                case 2: return sample_in_rect(rng, kLeftBranch, 0.04);
                case 3: return sample_in_rect(rng, kAheadBranch, 0.04);
                case 4: return sample_in_rect(rng, kRightBranch, 0.04);
                default: return sample_in_rect(rng, corners[rng.uniform_int(4)], 0.0);
            }
        }
        // lane markers sit near the road edges
        const double x = rng.uniform() < 0.5 ? kVertX0 + rng.uniform(-0.02, 0.02)
                                             : kVertX1 + rng.uniform(-0.02, 0.02);
        return Point{x, rng.uniform(0.55, 0.9)};
    }

    const RoadGeom g = road_geometry(spec.layout);
    const double y = rng.uniform(0.08, 0.88);
    const double hw = g.half_width_at(y);
    if (cls == ParticipantClass::kSignal) {
        const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        return Point{0.5 + side * (hw + rng.uniform(0.0, 0.06)), rng.uniform(0.15, 0.55)};
    }
    if (cls == ParticipantClass::kLaneMarker) {
        const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        return Point{0.5 + side * hw + rng.uniform(-0.01, 0.01), y};
    }
    const double p_inside = cls == ParticipantClass::kVehicle ? 0.55 : 0.40;
    if (rng.uniform() < p_inside) {
        return Point{0.5 + rng.uniform(-0.8, 0.8) * hw, y};
    }
    const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double off = rng.uniform(hw + 0.04, 0.46);
    return Point{0.5 + side * off, y};
}

}  // namespace

SceneSpec sample_scene(RngService& rng, const SynthConfig& cfg, const std::string& id) {
    SceneSpec spec;
    spec.id = id;
    spec.layout = static_cast<Layout>(pick_weighted(rng, cfg.layout_probs, 3));
    spec.lane = build_lane_polygon(spec.layout);
    if (spec.layout == Layout::kIntersection) {
        const double probs[4] = {0.30, 0.30, 0.30, 0.10};  // straight/left/right/stop
        spec.intention = pick_weighted(rng, probs, 4);
    } else {
        const double probs[4] = {0.70, 0.10, 0.10, 0.10};
        spec.intention = pick_weighted(rng, probs, 4);
    }

    const int n = cfg.min_participants +
                  (cfg.max_participants > cfg.min_participants
                       ? rng.uniform_int(cfg.max_participants - cfg.min_participants + 1)
                       : 0);
    int tries = 0;
    while (static_cast<int>(spec.participants.size()) < n) {
        if (++tries > cfg.max_sample_tries) {
            throw std::runtime_error("sample_scene: rejection sampling failed after " +
                                     std::to_string(cfg.max_sample_tries) + " tries");
        }
        Participant p;
        p.cls = static_cast<ParticipantClass>(pick_weighted(rng, cfg.class_probs, 4));
        const SizeRange sr = size_range(p.cls);
        p.box.w = rng.uniform(sr.w_lo, sr.w_hi);
        p.box.h = rng.uniform(sr.h_lo, sr.h_hi);
        const Point c = sample_center(rng, spec, p.cls);
        p.box.cx = std::clamp(c.x, p.box.w / 2 + 0.005, 0.995 - p.box.w / 2);
        p.box.cy = std::clamp(c.y, p.box.h / 2 + 0.005, 0.995 - p.box.h / 2);
        if (p.cls == ParticipantClass::kSignal) p.signal_red = rng.uniform() < cfg.signal_red_prob;

        bool collides = false;
        const BoxXyXy candidate = to_xyxy(p.box);
        for (const auto& other : spec.participants) {
            if (iou(candidate, to_xyxy(other.box)) >= cfg.collision_iou_max) {
                collides = true;
                break;
            }
        }
        if (!collides) spec.participants.push_back(p);
    }
    importance_rule(spec);
    return spec;
}

Tensor render(const SceneSpec& spec, int image_h, int image_w) {
    Tensor img = Tensor::zeros({3, image_h, image_w});
    const size_t plane = static_cast<size_t>(image_h) * image_w;
    auto put = [&](int px, int py, double r, double g, double b) {
        const size_t at = static_cast<size_t>(py) * image_w + px;
        img.data()[at] = r;
        img.data()[plane + at] = g;
        img.data()[2 * plane + at] = b;
    };

    std::vector<char> road(plane, 0);
    for (int py = 0; py < image_h; ++py) {
        for (int px = 0; px < image_w; ++px) {
            const Point p{(px + 0.5) / image_w, (py + 0.5) / image_h};
            road[static_cast<size_t>(py) * image_w + px] =
                point_in_polygon(p, spec.lane) ? 1 : 0;
        }
    }
    for (int py = 0; py < image_h; ++py) {
        for (int px = 0; px < image_w; ++px) {
            if (road[static_cast<size_t>(py) * image_w + px]) {
                bool edge = false;
                if (px > 0 && !road[static_cast<size_t>(py) * image_w + px - 1]) edge = true;
                if (px + 1 < image_w && !road[static_cast<size_t>(py) * image_w + px + 1]) edge = true;
                if (py > 0 && !road[static_cast<size_t>(py - 1) * image_w + px]) edge = true;
                if (py + 1 < image_h && !road[static_cast<size_t>(py + 1) * image_w + px]) edge = true;
                if (edge) put(px, py, 0.92, 0.92, 0.92);
                else put(px, py, 0.43, 0.43, 0.43);
            } else {
                put(px, py, 0.16, 0.31, 0.16);
            }
        }
    }

    auto fill_box = [&](const BoxXyXy& b, double r, double g, double bl) {
        int x0 = std::max(0, static_cast<int>(std::floor(b.x0 * image_w)));
        int y0 = std::max(0, static_cast<int>(std::floor(b.y0 * image_h)));
        int x1 = std::min(image_w, static_cast<int>(std::ceil(b.x1 * image_w)));
        int y1 = std::min(image_h, static_cast<int>(std::ceil(b.y1 * image_h)));
        if (x1 <= x0) x1 = std::min(image_w, x0 + 1);
        if (y1 <= y0) y1 = std::min(image_h, y0 + 1);
        for (int py = y0; py < y1; ++py)
            for (int px = x0; px < x1; ++px) put(px, py, r, g, bl);
    };

    for (const auto& p : spec.participants) {
        const BoxXyXy b = to_xyxy(p.box);
        switch (p.cls) {
            case ParticipantClass::kVehicle:
                fill_box(b, 0.20, 0.30, 0.85);
                break;
            case ParticipantClass::kPedestrian:
                fill_box(b, 0.85, 0.25, 0.30);
                break;
            case ParticipantClass::kLaneMarker:
                fill_box(b, 0.95, 0.95, 0.80);
                break;
            case ParticipantClass::kSignal: {
                fill_box(b, 0.08, 0.08, 0.08);
                BoxXyXy light{p.box.cx - p.box.w * 0.3, b.y0 + p.box.h * 0.12,
                              p.box.cx + p.box.w * 0.3, b.y0 + p.box.h * 0.45};
                if (p.signal_red) fill_box(light, 1.0, 0.08, 0.08);
                else fill_box(light, 0.10, 0.95, 0.15);
                break;
            }
        }
    }
    return img;
}

std::string scene_to_json(const SceneSpec& spec) {
    json j;
    j["id"] = spec.id;
    j["layout"] = layout_name(spec.layout);
    json lane = json::array();
    for (const auto& p : spec.lane) lane.push_back({p.x, p.y});
    j["lane"] = lane;
    j["intention"] = spec.intention;
    json parts = json::array();
    for (const auto& p : spec.participants) {
        json jp;
        jp["cls"] = class_name(p.cls);
        jp["box"] = {p.box.cx, p.box.cy, p.box.w, p.box.h};
        if (p.cls == ParticipantClass::kSignal) jp["red"] = p.signal_red;
        parts.push_back(jp);
    }
    j["participants"] = parts;
    if (spec.important_idx.has_value()) j["important_idx"] = *spec.important_idx;
    else j["important_idx"] = nullptr;
    return j.dump();
}

SceneSpec scene_from_json(const std::string& line) {
    const json j = json::parse(line);
    SceneSpec spec;
    spec.id = j.at("id").get<std::string>();
    spec.layout = layout_from_name(j.at("layout").get<std::string>());
    for (const auto& p : j.at("lane")) spec.lane.push_back(Point{p.at(0), p.at(1)});
    spec.intention = j.at("intention").get<int>();
    for (const auto& jp : j.at("participants")) {
        Participant p;
        p.cls = class_from_name(jp.at("cls").get<std::string>());
        const auto& b = jp.at("box");
        p.box = BoxCxCyWh{b.at(0), b.at(1), b.at(2), b.at(3)};
        p.signal_red = jp.value("red", false);
        spec.participants.push_back(p);
    }
    if (!j.at("important_idx").is_null()) spec.important_idx = j.at("important_idx").get<int>();
    return spec;
}

std::string SynthConfig::to_json() const {
    json j;
    j["layout_probs"] = {layout_probs[0], layout_probs[1], layout_probs[2]};
    j["class_probs"] = {class_probs[0], class_probs[1], class_probs[2], class_probs[3]};
    j["min_participants"] = min_participants;
    j["max_participants"] = max_participants;
    j["collision_iou_max"] = collision_iou_max;
    j["max_sample_tries"] = max_sample_tries;
    j["signal_red_prob"] = signal_red_prob;
    j["signal_distance_threshold"] = signal_distance_threshold;
    j["signal_governs_radius"] = signal_governs_radius;
    j["image_h"] = image_h;
    j["image_w"] = image_w;
    return j.dump();
}

std::string SynthConfig::hash() const {
    // FNV-1a 64
    uint64_t h = 1469598103934665603ULL;
    for (char c : to_json()) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

const std::vector<size_t>& Dataset::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw std::invalid_argument("unknown split: " + name);
}

void write_dataset(const std::vector<SceneSpec>& scenes, const std::string& dir, uint64_t seed,
                   const SynthConfig& cfg) {
    fs::create_directories(fs::path(dir) / "images");
    std::ofstream ann(fs::path(dir) / "annotations.jsonl");
    if (!ann) throw std::runtime_error("write_dataset: cannot open annotations.jsonl");
    for (const auto& spec : scenes) {
        ann << scene_to_json(spec) << "\n";
        write_ppm((fs::path(dir) / "images" / (spec.id + ".ppm")).string(),
                  render(spec, cfg.image_h, cfg.image_w));
    }
    ann.close();

    // 70:15:15 split over shuffled ids, disjoint by construction.
    std::vector<size_t> order(scenes.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngService split_rng = RngService::for_stream(seed, 0xDA7A5E7ULL);
    split_rng.shuffle(order);
    const size_t n_train = scenes.size() * 70 / 100;
    const size_t n_val = scenes.size() * 15 / 100;
    json splits;
    json train = json::array(), val = json::array(), test = json::array();
    for (size_t i = 0; i < order.size(); ++i) {
        const std::string& id = scenes[order[i]].id;
        if (i < n_train) train.push_back(id);
        else if (i < n_train + n_val) val.push_back(id);
        else test.push_back(id);
    }
    splits["train"] = train;
    splits["val"] = val;
    splits["test"] = test;

    json manifest;
    manifest["n"] = scenes.size();
    manifest["seed"] = seed;
    manifest["generator_config"] = json::parse(cfg.to_json());
    manifest["generator_config_hash"] = cfg.hash();
    manifest["splits"] = splits;
    std::ofstream mf(fs::path(dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    if (!mf) throw std::runtime_error("write_dataset: cannot write manifest.json");
}

Dataset read_dataset(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("read_dataset: cannot open manifest.json in " + dir);
    const json manifest = json::parse(mf);

    Dataset ds;
    ds.dir = dir;
    ds.seed = manifest.at("seed").get<uint64_t>();
    ds.generator_hash = manifest.at("generator_config_hash").get<std::string>();

    std::ifstream ann(fs::path(dir) / "annotations.jsonl");
    if (!ann) throw std::runtime_error("read_dataset: cannot open annotations.jsonl");
    std::string line;
    int line_no = 0;
    std::map<std::string, size_t> index_of;
    while (std::getline(ann, line)) {
        ++line_no;
        if (line.empty()) continue;
        SceneRecord rec;
        try {
            rec.spec = scene_from_json(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("annotations.jsonl line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
        rec.image_path = (fs::path(dir) / "images" / (rec.spec.id + ".ppm")).string();
        index_of[rec.spec.id] = ds.scenes.size();
        ds.scenes.push_back(std::move(rec));
    }
    if (ds.scenes.size() != manifest.at("n").get<size_t>()) {
        throw std::runtime_error("read_dataset: manifest n does not match annotation count");
    }
    auto resolve = [&](const json& ids, std::vector<size_t>& out) {
        for (const auto& id : ids) {
            const auto it = index_of.find(id.get<std::string>());
            if (it == index_of.end()) {
                throw std::runtime_error("read_dataset: split references unknown scene " +
                                         id.get<std::string>());
            }
            out.push_back(it->second);
        }
    };
    resolve(manifest.at("splits").at("train"), ds.train);
    resolve(manifest.at("splits").at("val"), ds.val);
    resolve(manifest.at("splits").at("test"), ds.test);
    return ds;
}

void generate_dataset(const std::string& dir, int n, uint64_t seed, const SynthConfig& cfg) {
    if (n <= 0) throw std::invalid_argument("generate_dataset: n must be positive");
    if (cfg.signal_distance_threshold != kSignalDistanceThreshold ||
        cfg.signal_governs_radius != kSignalGovernsRadius) {
        throw std::invalid_argument(
            "generate_dataset: signal thresholds are fixed by the labeling rules");
    }
    std::vector<SceneSpec> scenes;
    scenes.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof(id), "scene_%06d", i);
        RngService rng = RngService::for_stream(seed, static_cast<uint64_t>(i));
        scenes.push_back(sample_scene(rng, cfg, id));
    }
    write_dataset(scenes, dir, seed, cfg);
}

}  // namespace druformer
