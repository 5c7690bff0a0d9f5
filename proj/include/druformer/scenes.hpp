#pragma once

#include <optional>
#include <string>
#include <vector>

#include "druformer/geometry.hpp"
#include "druformer/tensor.hpp"

namespace druformer {

enum class Layout { kWideRoad, kNarrowRoad, kIntersection };
enum class ParticipantClass { kVehicle = 0, kPedestrian = 1, kSignal = 2, kLaneMarker = 3 };

const char* layout_name(Layout l);
Layout layout_from_name(const std::string& name);
const char* class_name(ParticipantClass c);
ParticipantClass class_from_name(const std::string& name);
inline constexpr int kNumClasses = 4;

struct Participant {
    ParticipantClass cls = ParticipantClass::kVehicle;
    BoxCxCyWh box;
    bool signal_red = false;  // meaningful for signals only
};

struct Point {
    double x = 0, y = 0;
};

struct SceneSpec {
    std::string id;
    Layout layout = Layout::kWideRoad;
    std::vector<Point> lane;  // drivable-region polygon, normalized coords
    std::vector<Participant> participants;
    int intention = 0;  // canonical intention id
    std::optional<int> important_idx;
};

// Ego-vehicle viewpoint at the bottom-center of the forward frame.
inline constexpr Point kEgoPoint{0.5, 0.95};

struct SynthConfig {
    // wide, narrow, intersection
    double layout_probs[3] = {0.515, 0.159, 0.326};
    // vehicle, pedestrian, signal, lane-marker
    double class_probs[4] = {0.719, 0.196, 0.0425, 0.0425};
    int min_participants = 2;
    int max_participants = 8;
    double collision_iou_max = 0.1;
    int max_sample_tries = 1000;
    double signal_red_prob = 0.5;
    double signal_distance_threshold = 0.5;  // red signal outranks vehicles beyond this
    double signal_governs_radius = 0.18;
    int image_h = 128;
    int image_w = 128;

    std::string to_json() const;
    std::string hash() const;
};

bool point_in_polygon(const Point& p, const std::vector<Point>& poly);

// Intention-conditional drivable region: on roads the lane itself; at
// intersections the approach plus the crossing and the commanded branch.
bool in_intention_path(const SceneSpec& spec, const Point& p, int intention);

// Draws layout, intention, and collision-free participants; labels the
// important object via importance_rule. Deterministic given the rng state.
SceneSpec sample_scene(RngService& rng, const SynthConfig& cfg, const std::string& id);

// Deterministic rule cascade over (geometry, intention); returns the label
// and stores it in the spec.
std::optional<int> importance_rule(SceneSpec& spec);

// True when re-labeling with a different direction command changes the
// important object (Fig-1(b)-style scenes); intersections only.
bool is_intention_ambiguous(const SceneSpec& spec);

// Flat-color rasterization; [3 x H x W] in [0,1], deterministic.
Tensor render(const SceneSpec& spec, int image_h = 128, int image_w = 128);

struct SceneRecord {
    SceneSpec spec;
    std::string image_path;
};

struct Dataset {
    std::string dir;
    uint64_t seed = 0;
    std::string generator_hash;
    std::vector<SceneRecord> scenes;              // ordered by id
    std::vector<size_t> train, val, test;         // indices into scenes

    const std::vector<size_t>& split(const std::string& name) const;
};

// Directory layout: manifest.json, images/{id}.ppm, annotations.jsonl.
void write_dataset(const std::vector<SceneSpec>& scenes, const std::string& dir, uint64_t seed,
                   const SynthConfig& cfg);
Dataset read_dataset(const std::string& dir);

// Scene JSON (one annotations.jsonl line) round-trip.
std::string scene_to_json(const SceneSpec& spec);
SceneSpec scene_from_json(const std::string& line);

// Generates n scenes with per-scene rng streams and writes the dataset.
void generate_dataset(const std::string& dir, int n, uint64_t seed, const SynthConfig& cfg);

}  // namespace druformer
