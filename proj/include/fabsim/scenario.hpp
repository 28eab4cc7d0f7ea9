#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fabsim/mesh.hpp"

namespace fabsim {

enum class ScenarioKind { lifting, stretching, wind, folding, fling, shaking };

std::string_view to_string(ScenarioKind kind);
ScenarioKind parse_scenario_kind(std::string_view name);
const std::vector<ScenarioKind>& all_scenario_kinds();

// How the rest mesh is embedded in 3D at t = 0: lying in the z = 0 plane, or
// hanging in the x-z plane with the top edge at z = side.
enum class Placement { flat, vertical };

struct Keyframe {
    double t = 0.0;
    Vec3 position = Vec3::Zero();
};

// A gripper holding a named node set. Keyframes give the absolute position of
// the set's centroid; the nodes follow rigidly (translation only).
struct Handle {
    std::string region;
    std::vector<Keyframe> keyframes;
};

struct WindForce {
    double force_per_area = 0.0;  // N/m^2
    std::string region = "central_region";
    Vec3 direction = Vec3::UnitY();
};

struct Scenario {
    ScenarioKind kind = ScenarioKind::lifting;
    double duration = 4.0;
    double output_rate = 15.0;
    std::vector<Handle> handles;
    Vec3 gravity = Vec3::Zero();
    std::optional<WindForce> wind;
    double damping = 0.5;  // 1/s
    Placement placement = Placement::flat;
    // Kinematic support plane z >= table_height: inelastic normal contact
    // with Coulomb friction scaled by the normal impulse.
    std::optional<double> table_height;
    double table_friction = 0.5;
};

void validate(const Scenario& s, const ClothMesh& mesh);

// Named template parameters; any key not listed in scenario_parameter_defaults
// for the kind is rejected.
using ScenarioParams = std::map<std::string, double, std::less<>>;

const ScenarioParams& scenario_parameter_defaults(ScenarioKind kind);

Scenario make_scenario(ScenarioKind kind, const ScenarioParams& params, const ClothMesh& mesh);

// Rest mesh embedded according to the placement.
std::vector<Vec3> initial_positions(const ClothMesh& mesh, Placement placement);

// Piecewise-linear interpolation, clamped before the first and after the last
// keyframe.
Vec3 interpolate_keyframes(const std::vector<Keyframe>& keys, double t);

}  // namespace fabsim
