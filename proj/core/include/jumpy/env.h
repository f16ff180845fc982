#ifndef JUMPY_ENV_H_
#define JUMPY_ENV_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include "jumpy/random.h"

// Deterministic 2D grasp-and-place world: a gripper moving in the x-y plane
// (x in [-1, 1], y in [0, 1]) with an aperture in [0, 1], and three objects
// (red, green, blue) that rest on the ground or stacked on each other.
namespace jumpy::env {

inline constexpr int kStateDim = 12;
inline constexpr int kActionDim = 3;
inline constexpr int kObjectCount = 3;

inline constexpr double kWorldMinX = -1.0;
inline constexpr double kWorldMaxX = 1.0;
inline constexpr double kWorldMinY = 0.0;
inline constexpr double kWorldMaxY = 1.0;
inline constexpr double kGroundY = 0.05;
inline constexpr double kStackHeight = 0.10;
inline constexpr double kMoveScale = 0.05;
inline constexpr double kApertureScale = 0.2;
inline constexpr double kGraspRadius = 0.06;
inline constexpr double kGraspAperture = 0.3;
inline constexpr double kReleaseAperture = 0.7;
inline constexpr double kSupportHalfWidth = 0.05;
inline constexpr double kMinObjectSeparation = 0.15;
inline constexpr double kMotionNoiseStd = 0.005;
inline constexpr double kControllerGain = 5.0;

using StateVector = std::array<double, kStateDim>;
using ActionVector = std::array<double, kActionDim>;

// Index order matches the state-vector layout: red, green, blue.
enum class Color : int { kRed = 0, kGreen = 1, kBlue = 2 };

struct ObjectState {
  double x = 0.0;
  double y = kGroundY;
  bool held = false;

  bool operator==(const ObjectState&) const = default;
};

struct EnvState {
  double gripper_x = 0.0;
  double gripper_y = 0.5;
  double aperture = 1.0;
  std::array<ObjectState, kObjectCount> objects{};

  const ObjectState& object(Color c) const { return objects[static_cast<int>(c)]; }
  ObjectState& object(Color c) { return objects[static_cast<int>(c)]; }
  std::optional<Color> held_object() const;

  // [gx, gy, ap, held_r, rx, ry, held_g, gx_g, gy_g, held_b, bx, by]
  StateVector to_vector() const;
  static EnvState from_vector(std::span<const double> v);

  bool operator==(const EnvState&) const = default;
};

struct EnvAction {
  double dx = 0.0;
  double dy = 0.0;
  double dap = 0.0;

  ActionVector to_vector() const { return {dx, dy, dap}; }
  static EnvAction from_vector(std::span<const double> v);
  // Components clamped to [-1, 1].
  EnvAction clamped() const;
};

// Initial-state distribution: gripper x ~ U[-0.8, 0.8], y ~ U[0.2, 0.6],
// aperture 1; objects on the ground at x in [-0.8, 0.8], pairwise >= 0.15 apart.
EnvState reset(std::uint64_t seed);

// One transition. `noise_rng` enables Gaussian motion noise on the gripper
// position (pass nullptr to disable). Throws DomainError on non-finite actions.
EnvState step(const EnvState& state, const EnvAction& action, RandomStream* noise_rng,
              double noise_std = kMotionNoiseStd);

// `c` is not held and sits exactly on top of non-held `d`.
bool rests_on(const EnvState& state, Color c, Color d);

// --- tasks ---------------------------------------------------------------

enum class TaskId : int {
  kReachRed,
  kLiftRed,
  kRedHoverBlue,
  kRedStackBlue,
  kRedHoverGreen,
  kRedStackGreen,
  kBringRed,
  kReachGreen,
  kLiftGreen,
};
inline constexpr int kTaskCount = 9;

enum class TaskKind { kReach, kLift, kHover, kStack, kBring };

struct TaskSpec {
  TaskId id = TaskId::kReachRed;
  TaskKind kind = TaskKind::kReach;
  Color subject = Color::kRed;
  Color reference = Color::kRed;  // hover/stack support object
  double target_x = 0.0;          // bring target
  double target_y = 0.0;
  double offset_y = 0.0;          // hover/stack height above reference
  double scale = 0.5;             // distance at which shaped reward reaches 0
};

TaskSpec task_spec(TaskId id);
std::string_view task_name(TaskId id);
TaskId parse_task(std::string_view name);
std::array<TaskId, kTaskCount> all_tasks();
// Behaviour for the task exists in the offline data (reach_red, lift_red,
// red_hover_blue).
bool is_in_distribution(TaskId id);

// Shaped reward in [0, 1].
double reward(const TaskSpec& task, const EnvState& state);

// --- scripted base policies ----------------------------------------------

enum class BasePolicyId : int {
  kOpenFingers,
  kCloseFingers,
  kReachRed,
  kLiftRed,
  kRedHoverBlue,
  kMovePinchXInc,
  kMovePinchXDec,
  kMovePinchYInc,
  kMovePinchYDec,
};
inline constexpr int kBasePolicyCount = 9;

std::string_view policy_name(BasePolicyId id);
BasePolicyId parse_policy(std::string_view name);
BasePolicyId policy_from_index(int index);

EnvAction base_policy_action(BasePolicyId id, const EnvState& state);

// Proportional reach toward any object (reach_green reference; not part of
// the data-collection roster).
EnvAction scripted_reach_action(const EnvState& state, Color target);

// Base policy that demonstrates an in-distribution task; nullopt otherwise.
std::optional<BasePolicyId> reference_policy(TaskId id);

}  // namespace jumpy::env

#endif  // JUMPY_ENV_H_
