#include "jumpy/env.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "jumpy/errors.h"

namespace jumpy::env {
namespace {

// Resting heights are produced by exact additions, so equality checks only
// need to absorb nothing more than representation noise.
constexpr double kHeightTolerance = 1e-9;

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

double distance(double ax, double ay, double bx, double by) { return std::hypot(ax - bx, ay - by); }

EnvAction move_toward(const EnvState& s, double x, double y, double dap) {
  return {clamp_unit(kControllerGain * (x - s.gripper_x)),
          clamp_unit(kControllerGain * (y - s.gripper_y)), dap};
}

bool on_top_of(const ObjectState& upper, const ObjectState& lower) {
  return !upper.held && !lower.held && std::abs(upper.x - lower.x) < kSupportHalfWidth &&
         std::abs(upper.y - (lower.y + kStackHeight)) <= kHeightTolerance;
}

// Objects resting (transitively) on the ground.
std::array<bool, kObjectCount> grounded_objects(const EnvState& s) {
  std::array<bool, kObjectCount> grounded{};
  for (int i = 0; i < kObjectCount; ++i) {
    grounded[i] = !s.objects[i].held && std::abs(s.objects[i].y - kGroundY) <= kHeightTolerance;
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (int i = 0; i < kObjectCount; ++i) {
      if (grounded[i] || s.objects[i].held) continue;
      for (int j = 0; j < kObjectCount; ++j) {
        if (j != i && grounded[j] && on_top_of(s.objects[i], s.objects[j])) {
          grounded[i] = true;
          changed = true;
          break;
        }
      }
    }
  }
  return grounded;
}

// Drops every unsupported, non-held object, lowest first, onto the topmost
// grounded object within the support half-width, or onto the ground.
void settle(EnvState& s) {
  for (int iteration = 0; iteration < kObjectCount; ++iteration) {
    const auto grounded = grounded_objects(s);
    int falling = -1;
    for (int i = 0; i < kObjectCount; ++i) {
      if (s.objects[i].held || grounded[i]) continue;
      if (falling < 0 || s.objects[i].y < s.objects[falling].y) falling = i;
    }
    if (falling < 0) return;
    ObjectState& obj = s.objects[falling];
    double rest_y = kGroundY;
    for (int j = 0; j < kObjectCount; ++j) {
      if (j == falling || !grounded[j]) continue;
      if (std::abs(obj.x - s.objects[j].x) < kSupportHalfWidth) {
        rest_y = std::max(rest_y, s.objects[j].y + kStackHeight);
      }
    }
    obj.y = rest_y;
  }
}

}  // namespace

std::optional<Color> EnvState::held_object() const {
  for (int i = 0; i < kObjectCount; ++i) {
    if (objects[i].held) return static_cast<Color>(i);
  }
  return std::nullopt;
}

StateVector EnvState::to_vector() const {
  StateVector v{};
  v[0] = gripper_x;
  v[1] = gripper_y;
  v[2] = aperture;
  for (int i = 0; i < kObjectCount; ++i) {
    v[3 + 3 * i] = objects[i].held ? 1.0 : 0.0;
    v[4 + 3 * i] = objects[i].x;
    v[5 + 3 * i] = objects[i].y;
  }
  return v;
}

EnvState EnvState::from_vector(std::span<const double> v) {
  if (v.size() != kStateDim) throw ShapeError("EnvState::from_vector: expected 12 entries");
  EnvState s;
  s.gripper_x = v[0];
  s.gripper_y = v[1];
  s.aperture = v[2];
  for (int i = 0; i < kObjectCount; ++i) {
    s.objects[i].held = v[3 + 3 * i] > 0.5;
    s.objects[i].x = v[4 + 3 * i];
    s.objects[i].y = v[5 + 3 * i];
  }
  return s;
}

EnvAction EnvAction::from_vector(std::span<const double> v) {
  if (v.size() != kActionDim) throw ShapeError("EnvAction::from_vector: expected 3 entries");
  return {v[0], v[1], v[2]};
}

EnvAction EnvAction::clamped() const { return {clamp_unit(dx), clamp_unit(dy), clamp_unit(dap)}; }

EnvState reset(std::uint64_t seed) {
  RandomStream rng(seed);
  EnvState s;
  s.gripper_x = rng.uniform(-0.8, 0.8);
  s.gripper_y = rng.uniform(0.2, 0.6);
  s.aperture = 1.0;
  for (int i = 0; i < kObjectCount; ++i) {
    double x = 0.0;
    bool ok = false;
    while (!ok) {
      x = rng.uniform(-0.8, 0.8);
      ok = true;
      for (int j = 0; j < i; ++j) {
        if (std::abs(x - s.objects[j].x) < kMinObjectSeparation) ok = false;
      }
    }
    s.objects[i] = ObjectState{x, kGroundY, false};
  }
  return s;
}

EnvState step(const EnvState& state, const EnvAction& action, RandomStream* noise_rng,
              double noise_std) {
  if (!std::isfinite(action.dx) || !std::isfinite(action.dy) || !std::isfinite(action.dap)) {
    throw DomainError("env::step: non-finite action");
  }
  const EnvAction a = action.clamped();
  EnvState s = state;

  s.gripper_x = std::clamp(s.gripper_x + kMoveScale * a.dx, kWorldMinX, kWorldMaxX);
  s.gripper_y = std::clamp(s.gripper_y + kMoveScale * a.dy, kWorldMinY, kWorldMaxY);
  if (noise_rng != nullptr) {
    const double nx = noise_std * noise_rng->gaussian();
    const double ny = noise_std * noise_rng->gaussian();
    s.gripper_x = std::clamp(s.gripper_x + nx, kWorldMinX, kWorldMaxX);
    s.gripper_y = std::clamp(s.gripper_y + ny, kWorldMinY, kWorldMaxY);
  }
  s.aperture = std::clamp(s.aperture + kApertureScale * a.dap, 0.0, 1.0);

  const std::optional<Color> held = s.held_object();
  if (held && s.aperture > kReleaseAperture) {
    s.object(*held).held = false;
  } else if (!held && s.aperture < kGraspAperture) {
    int nearest = -1;
    double best = kGraspRadius;
    for (int i = 0; i < kObjectCount; ++i) {
      const double d = distance(s.gripper_x, s.gripper_y, s.objects[i].x, s.objects[i].y);
      if (d <= best) {
        best = d;
        nearest = i;
      }
    }
    if (nearest >= 0) s.objects[nearest].held = true;
  }
  for (ObjectState& obj : s.objects) {
    if (obj.held) {
      obj.x = s.gripper_x;
      obj.y = s.gripper_y;
    }
  }
  settle(s);
  return s;
}

bool rests_on(const EnvState& state, Color c, Color d) {
  if (c == d) return false;
  return on_top_of(state.object(c), state.object(d));
}

TaskSpec task_spec(TaskId id) {
  TaskSpec t;
  t.id = id;
  switch (id) {
    case TaskId::kReachRed:
      t.kind = TaskKind::kReach, t.subject = Color::kRed, t.scale = 0.5;
      break;
    case TaskId::kReachGreen:
      t.kind = TaskKind::kReach, t.subject = Color::kGreen, t.scale = 0.5;
      break;
    case TaskId::kLiftRed:
      t.kind = TaskKind::kLift, t.subject = Color::kRed, t.scale = 0.35;
      break;
    case TaskId::kLiftGreen:
      t.kind = TaskKind::kLift, t.subject = Color::kGreen, t.scale = 0.35;
      break;
    case TaskId::kRedHoverBlue:
      t.kind = TaskKind::kHover, t.subject = Color::kRed, t.reference = Color::kBlue;
      t.offset_y = 0.15, t.scale = 0.3;
      break;
    case TaskId::kRedHoverGreen:
      t.kind = TaskKind::kHover, t.subject = Color::kRed, t.reference = Color::kGreen;
      t.offset_y = 0.15, t.scale = 0.3;
      break;
    case TaskId::kRedStackBlue:
      t.kind = TaskKind::kStack, t.subject = Color::kRed, t.reference = Color::kBlue;
      t.offset_y = kStackHeight, t.scale = 0.3;
      break;
    case TaskId::kRedStackGreen:
      t.kind = TaskKind::kStack, t.subject = Color::kRed, t.reference = Color::kGreen;
      t.offset_y = kStackHeight, t.scale = 0.3;
      break;
    case TaskId::kBringRed:
      t.kind = TaskKind::kBring, t.subject = Color::kRed;
      t.target_x = 0.6, t.target_y = kGroundY, t.scale = 0.5;
      break;
    default:
      throw DomainError("unknown task id " + std::to_string(static_cast<int>(id)));
  }
  return t;
}

std::string_view task_name(TaskId id) {
  switch (id) {
    case TaskId::kReachRed: return "reach_red";
    case TaskId::kLiftRed: return "lift_red";
    case TaskId::kRedHoverBlue: return "red_hover_blue";
    case TaskId::kRedStackBlue: return "red_stack_blue";
    case TaskId::kRedHoverGreen: return "red_hover_green";
    case TaskId::kRedStackGreen: return "red_stack_green";
    case TaskId::kBringRed: return "bring_red";
    case TaskId::kReachGreen: return "reach_green";
    case TaskId::kLiftGreen: return "lift_green";
  }
  throw DomainError("unknown task id " + std::to_string(static_cast<int>(id)));
}

TaskId parse_task(std::string_view name) {
  for (TaskId id : all_tasks()) {
    if (task_name(id) == name) return id;
  }
  throw DomainError("unknown task: " + std::string(name));
}

std::array<TaskId, kTaskCount> all_tasks() {
  return {TaskId::kReachRed,      TaskId::kLiftRed,       TaskId::kRedHoverBlue,
          TaskId::kRedStackBlue,  TaskId::kRedHoverGreen, TaskId::kRedStackGreen,
          TaskId::kBringRed,      TaskId::kReachGreen,    TaskId::kLiftGreen};
}

bool is_in_distribution(TaskId id) {
  return id == TaskId::kReachRed || id == TaskId::kLiftRed || id == TaskId::kRedHoverBlue;
}

double reward(const TaskSpec& task, const EnvState& s) {
  const ObjectState& subject = s.object(task.subject);
  auto shaped = [&](double d) { return std::max(0.0, 1.0 - d / task.scale); };
  switch (task.kind) {
    case TaskKind::kReach:
      return shaped(distance(s.gripper_x, s.gripper_y, subject.x, subject.y));
    case TaskKind::kLift:
      return std::clamp((subject.y - kGroundY) / task.scale, 0.0, 1.0);
    case TaskKind::kHover: {
      const ObjectState& ref = s.object(task.reference);
      return shaped(distance(subject.x, subject.y, ref.x, ref.y + task.offset_y));
    }
    case TaskKind::kStack: {
      const ObjectState& ref = s.object(task.reference);
      const double near = shaped(distance(subject.x, subject.y, ref.x, ref.y + task.offset_y));
      const double placed = rests_on(s, task.subject, task.reference) ? 1.0 : 0.0;
      return 0.5 * near + 0.5 * placed;
    }
    case TaskKind::kBring:
      return shaped(distance(subject.x, subject.y, task.target_x, task.target_y));
  }
  throw DomainError("reward: unknown task kind");
}

std::string_view policy_name(BasePolicyId id) {
  switch (id) {
    case BasePolicyId::kOpenFingers: return "open_fingers";
    case BasePolicyId::kCloseFingers: return "close_fingers";
    case BasePolicyId::kReachRed: return "reach_red";
    case BasePolicyId::kLiftRed: return "lift_red";
    case BasePolicyId::kRedHoverBlue: return "red_hover_blue";
    case BasePolicyId::kMovePinchXInc: return "move_pinch_x_inc";
    case BasePolicyId::kMovePinchXDec: return "move_pinch_x_dec";
    case BasePolicyId::kMovePinchYInc: return "move_pinch_y_inc";
    case BasePolicyId::kMovePinchYDec: return "move_pinch_y_dec";
  }
  throw DomainError("unknown base policy id " + std::to_string(static_cast<int>(id)));
}

BasePolicyId policy_from_index(int index) {
  if (index < 0 || index >= kBasePolicyCount) {
    throw DomainError("base policy index out of range: " + std::to_string(index));
  }
  return static_cast<BasePolicyId>(index);
}

BasePolicyId parse_policy(std::string_view name) {
  for (int i = 0; i < kBasePolicyCount; ++i) {
    if (policy_name(policy_from_index(i)) == name) return policy_from_index(i);
  }
  throw DomainError("unknown base policy: " + std::string(name));
}

EnvAction scripted_reach_action(const EnvState& s, Color target) {
  const ObjectState& obj = s.object(target);
  return move_toward(s, obj.x, obj.y, 0.0);
}

namespace {

EnvAction lift_red_action(const EnvState& s) {
  const ObjectState& red = s.object(Color::kRed);
  if (red.held) return move_toward(s, s.gripper_x, 0.45, -1.0);
  if (s.held_object()) return move_toward(s, red.x, red.y, 1.0);  // let go of the wrong object
  const bool close_enough = distance(s.gripper_x, s.gripper_y, red.x, red.y) <= kGraspRadius;
  return move_toward(s, red.x, red.y, close_enough ? -1.0 : 1.0);
}

EnvAction red_hover_blue_action(const EnvState& s) {
  const ObjectState& red = s.object(Color::kRed);
  const ObjectState& blue = s.object(Color::kBlue);
  const double target_x = blue.x;
  const double target_y = blue.y + 0.15;
  const bool aligned = std::abs(s.gripper_x - target_x) < kSupportHalfWidth;
  if (red.held && (red.y >= 0.3 || aligned)) {
    // Travel high, descend once over the target.
    const double goal_y = aligned ? target_y : std::max(target_y, 0.45);
    return move_toward(s, target_x, goal_y, -1.0);
  }
  return lift_red_action(s);
}

}  // namespace

EnvAction base_policy_action(BasePolicyId id, const EnvState& s) {
  switch (id) {
    case BasePolicyId::kOpenFingers: return {0.0, 0.0, 1.0};
    case BasePolicyId::kCloseFingers: return {0.0, 0.0, -1.0};
    case BasePolicyId::kReachRed: return scripted_reach_action(s, Color::kRed);
    case BasePolicyId::kLiftRed: return lift_red_action(s);
    case BasePolicyId::kRedHoverBlue: return red_hover_blue_action(s);
    case BasePolicyId::kMovePinchXInc: return {1.0, 0.0, 0.0};
    case BasePolicyId::kMovePinchXDec: return {-1.0, 0.0, 0.0};
    case BasePolicyId::kMovePinchYInc: return {0.0, 1.0, 0.0};
    case BasePolicyId::kMovePinchYDec: return {0.0, -1.0, 0.0};
  }
  throw DomainError("unknown base policy id " + std::to_string(static_cast<int>(id)));
}

std::optional<BasePolicyId> reference_policy(TaskId id) {
  switch (id) {
    case TaskId::kReachRed: return BasePolicyId::kReachRed;
    case TaskId::kLiftRed: return BasePolicyId::kLiftRed;
    case TaskId::kRedHoverBlue: return BasePolicyId::kRedHoverBlue;
    default: return std::nullopt;
  }
}

}  // namespace jumpy::env
