#ifndef JUMPY_TOOLS_SVG_H_
#define JUMPY_TOOLS_SVG_H_

#include <span>
#include <string>

#include "jumpy/harness.h"

namespace jumpy::cli {

// Planned score and obtained reward against the episode step.
std::string trace_svg(std::span<const harness::TraceRow> trace, const std::string& title);

// Top-down view of the gripper path with initial and final object positions.
std::string trajectory_svg(std::span<const env::EnvState> states, const std::string& title);

}  // namespace jumpy::cli

#endif  // JUMPY_TOOLS_SVG_H_
