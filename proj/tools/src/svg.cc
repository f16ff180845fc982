#include "svg.h"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace jumpy::cli {
namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 360;
constexpr double kLeft = 56;
constexpr double kRight = 16;
constexpr double kTop = 36;
constexpr double kBottom = 44;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void open_svg(std::ostringstream& os, const std::string& title) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n";
}

void axes(std::ostringstream& os, double x_max, double y_min, double y_max, const std::string& x_label,
          const std::string& y_label, double x_min = 0.0) {
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  os << "<g stroke=\"black\" stroke-width=\"1\">\n"
     << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\"/>\n"
     << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\"/>\n"
     << "</g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0;
    const double fy = y0 - (y0 - y1) * i / 4.0;
    os << "<text x=\"" << num(fx) << "\" y=\"" << num(y0 + 16) << "\" text-anchor=\"middle\">"
       << num(x_min + (x_max - x_min) * i / 4.0) << "</text>\n"
       << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(fy + 4) << "\" text-anchor=\"end\">"
       << num(y_min + (y_max - y_min) * i / 4.0) << "</text>\n";
  }
  os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 8 << "\" text-anchor=\"middle\">"
     << escape(x_label) << "</text>\n"
     << "<text x=\"14\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << (y0 + y1) / 2 << ")\">" << escape(y_label) << "</text>\n";
}

struct Frame {
  double x_min, x_max, y_min, y_max;
  double px(double x) const { return kLeft + (x - x_min) / (x_max - x_min) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y_min) / (y_max - y_min) * (kHeight - kTop - kBottom); }
};

void legend(std::ostringstream& os, int row, const char* color, const std::string& label) {
  const double x = kWidth - kRight - 150;
  const double y = kTop + 8 + 16 * row;
  os << "<line x1=\"" << x << "\" y1=\"" << y << "\" x2=\"" << x + 20 << "\" y2=\"" << y << "\" stroke=\"" << color
     << "\" stroke-width=\"2\"/>\n"
     << "<text x=\"" << x + 26 << "\" y=\"" << y + 4 << "\">" << escape(label) << "</text>\n";
}

}  // namespace

std::string trace_svg(std::span<const harness::TraceRow> trace, const std::string& title) {
  double y_max = 4.0;
  for (const auto& r : trace) y_max = std::max({y_max, r.planned_score, r.reward});
  const double x_max = std::max<double>(1.0, static_cast<double>(trace.size()));
  const Frame f{0.0, x_max, 0.0, y_max};
  std::ostringstream os;
  open_svg(os, title);
  axes(os, x_max, 0.0, y_max, "step", "value");
  auto polyline = [&](const char* color, auto value) {
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& r : trace) os << num(f.px(r.step)) << ',' << num(f.py(value(r))) << ' ';
    os << "\"/>\n";
  };
  polyline("#1f77b4", [](const harness::TraceRow& r) { return r.planned_score; });
  polyline("#d62728", [](const harness::TraceRow& r) { return r.reward; });
  legend(os, 0, "#1f77b4", "planned score");
  legend(os, 1, "#d62728", "obtained reward");
  os << "</svg>\n";
  return os.str();
}

std::string trajectory_svg(std::span<const env::EnvState> states, const std::string& title) {
  const Frame f{env::kWorldMinX, env::kWorldMaxX, env::kWorldMinY, env::kWorldMaxY};
  std::ostringstream os;
  open_svg(os, title);
  axes(os, env::kWorldMaxX, env::kWorldMinY, env::kWorldMaxY, "x", "y", env::kWorldMinX);
  os << "<polyline fill=\"none\" stroke=\"#555555\" stroke-width=\"1\" points=\"";
  for (const auto& s : states) os << num(f.px(s.gripper_x)) << ',' << num(f.py(s.gripper_y)) << ' ';
  os << "\"/>\n";
  static constexpr const char* kColors[] = {"#d62728", "#2ca02c", "#1f77b4"};
  if (!states.empty()) {
    for (int i = 0; i < env::kObjectCount; ++i) {
      const auto& a = states.front().objects[static_cast<std::size_t>(i)];
      const auto& b = states.back().objects[static_cast<std::size_t>(i)];
      os << "<circle cx=\"" << num(f.px(a.x)) << "\" cy=\"" << num(f.py(a.y)) << "\" r=\"6\" fill=\"none\" stroke=\""
         << kColors[i] << "\" stroke-width=\"2\"/>\n"
         << "<circle cx=\"" << num(f.px(b.x)) << "\" cy=\"" << num(f.py(b.y)) << "\" r=\"6\" fill=\"" << kColors[i]
         << "\"/>\n";
    }
  }
  legend(os, 0, "#555555", "gripper path");
  legend(os, 1, "#d62728", "red (hollow: start)");
  legend(os, 2, "#2ca02c", "green");
  legend(os, 3, "#1f77b4", "blue");
  os << "</svg>\n";
  return os.str();
}

}  // namespace jumpy::cli
