#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace afht {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

using Quad = std::array<Point2, 4>;

// Row-major H x W grid of reals. Used for heatmaps, logits and targets.
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return values.size(); }
};

struct PromptTriplet {
  std::string surgery;
  std::string tool;
  std::string action;
  friend auto operator<=>(const PromptTriplet&, const PromptTriplet&) = default;
};

struct ToolAction {
  const char* tool;
  const char* action;
};

// The closed tool-action vocabulary.
inline constexpr std::array<ToolAction, 6> kToolActionPairs{{
    {"hook", "dissect"},
    {"grasper", "dissect"},
    {"scissors", "dissect"},
    {"grasper", "grasp"},
    {"clipper", "clip"},
    {"scissors", "cut"},
}};

bool is_known_tool_action(const std::string& tool, const std::string& action);

}  // namespace afht
