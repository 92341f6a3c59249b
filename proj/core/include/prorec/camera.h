#pragma once

#include <torch/torch.h>

#include <nlohmann/json_fwd.hpp>

namespace prorec {

/// Orbit camera: looks at the world origin from (azimuth, elevation, distance),
/// y-up, square perspective frustum.
struct Camera {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double distance = 2.5;
  double fov_deg = 40.0;
  int64_t image_size = 128;

  static constexpr double kNearPlane = 1e-3;

  void validate() const;

  // Camera position in world space, [3] float64.
  torch::Tensor eye() const;
  // World->camera rotation, rows (right, up, back), [3,3] float64.
  torch::Tensor rotation() const;

  nlohmann::json to_json() const;
  static Camera from_json(const nlohmann::json& j);
};

struct ProjectedVertices {
  torch::Tensor screen_xy;  // [V,2] pixel coords (x right, y down), differentiable
  torch::Tensor depth;      // [V] positive view-space depth, differentiable
  torch::Tensor clipped;    // [V] bool, true when depth <= near plane
};

// Look-at + perspective projection of world-space vertices ([V,3]) to pixel
// coordinates. Pixel centers sit at integer+0.5; the frame is
// [0,W]x[0,H] with y growing downward.
ProjectedVertices project_vertices(const torch::Tensor& vertices, const Camera& cam);

}  // namespace prorec
