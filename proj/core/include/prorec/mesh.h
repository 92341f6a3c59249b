#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

namespace prorec {

/// Fixed-topology icosphere template. Geometry is watertight; the UV chart is
/// an equirectangular (azimuth/polar) unwrap with the seam handled by
/// duplicated per-corner coordinates, so `vertex_uv` stays in [0,1]^2 while
/// `face_uv` may run past u=1 on seam-crossing faces.
struct TemplateMesh {
  torch::Tensor vertices;   // [V,3] float32, unit length
  torch::Tensor faces;      // [F,3] int64, outward CCW winding
  torch::Tensor vertex_uv;  // [V,2] float32 in [0,1]^2, canonical per-vertex chart
  torch::Tensor face_uv;    // [F,3,2] float32, per-corner uv (u unwrapped at the seam)
  std::vector<std::vector<int64_t>> adjacency;  // per-vertex neighbor indices, sorted
  torch::Tensor neighbor_avg;  // [V,V] float32 row-normalized adjacency (cached for the Laplacian)

  int64_t vertex_count() const { return vertices.size(0); }
  int64_t face_count() const { return faces.size(0); }
};

/// Deformed instance of a template. Shares topology and UV chart tensors with
/// the template it came from; `vertices` may carry autograd history.
struct DeformedMesh {
  torch::Tensor vertices;  // [V,3]
  torch::Tensor faces;     // [F,3] int64
  torch::Tensor face_uv;   // [F,3,2]
};

/// UV-space grid of per-texel 3D offsets, stored CHW ([3,H,W]) to match the
/// generator's output layout.
struct DeformationMap {
  torch::Tensor grid;  // [3,H,W]
};

// Icosahedron subdivided `level` times, vertices projected to the unit
// sphere, poles on +-y. level 0 gives 12 vertices / 20 faces; each level
// quadruples faces. Levels above 6 are rejected.
TemplateMesh build_icosphere(int level);

// Bilinear lookup of `grid` ([C,H,W] or [B,C,H,W]) at `uv` ([N,2], components
// clamped to [0,1]). Returns [N,C] (or [B,N,C]). Differentiable w.r.t. grid;
// uv is treated as constant.
torch::Tensor sample_deformation(const torch::Tensor& grid, const torch::Tensor& uv);

// vertices' = template.vertices + sample_deformation(map, vertex_uv).
// Rejects non-finite maps.
DeformedMesh apply_deformation(const TemplateMesh& tmpl, const DeformationMap& map);

// Batched variant: grids [B,3,H,W] -> vertices [B,V,3].
torch::Tensor apply_deformation_batch(const TemplateMesh& tmpl, const torch::Tensor& grids);

// Mean squared norm of the uniform graph Laplacian applied to the deformation
// offsets (vertex offset minus mean of neighbor offsets). Zero for the
// undeformed template and for any rigid translation of it.
torch::Tensor laplacian_loss(const DeformedMesh& mesh, const TemplateMesh& tmpl);

// Same, on raw offset tensors [V,3] or [B,V,3].
torch::Tensor laplacian_loss_offsets(const torch::Tensor& offsets, const TemplateMesh& tmpl);

// Mirror-completes a half map along the last (width) axis:
// out[..., j] = half[..., j] and out[..., W-1-j] = half[..., j] for j < W/2.
torch::Tensor apply_symmetry(const torch::Tensor& half);

// Watertightness = every undirected edge is shared by exactly two faces.
bool is_watertight(const TemplateMesh& mesh);
int64_t euler_characteristic(const TemplateMesh& mesh);

// Wavefront OBJ with v/vt/f records (f as v/vt). Corner uvs are deduplicated
// into the vt table on export.
void write_obj(const std::filesystem::path& path, const torch::Tensor& vertices,
               const torch::Tensor& faces, const torch::Tensor& face_uv);
DeformedMesh read_obj(const std::filesystem::path& path);

}  // namespace prorec
