#include "prorec/mesh.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>

namespace prorec {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
  double x, y, z;
};

Vec3 normalized(const Vec3& v) {
  double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  return {v.x / n, v.y / n, v.z / n};
}

Vec3 from_az_el(double az_deg, double el_deg) {
  double az = az_deg * kPi / 180.0;
  double el = el_deg * kPi / 180.0;
  return {std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az)};
}

// Canonical equirectangular angles: u from azimuth atan2(x, z), v from the
// polar angle so v=0 at the north pole (+y).
double azimuth_u(const Vec3& p) {
  double az = std::atan2(p.x, p.z);
  double u = az / (2.0 * kPi);
  if (u < 0.0) u += 1.0;
  return u;
}

double polar_v(const Vec3& p) {
  double y = std::clamp(p.y, -1.0, 1.0);
  return std::acos(y) / kPi;
}

bool is_pole(const Vec3& p) { return std::abs(p.y) > 1.0 - 1e-9; }

}  // namespace

TemplateMesh build_icosphere(int level) {
  TORCH_CHECK(level >= 0, "build_icosphere: level must be >= 0, got ", level);
  TORCH_CHECK(level <= 6, "build_icosphere: level ", level, " exceeds the resource guard (max 6)");

  // Icosahedron with poles on +-y and two 5-vertex rings at elevation
  // +-atan(1/2), the lower ring rotated by 36 degrees.
  const double ring_el = std::atan(0.5) * 180.0 / kPi;
  std::vector<Vec3> verts;
  verts.push_back({0.0, 1.0, 0.0});
  for (int i = 0; i < 5; ++i) verts.push_back(normalized(from_az_el(72.0 * i, ring_el)));
  for (int i = 0; i < 5; ++i) verts.push_back(normalized(from_az_el(36.0 + 72.0 * i, -ring_el)));
  verts.push_back({0.0, -1.0, 0.0});

  std::vector<std::array<int64_t, 3>> faces;
  auto u = [](int i) { return int64_t(1 + i % 5); };
  auto l = [](int i) { return int64_t(6 + i % 5); };
  for (int i = 0; i < 5; ++i) {
    faces.push_back({0, u(i), u(i + 1)});
    faces.push_back({u(i), l(i), u(i + 1)});
    faces.push_back({u(i + 1), l(i), l(i + 1)});
    faces.push_back({11, l(i + 1), l(i)});
  }

  // Force outward winding so face normals and back-face tests are consistent.
  for (auto& f : faces) {
    const Vec3& a = verts[f[0]];
    const Vec3& b = verts[f[1]];
    const Vec3& c = verts[f[2]];
    Vec3 ab{b.x - a.x, b.y - a.y, b.z - a.z};
    Vec3 ac{c.x - a.x, c.y - a.y, c.z - a.z};
    Vec3 n{ab.y * ac.z - ab.z * ac.y, ab.z * ac.x - ab.x * ac.z, ab.x * ac.y - ab.y * ac.x};
    Vec3 centroid{(a.x + b.x + c.x) / 3, (a.y + b.y + c.y) / 3, (a.z + b.z + c.z) / 3};
    if (n.x * centroid.x + n.y * centroid.y + n.z * centroid.z < 0.0) std::swap(f[1], f[2]);
  }

  for (int s = 0; s < level; ++s) {
    std::map<std::pair<int64_t, int64_t>, int64_t> midpoint;
    auto mid = [&](int64_t a, int64_t b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Vec3 m{(verts[a].x + verts[b].x) * 0.5, (verts[a].y + verts[b].y) * 0.5,
             (verts[a].z + verts[b].z) * 0.5};
      verts.push_back(normalized(m));
      int64_t idx = int64_t(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int64_t, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      int64_t ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  const int64_t nv = int64_t(verts.size());
  const int64_t nf = int64_t(faces.size());

  TemplateMesh mesh;
  mesh.vertices = torch::empty({nv, 3}, torch::kFloat32);
  mesh.vertex_uv = torch::empty({nv, 2}, torch::kFloat32);
  auto va = mesh.vertices.accessor<float, 2>();
  auto uva = mesh.vertex_uv.accessor<float, 2>();
  for (int64_t i = 0; i < nv; ++i) {
    va[i][0] = float(verts[i].x);
    va[i][1] = float(verts[i].y);
    va[i][2] = float(verts[i].z);
    uva[i][0] = is_pole(verts[i]) ? 0.5f : float(azimuth_u(verts[i]));
    uva[i][1] = float(polar_v(verts[i]));
  }

  mesh.faces = torch::empty({nf, 3}, torch::kInt64);
  mesh.face_uv = torch::empty({nf, 3, 2}, torch::kFloat32);
  auto fa = mesh.faces.accessor<int64_t, 2>();
  auto fuv = mesh.face_uv.accessor<float, 3>();
  for (int64_t fi = 0; fi < nf; ++fi) {
    double us[3], vs[3];
    bool pole[3];
    for (int k = 0; k < 3; ++k) {
      fa[fi][k] = faces[fi][k];
      const Vec3& p = verts[faces[fi][k]];
      pole[k] = is_pole(p);
      us[k] = pole[k] ? 0.0 : azimuth_u(p);
      vs[k] = polar_v(p);
    }
    // Unwrap the seam: if the non-pole corners straddle u=0, shift the small
    // side up by one period so the face is uv-continuous.
    double umin = 2.0, umax = -1.0;
    for (int k = 0; k < 3; ++k)
      if (!pole[k]) {
        umin = std::min(umin, us[k]);
        umax = std::max(umax, us[k]);
      }
    if (umax - umin > 0.5) {
      for (int k = 0; k < 3; ++k)
        if (!pole[k] && us[k] < 0.5) us[k] += 1.0;
    }
    for (int k = 0; k < 3; ++k) {
      if (pole[k]) {
        double sum = 0.0;
        int cnt = 0;
        for (int j = 0; j < 3; ++j)
          if (!pole[j]) {
            sum += us[j];
            ++cnt;
          }
        us[k] = cnt > 0 ? sum / cnt : 0.5;
      }
      fuv[fi][k][0] = float(us[k]);
      fuv[fi][k][1] = float(vs[k]);
    }
  }

  mesh.adjacency.assign(nv, {});
  {
    std::vector<std::set<int64_t>> nbr(nv);
    for (const auto& f : faces) {
      for (int k = 0; k < 3; ++k) {
        int64_t a = f[k], b = f[(k + 1) % 3];
        nbr[a].insert(b);
        nbr[b].insert(a);
      }
    }
    for (int64_t i = 0; i < nv; ++i) mesh.adjacency[i].assign(nbr[i].begin(), nbr[i].end());
  }

  mesh.neighbor_avg = torch::zeros({nv, nv}, torch::kFloat32);
  auto na = mesh.neighbor_avg.accessor<float, 2>();
  for (int64_t i = 0; i < nv; ++i) {
    float w = 1.0f / float(mesh.adjacency[i].size());
    for (int64_t j : mesh.adjacency[i]) na[i][j] = w;
  }
  return mesh;
}

torch::Tensor sample_deformation(const torch::Tensor& grid, const torch::Tensor& uv) {
  TORCH_CHECK(grid.dim() == 3 || grid.dim() == 4, "sample_deformation: grid must be [C,H,W] or [B,C,H,W]");
  TORCH_CHECK(uv.dim() == 2 && uv.size(1) == 2, "sample_deformation: uv must be [N,2]");
  const bool batched = grid.dim() == 4;
  const int64_t H = grid.size(-2), W = grid.size(-1);

  auto uv_c = uv.to(torch::kFloat64).clamp(0.0, 1.0);
  auto x = (uv_c.select(1, 0) * double(W) - 0.5).clamp(0.0, double(W - 1));
  auto y = (uv_c.select(1, 1) * double(H) - 0.5).clamp(0.0, double(H - 1));
  auto x0 = x.floor();
  auto y0 = y.floor();
  auto fx = (x - x0).to(grid.dtype());
  auto fy = (y - y0).to(grid.dtype());
  auto x0i = x0.to(torch::kInt64);
  auto y0i = y0.to(torch::kInt64);
  auto x1i = (x0i + 1).clamp_max(W - 1);
  auto y1i = (y0i + 1).clamp_max(H - 1);

  auto flat = batched ? grid.flatten(2) : grid.flatten(1);  // [...,C,H*W]
  const int64_t dim = batched ? 2 : 1;
  auto pick = [&](const torch::Tensor& yi, const torch::Tensor& xi) {
    return flat.index_select(dim, yi * W + xi);  // [...,C,N]
  };
  auto w00 = (1 - fx) * (1 - fy);
  auto w01 = fx * (1 - fy);
  auto w10 = (1 - fx) * fy;
  auto w11 = fx * fy;
  auto out = pick(y0i, x0i) * w00 + pick(y0i, x1i) * w01 + pick(y1i, x0i) * w10 +
             pick(y1i, x1i) * w11;        // [...,C,N]
  return out.transpose(dim - 1, dim);     // [...,N,C]
}

DeformedMesh apply_deformation(const TemplateMesh& tmpl, const DeformationMap& map) {
  TORCH_CHECK(map.grid.dim() == 3 && map.grid.size(0) == 3,
              "apply_deformation: map grid must be [3,H,W]");
  TORCH_CHECK(map.grid.isfinite().all().item<bool>(),
              "apply_deformation: deformation map contains non-finite values");
  auto offsets = sample_deformation(map.grid, tmpl.vertex_uv);
  DeformedMesh out;
  out.vertices = tmpl.vertices.to(map.grid.dtype()) + offsets;
  out.faces = tmpl.faces;
  out.face_uv = tmpl.face_uv;
  return out;
}

torch::Tensor apply_deformation_batch(const TemplateMesh& tmpl, const torch::Tensor& grids) {
  TORCH_CHECK(grids.dim() == 4 && grids.size(1) == 3,
              "apply_deformation_batch: grids must be [B,3,H,W]");
  TORCH_CHECK(grids.isfinite().all().item<bool>(),
              "apply_deformation_batch: deformation map contains non-finite values");
  auto offsets = sample_deformation(grids, tmpl.vertex_uv);       // [B,V,3]
  return tmpl.vertices.to(grids.dtype()).unsqueeze(0) + offsets;  // [B,V,3]
}

torch::Tensor laplacian_loss_offsets(const torch::Tensor& offsets, const TemplateMesh& tmpl) {
  TORCH_CHECK(offsets.size(-1) == 3 && offsets.size(-2) == tmpl.vertex_count(),
              "laplacian_loss: offsets must be [...,V,3] with the template's V");
  auto avg = torch::matmul(tmpl.neighbor_avg.to(offsets.dtype()), offsets);
  return (offsets - avg).pow(2).sum(-1).mean();
}

torch::Tensor laplacian_loss(const DeformedMesh& mesh, const TemplateMesh& tmpl) {
  auto offsets = mesh.vertices - tmpl.vertices.to(mesh.vertices.dtype());
  return laplacian_loss_offsets(offsets, tmpl);
}

torch::Tensor apply_symmetry(const torch::Tensor& half) {
  return torch::cat({half, half.flip(-1)}, -1);
}

bool is_watertight(const TemplateMesh& mesh) {
  std::map<std::pair<int64_t, int64_t>, int> count;
  auto fa = mesh.faces.accessor<int64_t, 2>();
  for (int64_t f = 0; f < mesh.face_count(); ++f) {
    for (int k = 0; k < 3; ++k) {
      auto key = std::minmax(fa[f][k], fa[f][(k + 1) % 3]);
      count[key] += 1;
    }
  }
  for (const auto& [edge, c] : count)
    if (c != 2) return false;
  for (const auto& adj : mesh.adjacency)
    if (adj.empty()) return false;
  return true;
}

int64_t euler_characteristic(const TemplateMesh& mesh) {
  std::set<std::pair<int64_t, int64_t>> edges;
  auto fa = mesh.faces.accessor<int64_t, 2>();
  for (int64_t f = 0; f < mesh.face_count(); ++f)
    for (int k = 0; k < 3; ++k) edges.insert(std::minmax(fa[f][k], fa[f][(k + 1) % 3]));
  return mesh.vertex_count() - int64_t(edges.size()) + mesh.face_count();
}

void write_obj(const std::filesystem::path& path, const torch::Tensor& vertices,
               const torch::Tensor& faces, const torch::Tensor& face_uv) {
  auto verts = vertices.detach().to(torch::kFloat32).contiguous();
  auto fuv = face_uv.detach().to(torch::kFloat32).contiguous();
  std::ofstream out(path);
  TORCH_CHECK(out.good(), "write_obj: cannot open ", path.string());
  out.precision(9);
  auto va = verts.accessor<float, 2>();
  for (int64_t i = 0; i < verts.size(0); ++i)
    out << "v " << va[i][0] << " " << va[i][1] << " " << va[i][2] << "\n";

  std::map<std::pair<float, float>, int64_t> vt_index;
  std::vector<std::array<int64_t, 3>> corner_vt(faces.size(0));
  auto fuva = fuv.accessor<float, 3>();
  for (int64_t f = 0; f < faces.size(0); ++f) {
    for (int k = 0; k < 3; ++k) {
      std::pair<float, float> key{fuva[f][k][0], fuva[f][k][1]};
      auto it = vt_index.find(key);
      if (it == vt_index.end()) {
        it = vt_index.emplace(key, int64_t(vt_index.size())).first;
        out << "vt " << key.first << " " << key.second << "\n";
      }
      corner_vt[f][k] = it->second;
    }
  }
  auto fa = faces.accessor<int64_t, 2>();
  for (int64_t f = 0; f < faces.size(0); ++f) {
    out << "f";
    for (int k = 0; k < 3; ++k) out << " " << fa[f][k] + 1 << "/" << corner_vt[f][k] + 1;
    out << "\n";
  }
}

DeformedMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  TORCH_CHECK(in.good(), "read_obj: cannot open ", path.string());
  std::vector<std::array<float, 3>> verts;
  std::vector<std::array<float, 2>> vts;
  std::vector<std::array<int64_t, 3>> faces;
  std::vector<std::array<int64_t, 3>> face_vts;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      std::array<float, 3> v{};
      ss >> v[0] >> v[1] >> v[2];
      verts.push_back(v);
    } else if (tag == "vt") {
      std::array<float, 2> t{};
      ss >> t[0] >> t[1];
      vts.push_back(t);
    } else if (tag == "f") {
      std::array<int64_t, 3> fv{};
      std::array<int64_t, 3> ft{};
      for (int k = 0; k < 3; ++k) {
        std::string corner;
        ss >> corner;
        auto slash = corner.find('/');
        TORCH_CHECK(slash != std::string::npos, "read_obj: face records must be v/vt");
        fv[k] = std::stoll(corner.substr(0, slash)) - 1;
        ft[k] = std::stoll(corner.substr(slash + 1)) - 1;
      }
      faces.push_back(fv);
      face_vts.push_back(ft);
    }
  }
  TORCH_CHECK(!verts.empty() && !faces.empty(), "read_obj: ", path.string(), " has no geometry");

  DeformedMesh mesh;
  mesh.vertices = torch::empty({int64_t(verts.size()), 3}, torch::kFloat32);
  std::memcpy(mesh.vertices.data_ptr<float>(), verts.data(), verts.size() * 3 * sizeof(float));
  mesh.faces = torch::empty({int64_t(faces.size()), 3}, torch::kInt64);
  std::memcpy(mesh.faces.data_ptr<int64_t>(), faces.data(), faces.size() * 3 * sizeof(int64_t));
  mesh.face_uv = torch::empty({int64_t(faces.size()), 3, 2}, torch::kFloat32);
  auto fuv = mesh.face_uv.accessor<float, 3>();
  for (size_t f = 0; f < faces.size(); ++f)
    for (int k = 0; k < 3; ++k) {
      TORCH_CHECK(face_vts[f][k] >= 0 && face_vts[f][k] < int64_t(vts.size()),
                  "read_obj: vt index out of range");
      fuv[f][k][0] = vts[face_vts[f][k]][0];
      fuv[f][k][1] = vts[face_vts[f][k]][1];
    }
  return mesh;
}

}  // namespace prorec
