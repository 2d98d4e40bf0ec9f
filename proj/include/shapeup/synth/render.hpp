#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "shapeup/core/rng.hpp"
#include "shapeup/synth/voxel.hpp"

namespace shapeup::synth {

using Image = Eigen::ArrayXXf;  // rows = y (top down), cols = x

// Orthographic camera spec. Azimuth/elevation in degrees; the camera sits on
// the unit sphere direction (sin az cos el, sin el, cos az cos el) looking at
// the cube center, so (0,0) is the front (+z) view.
struct ViewSpec {
  float azimuth = 0.f;
  float elevation = 0.f;
  int image_size = 32;
};

struct ViewRender {
  ViewSpec view;
  Image silhouette;          // 0/1
  Image depth;               // [0,1], background exactly 1
  Image nx, ny, nz;          // unit where silhouette=1, zero elsewhere
  std::optional<std::array<Image, 3>> color;
};

inline constexpr float kOrthoExtent = 1.5f;   // image plane half... full width
inline constexpr float kCameraDist = 1.5f;    // from cube center along view dir
inline constexpr float kDepthRange = 3.0f;    // depth = t / kDepthRange < 1

inline float normalize_azimuth(float az) {
  while (az > 180.f) az -= 360.f;
  while (az < -180.f) az += 360.f;
  return az;
}

struct CameraBasis {
  Eigen::Vector3f v;      // cube center -> camera (unit)
  Eigen::Vector3f right;  // image x
  Eigen::Vector3f up;     // image y (towards row 0)
};

inline CameraBasis camera_basis(const ViewSpec& vs) {
  const float az = normalize_azimuth(vs.azimuth) * 3.14159265358979323846f / 180.f;
  const float el = vs.elevation * 3.14159265358979323846f / 180.f;
  CameraBasis b;
  b.v = {std::sin(az) * std::cos(el), std::sin(el), std::cos(az) * std::cos(el)};
  Eigen::Vector3f up_w(0.f, 1.f, 0.f);
  if (std::abs(b.v.y()) > 0.999f) up_w = Eigen::Vector3f(0.f, 0.f, -b.v.y());
  b.right = up_w.cross(b.v).normalized();
  b.up = b.v.cross(b.right).normalized();
  return b;
}

// origin of the orthographic ray for pixel (row i, col j); direction is -v
inline Eigen::Vector3f pixel_ray_origin(const ViewSpec& vs, const CameraBasis& b,
                                        int i, int j) {
  const float s = float(vs.image_size);
  const float su = ((float(j) + 0.5f) / s - 0.5f) * kOrthoExtent;
  const float sv = (0.5f - (float(i) + 0.5f) / s) * kOrthoExtent;
  return Eigen::Vector3f(0.5f, 0.5f, 0.5f) + b.v * kCameraDist + b.right * su + b.up * sv;
}

// Canonical entry parameter of a ray into one voxel's AABB (slab test).
// Shared by the DDA renderer and the exhaustive test oracle so both report
// identical depths for the same hit voxel.
inline bool voxel_entry_t(const Eigen::Vector3f& origin, const Eigen::Vector3f& dir,
                          int res, int x, int y, int z, float& t_entry) {
  float t0 = 0.f, t1 = std::numeric_limits<float>::infinity();
  const float inv_res = 1.f / float(res);
  const float lo[3] = {x * inv_res, y * inv_res, z * inv_res};
  const float hi[3] = {(x + 1) * inv_res, (y + 1) * inv_res, (z + 1) * inv_res};
  for (int a = 0; a < 3; ++a) {
    const float o = origin[a], d = dir[a];
    if (std::abs(d) < 1e-12f) {
      if (o < lo[a] || o > hi[a]) return false;
      continue;
    }
    float ta = (lo[a] - o) / d, tb = (hi[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return false;
  t_entry = t0;
  return true;
}

// surface normal from central differences of occupancy; falls back to the
// reverse view direction on flat gradients
inline Eigen::Vector3f voxel_normal(const VoxelShape& s, int x, int y, int z,
                                    const Eigen::Vector3f& view_dir) {
  const Eigen::Vector3f g(float(s.occ(x - 1, y, z)) - float(s.occ(x + 1, y, z)),
                          float(s.occ(x, y - 1, z)) - float(s.occ(x, y + 1, z)),
                          float(s.occ(x, y, z - 1)) - float(s.occ(x, y, z + 1)));
  if (g.norm() < 1e-6f) return -view_dir.normalized();
  return g.normalized();
}

// Orthographic ray march (Amanatides-Woo DDA) over the occupancy grid.
inline ViewRender render(const VoxelShape& shape, const ViewSpec& vs) {
  if (shape.empty()) throw std::invalid_argument("render: empty shape");
  const int S = vs.image_size, res = shape.resolution;
  const CameraBasis cb = camera_basis(vs);
  const Eigen::Vector3f dir = -cb.v;

  ViewRender out;
  out.view = vs;
  out.silhouette = Image::Zero(S, S);
  out.depth = Image::Constant(S, S, 1.f);
  out.nx = Image::Zero(S, S);
  out.ny = Image::Zero(S, S);
  out.nz = Image::Zero(S, S);
  const bool with_color = shape.has_color();
  if (with_color)
    out.color = std::array<Image, 3>{Image::Zero(S, S), Image::Zero(S, S),
                                     Image::Zero(S, S)};

  for (int i = 0; i < S; ++i)
    for (int j = 0; j < S; ++j) {
      const Eigen::Vector3f origin = pixel_ray_origin(vs, cb, i, j);
      // clip against the unit cube
      float t0 = 0.f, t1 = std::numeric_limits<float>::infinity();
      bool miss = false;
      for (int a = 0; a < 3 && !miss; ++a) {
        if (std::abs(dir[a]) < 1e-12f) {
          if (origin[a] < 0.f || origin[a] > 1.f) miss = true;
          continue;
        }
        float ta = (0.f - origin[a]) / dir[a], tb = (1.f - origin[a]) / dir[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
      }
      if (miss || t0 > t1) continue;

      // voxel stepping state
      const float eps = 1e-6f;
      Eigen::Vector3f p = origin + dir * (t0 + eps);
      int cx = std::clamp(int(std::floor(p.x() * res)), 0, res - 1);
      int cy = std::clamp(int(std::floor(p.y() * res)), 0, res - 1);
      int cz = std::clamp(int(std::floor(p.z() * res)), 0, res - 1);
      int step[3], cell[3] = {cx, cy, cz};
      float t_max[3], t_delta[3];
      for (int a = 0; a < 3; ++a) {
        if (dir[a] > 1e-12f) {
          step[a] = 1;
          t_delta[a] = (1.f / float(res)) / dir[a];
          t_max[a] = ((float(cell[a] + 1) / float(res)) - origin[a]) / dir[a];
        } else if (dir[a] < -1e-12f) {
          step[a] = -1;
          t_delta[a] = -(1.f / float(res)) / dir[a];
          t_max[a] = ((float(cell[a]) / float(res)) - origin[a]) / dir[a];
        } else {
          step[a] = 0;
          t_delta[a] = std::numeric_limits<float>::infinity();
          t_max[a] = std::numeric_limits<float>::infinity();
        }
      }
      while (true) {
        if (shape.occ(cell[0], cell[1], cell[2])) {
          float t_hit = 0.f;
          if (voxel_entry_t(origin, dir, res, cell[0], cell[1], cell[2], t_hit)) {
            out.silhouette(i, j) = 1.f;
            out.depth(i, j) = t_hit / kDepthRange;
            const Eigen::Vector3f n =
                voxel_normal(shape, cell[0], cell[1], cell[2], dir);
            out.nx(i, j) = n.x();
            out.ny(i, j) = n.y();
            out.nz(i, j) = n.z();
            if (with_color) {
              const auto c = shape.rgb(shape.index(cell[0], cell[1], cell[2]));
              (*out.color)[0](i, j) = c.x();
              (*out.color)[1](i, j) = c.y();
              (*out.color)[2](i, j) = c.z();
            }
          }
          break;
        }
        // advance to next cell
        int a = 0;
        if (t_max[1] < t_max[a]) a = 1;
        if (t_max[2] < t_max[a]) a = 2;
        cell[a] += step[a];
        if (cell[a] < 0 || cell[a] >= res) break;
        t_max[a] += t_delta[a];
      }
    }
  return out;
}

// The six canonical orthogonal views in fixed order (+x,-x,+y,-y,+z,-z).
// The front view (+z) is index 4.
inline constexpr int kFrontViewIndex = 4;

inline std::vector<ViewSpec> orthogonal_views(int image_size) {
  return {
      {90.f, 0.f, image_size},  {-90.f, 0.f, image_size}, {0.f, 90.f, image_size},
      {0.f, -90.f, image_size}, {0.f, 0.f, image_size},   {180.f, 0.f, image_size},
  };
}

// 6 orthogonal views plus n_random random views, azimuth U[-70,70],
// elevation U[-15,30].
inline std::vector<ViewSpec> sample_views(std::uint64_t seed, int n_random,
                                          int image_size = 32) {
  if (n_random < 1) throw std::invalid_argument("sample_views: n_random must be >= 1");
  auto views = orthogonal_views(image_size);
  Rng rng(sub_seed(seed, "views"));
  for (int i = 0; i < n_random; ++i) {
    ViewSpec vs;
    vs.azimuth = float(rng.uniform(-70.0, 70.0));
    vs.elevation = float(rng.uniform(-15.0, 30.0));
    vs.image_size = image_size;
    views.push_back(vs);
  }
  return views;
}

// position map: world-space hit point in [0,1]^3 recovered from depth
inline std::array<Image, 3> position_map(const ViewRender& r) {
  const int S = r.view.image_size;
  const CameraBasis cb = camera_basis(r.view);
  const Eigen::Vector3f dir = -cb.v;
  std::array<Image, 3> pos{Image::Zero(S, S), Image::Zero(S, S), Image::Zero(S, S)};
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < S; ++j) {
      if (r.silhouette(i, j) < 0.5f) continue;
      const Eigen::Vector3f p =
          pixel_ray_origin(r.view, cb, i, j) + dir * (r.depth(i, j) * kDepthRange);
      pos[0](i, j) = p.x();
      pos[1](i, j) = p.y();
      pos[2](i, j) = p.z();
    }
  return pos;
}

// --- PFM / render bundle io ---------------------------------------------

inline void save_pfm(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_pfm: cannot write " + path);
  f << "Pf\n" << img.cols() << " " << img.rows() << "\n-1.0\n";
  // PFM stores rows bottom-up
  for (Eigen::Index i = img.rows() - 1; i >= 0; --i)
    for (Eigen::Index j = 0; j < img.cols(); ++j) {
      const float v = img(i, j);
      f.write(reinterpret_cast<const char*>(&v), 4);
    }
}

inline Image load_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_pfm: cannot read " + path);
  std::string magic;
  int w = 0, h = 0;
  float scale = 0.f;
  f >> magic >> w >> h >> scale;
  if (magic != "Pf" || w <= 0 || h <= 0)
    throw std::runtime_error("load_pfm: bad header in " + path);
  f.get();  // single whitespace after header
  Image img(h, w);
  for (int i = h - 1; i >= 0; --i)
    for (int j = 0; j < w; ++j) {
      float v = 0.f;
      f.read(reinterpret_cast<char*>(&v), 4);
      img(i, j) = v;
    }
  if (!f) throw std::runtime_error("load_pfm: truncated " + path);
  return img;
}

// A render bundle is a set of PFM files sharing a prefix.
inline void save_view_render(const ViewRender& r, const std::string& prefix) {
  save_pfm(r.silhouette, prefix + ".sil.pfm");
  save_pfm(r.depth, prefix + ".depth.pfm");
  save_pfm(r.nx, prefix + ".nx.pfm");
  save_pfm(r.ny, prefix + ".ny.pfm");
  save_pfm(r.nz, prefix + ".nz.pfm");
  if (r.color) {
    save_pfm((*r.color)[0], prefix + ".r.pfm");
    save_pfm((*r.color)[1], prefix + ".g.pfm");
    save_pfm((*r.color)[2], prefix + ".b.pfm");
  }
  std::ofstream meta(prefix + ".view.txt");
  meta << r.view.azimuth << " " << r.view.elevation << " " << r.view.image_size
       << " " << (r.color ? 1 : 0) << "\n";
}

inline ViewRender load_view_render(const std::string& prefix) {
  ViewRender r;
  std::ifstream meta(prefix + ".view.txt");
  int has_color = 0;
  if (!(meta >> r.view.azimuth >> r.view.elevation >> r.view.image_size >> has_color))
    throw std::runtime_error("load_view_render: missing metadata for " + prefix);
  r.silhouette = load_pfm(prefix + ".sil.pfm");
  r.depth = load_pfm(prefix + ".depth.pfm");
  r.nx = load_pfm(prefix + ".nx.pfm");
  r.ny = load_pfm(prefix + ".ny.pfm");
  r.nz = load_pfm(prefix + ".nz.pfm");
  if (has_color)
    r.color = std::array<Image, 3>{load_pfm(prefix + ".r.pfm"),
                                   load_pfm(prefix + ".g.pfm"),
                                   load_pfm(prefix + ".b.pfm")};
  return r;
}

}  // namespace shapeup::synth
