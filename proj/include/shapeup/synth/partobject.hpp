#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "shapeup/core/rng.hpp"
#include "shapeup/synth/voxel.hpp"

namespace shapeup::synth {

enum class PrimKind { Box, Ellipsoid, Cylinder };

// Parametric primitive solid in [0,1]^3, articulable about an attachment
// point. Kept parametric so articulation and deformation re-voxelize exactly.
struct PartPrim {
  int id = 0;
  PrimKind kind = PrimKind::Box;
  Eigen::Vector3f center{0.5f, 0.5f, 0.5f};
  Eigen::Vector3f half{0.2f, 0.2f, 0.2f};   // half extents / radii
  Eigen::Vector3f attach{0.5f, 0.5f, 0.5f}; // articulation pivot
  Eigen::Vector3f axis{0.f, 0.f, 1.f};      // articulation axis (unit)
  Eigen::Vector3f rgb{0.8f, 0.8f, 0.8f};
  float taper = 0.f;                        // linear taper along y, [0, 0.9]

  bool contains(const Eigen::Vector3f& p, float angle_rad = 0.f,
                const Eigen::Vector3f& aniso = Eigen::Vector3f::Ones()) const {
    Eigen::Vector3f q = p;
    if (angle_rad != 0.f) {
      // undo the articulation: rotate back about attach
      Eigen::AngleAxisf rot(-angle_rad, axis);
      q = attach + rot * (p - attach);
    }
    Eigen::Vector3f d = q - center;
    d = d.cwiseQuotient(aniso);  // global anisotropic deformation
    Eigen::Vector3f h = half;
    if (taper > 0.f) {
      const float s = 1.f - taper * std::clamp((d.y() + h.y()) / (2.f * h.y()), 0.f, 1.f);
      h.x() *= s;
      h.z() *= s;
    }
    switch (kind) {
      case PrimKind::Box:
        return std::abs(d.x()) <= h.x() && std::abs(d.y()) <= h.y() &&
               std::abs(d.z()) <= h.z();
      case PrimKind::Ellipsoid: {
        const Eigen::Vector3f r = d.cwiseQuotient(h);
        return r.squaredNorm() <= 1.f;
      }
      case PrimKind::Cylinder: {
        const float rx = d.x() / h.x(), rz = d.z() / h.z();
        return rx * rx + rz * rz <= 1.f && std::abs(d.y()) <= h.y();
      }
    }
    return false;
  }
};

// Part-based object. `parts` order is the removal order; the root (base)
// part is last and is never articulated. Fragments are pairwise disjoint:
// the root claims overlapping voxels first, then children in order.
struct PartObject {
  int resolution = 0;
  std::vector<PartPrim> parts;          // removal order, root last
  std::vector<VoxelShape> fragments;    // disjoint realized fragments (rest pose)
  int base = 0;                         // index of the root part

  VoxelShape union_shape() const { return realize({}); }

  // angles: per-part articulation angle in radians (root entry ignored);
  // empty means rest pose. aniso: global anisotropic scale for deformation.
  VoxelShape realize(const std::vector<float>& angles,
                     const Eigen::Vector3f& aniso = Eigen::Vector3f::Ones()) const {
    VoxelShape out(resolution);
    out.ensure_color();
    // claim order: root first, then children in list order
    std::vector<int> order;
    order.push_back(base);
    for (int i = 0; i < int(parts.size()); ++i)
      if (i != base) order.push_back(i);
    for (int z = 0; z < resolution; ++z)
      for (int y = 0; y < resolution; ++y)
        for (int x = 0; x < resolution; ++x) {
          const Eigen::Vector3f p = out.center_of(x, y, z);
          for (int pi : order) {
            const float ang =
                (pi == base || angles.empty()) ? 0.f : angles[std::size_t(pi)];
            if (parts[std::size_t(pi)].contains(p, ang, aniso)) {
              out.set(x, y, z);
              out.set_rgb(out.index(x, y, z), parts[std::size_t(pi)].rgb);
              break;
            }
          }
        }
    return out;
  }
};

inline Eigen::Vector3f hsv_to_rgb(float h, float s, float v) {
  const float c = v * s;
  const float hp = std::fmod(h, 1.f) * 6.f;
  const float x = c * (1.f - std::abs(std::fmod(hp, 2.f) - 1.f));
  Eigen::Vector3f r{0, 0, 0};
  if (hp < 1) r = {c, x, 0};
  else if (hp < 2) r = {x, c, 0};
  else if (hp < 3) r = {0, c, x};
  else if (hp < 4) r = {0, x, c};
  else if (hp < 5) r = {x, 0, c};
  else r = {c, 0, x};
  return r.array() + (v - c);
}

inline std::vector<Eigen::Vector3f> seeded_palette(std::uint64_t seed, int n) {
  Rng rng(sub_seed(seed, "palette"));
  const float h0 = float(rng.uniform());
  std::vector<Eigen::Vector3f> out;
  for (int i = 0; i < n; ++i)
    out.push_back(hsv_to_rgb(h0 + 0.618034f * float(i),
                             0.55f + 0.35f * float(rng.uniform()),
                             0.6f + 0.35f * float(rng.uniform())));
  return out;
}

namespace detail {

inline void realize_fragments(PartObject& obj) {
  obj.fragments.assign(obj.parts.size(), VoxelShape(obj.resolution));
  std::vector<int> order;
  order.push_back(obj.base);
  for (int i = 0; i < int(obj.parts.size()); ++i)
    if (i != obj.base) order.push_back(i);
  VoxelShape claimed(obj.resolution);
  for (int pi : order) {
    VoxelShape& frag = obj.fragments[std::size_t(pi)];
    frag.ensure_color();
    const auto& prim = obj.parts[std::size_t(pi)];
    for (int z = 0; z < obj.resolution; ++z)
      for (int y = 0; y < obj.resolution; ++y)
        for (int x = 0; x < obj.resolution; ++x) {
          const auto idx = claimed.index(x, y, z);
          if (claimed.occupancy[idx]) continue;
          if (prim.contains(claimed.center_of(x, y, z))) {
            claimed.occupancy[idx] = 1;
            frag.occupancy[idx] = 1;
            frag.set_rgb(idx, prim.rgb);
          }
        }
  }
}

}  // namespace detail

// Deterministic part-object generator: a large root primitive plus 1--3
// smaller primitives attached to distinct faces. Retries (still seed-driven)
// until the union is connected and every fragment is non-empty.
inline PartObject generate_part_object(std::uint64_t seed, int n_parts, int resolution) {
  if (resolution < 16)
    throw std::invalid_argument("generate_part_object: resolution must be >= 16");
  if (n_parts < 2 || n_parts > 4)
    throw std::invalid_argument("generate_part_object: n_parts must be in [2,4]");

  Rng rng(sub_seed(seed, "partobject"));
  const auto palette = seeded_palette(seed, n_parts);

  for (int attempt = 0; attempt < 64; ++attempt) {
    PartObject obj;
    obj.resolution = resolution;

    PartPrim root;
    root.kind = PrimKind(rng.range(0, 2));
    root.center = {0.5f, 0.5f, 0.5f};
    root.half = {float(rng.uniform(0.16, 0.26)), float(rng.uniform(0.16, 0.26)),
                 float(rng.uniform(0.16, 0.26))};
    root.attach = root.center;
    root.rgb = palette[0];

    static constexpr int kFace[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                        {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    // distinct faces for children
    std::vector<int> faces{0, 1, 2, 3, 4, 5};
    for (int i = 5; i > 0; --i) std::swap(faces[std::size_t(i)], faces[rng.below(std::uint64_t(i + 1))]);

    std::vector<PartPrim> children;
    for (int c = 0; c < n_parts - 1; ++c) {
      PartPrim ch;
      ch.kind = PrimKind(rng.range(0, 2));
      const int f = faces[std::size_t(c)];
      const Eigen::Vector3f dir{float(kFace[f][0]), float(kFace[f][1]),
                                float(kFace[f][2])};
      ch.half = {float(rng.uniform(0.055, 0.11)), float(rng.uniform(0.055, 0.11)),
                 float(rng.uniform(0.055, 0.11))};
      const float root_r = std::abs(dir.dot(root.half));
      const float child_r = std::abs(dir.dot(ch.half));
      // pivot on the root surface, child half-embedded for guaranteed contact
      ch.attach = root.center + dir * (root_r * 0.92f);
      ch.center = ch.attach + dir * (child_r * 0.55f);
      // articulation axis perpendicular to the attach direction
      Eigen::Vector3f perp = dir.cross(Eigen::Vector3f(0.f, 1.f, 0.f));
      if (perp.norm() < 1e-4f) perp = dir.cross(Eigen::Vector3f(1.f, 0.f, 0.f));
      ch.axis = perp.normalized();
      ch.rgb = palette[std::size_t(c + 1)];
      children.push_back(ch);
    }

    // removal order: children first, root last
    obj.parts = children;
    obj.parts.push_back(root);
    for (int i = 0; i < int(obj.parts.size()); ++i) obj.parts[std::size_t(i)].id = i;
    obj.base = int(obj.parts.size()) - 1;

    detail::realize_fragments(obj);

    // recenter the full union (integer shift, applied to prims and fragments)
    VoxelShape uni = obj.union_shape();
    const auto bb = uni.bbox();
    if (!bb.valid()) continue;
    const int cx = (bb.lo[0] + bb.hi[0]) / 2, cy = (bb.lo[1] + bb.hi[1]) / 2,
              cz = (bb.lo[2] + bb.hi[2]) / 2;
    const int mid = resolution / 2;
    const int dx = mid - 1 - cx, dy = mid - 1 - cy, dz = mid - 1 - cz;
    if (dx || dy || dz) {
      const Eigen::Vector3f shift(float(dx) / float(resolution),
                                  float(dy) / float(resolution),
                                  float(dz) / float(resolution));
      for (auto& p : obj.parts) {
        p.center += shift;
        p.attach += shift;
      }
      detail::realize_fragments(obj);
    }

    bool ok = true;
    std::size_t root_count = obj.fragments[std::size_t(obj.base)].count();
    for (int i = 0; i < int(obj.fragments.size()); ++i) {
      const std::size_t n = obj.fragments[std::size_t(i)].count();
      if (n == 0 || (i != obj.base && n >= root_count)) ok = false;
    }
    if (ok && !is_connected6(obj.union_shape())) ok = false;
    // every removal variant must stay connected
    if (ok) {
      VoxelShape acc = obj.union_shape();
      for (int i = 0; ok && i + 1 < int(obj.parts.size()); ++i) {
        for (std::size_t v = 0; v < acc.occupancy.size(); ++v)
          if (obj.fragments[std::size_t(i)].occupancy[v]) acc.occupancy[v] = 0;
        if (acc.empty() || !is_connected6(acc)) ok = false;
      }
    }
    if (ok) return obj;
  }
  throw std::runtime_error("generate_part_object: no valid object after 64 attempts");
}

// Articulated animation: per-frame angles for non-root parts, sinusoidal with
// zero phase so frame 0 is exactly the rest pose.
struct AnimSequence {
  PartObject object;
  std::vector<std::vector<float>> pose_angles;  // [frame][part] radians

  int n_frames() const { return int(pose_angles.size()); }
};

inline AnimSequence generate_anim(std::uint64_t seed, int n_parts, int resolution,
                                  int n_frames) {
  AnimSequence seq;
  seq.object = generate_part_object(seed, n_parts, resolution);
  Rng rng(sub_seed(seed, "anim"));
  const int np = int(seq.object.parts.size());
  std::vector<float> amp(std::size_t(np), 0.f), freq(std::size_t(np), 1.f);
  for (int p = 0; p < np; ++p) {
    if (p == seq.object.base) continue;
    amp[std::size_t(p)] = float(rng.uniform(0.35, 0.8));  // ~20..46 degrees
    freq[std::size_t(p)] = float(rng.range(1, 2));
  }
  seq.pose_angles.resize(std::size_t(n_frames));
  for (int f = 0; f < n_frames; ++f) {
    auto& angles = seq.pose_angles[std::size_t(f)];
    angles.assign(std::size_t(np), 0.f);
    for (int p = 0; p < np; ++p)
      angles[std::size_t(p)] =
          amp[std::size_t(p)] *
          std::sin(6.2831853f * freq[std::size_t(p)] * float(f) / float(n_frames));
  }
  return seq;
}

inline VoxelShape articulate(const AnimSequence& seq, int frame) {
  if (frame < 0 || frame >= seq.n_frames())
    throw std::out_of_range("articulate: frame out of range");
  return seq.object.realize(seq.pose_angles[std::size_t(frame)]);
}

// Global deformation (anisotropic scale/taper) for the benchmark categories.
inline VoxelShape deform(const PartObject& obj, const Eigen::Vector3f& aniso,
                         float taper) {
  PartObject tmp = obj;
  for (auto& p : tmp.parts) p.taper = taper;
  return tmp.realize({}, aniso);
}

// Palette swap: same occupancy, hue-rotated colors.
inline VoxelShape palette_swap(const PartObject& obj, std::uint64_t seed) {
  PartObject tmp = obj;
  const auto palette = seeded_palette(sub_seed(seed, "swap"), int(obj.parts.size()));
  for (std::size_t i = 0; i < tmp.parts.size(); ++i) tmp.parts[i].rgb = palette[i];
  return tmp.realize({});
}

}  // namespace shapeup::synth
