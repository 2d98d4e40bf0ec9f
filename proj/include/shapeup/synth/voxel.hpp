#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace shapeup::synth {

// Cubic binary occupancy grid with optional per-voxel RGB. The desk-scale
// stand-in for a textured mesh. Index order: x + res*(y + res*z).
struct VoxelShape {
  int resolution = 0;
  std::vector<std::uint8_t> occupancy;  // res^3, 0/1
  std::vector<float> color;             // empty, or 3*res^3 rgb in [0,1]

  VoxelShape() = default;
  explicit VoxelShape(int res)
      : resolution(res), occupancy(std::size_t(res) * res * res, 0) {}

  std::size_t index(int x, int y, int z) const {
    return std::size_t(x) + std::size_t(resolution) * (std::size_t(y) + std::size_t(resolution) * z);
  }
  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < resolution && y < resolution && z < resolution;
  }
  bool occ(int x, int y, int z) const {
    return in_bounds(x, y, z) && occupancy[index(x, y, z)] != 0;
  }
  void set(int x, int y, int z, bool v = true) { occupancy[index(x, y, z)] = v ? 1 : 0; }

  bool has_color() const { return !color.empty(); }
  void ensure_color() {
    if (color.empty()) color.assign(occupancy.size() * 3, 0.f);
  }
  Eigen::Vector3f rgb(std::size_t i) const {
    return {color[3 * i], color[3 * i + 1], color[3 * i + 2]};
  }
  void set_rgb(std::size_t i, const Eigen::Vector3f& c) {
    color[3 * i] = c.x();
    color[3 * i + 1] = c.y();
    color[3 * i + 2] = c.z();
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : occupancy) n += v;
    return n;
  }
  bool empty() const { return count() == 0; }

  // voxel center in [0,1]^3
  Eigen::Vector3f center_of(int x, int y, int z) const {
    const float r = float(resolution);
    return {(x + 0.5f) / r, (y + 0.5f) / r, (z + 0.5f) / r};
  }

  // inclusive occupied bounding box [min, max] in voxel indices
  struct BBox {
    std::array<int, 3> lo{0, 0, 0}, hi{-1, -1, -1};
    bool valid() const { return hi[0] >= lo[0]; }
    std::array<float, 6> extents() const {
      return {float(lo[0]), float(lo[1]), float(lo[2]),
              float(hi[0]), float(hi[1]), float(hi[2])};
    }
  };

  BBox bbox() const {
    BBox b;
    b.lo = {resolution, resolution, resolution};
    b.hi = {-1, -1, -1};
    for (int z = 0; z < resolution; ++z)
      for (int y = 0; y < resolution; ++y)
        for (int x = 0; x < resolution; ++x)
          if (occupancy[index(x, y, z)]) {
            b.lo = {std::min(b.lo[0], x), std::min(b.lo[1], y), std::min(b.lo[2], z)};
            b.hi = {std::max(b.hi[0], x), std::max(b.hi[1], y), std::max(b.hi[2], z)};
          }
    return b;
  }

  // shift all voxels by an integer offset, clipping at the boundary
  VoxelShape shifted(int dx, int dy, int dz) const {
    VoxelShape out(resolution);
    if (has_color()) out.ensure_color();
    for (int z = 0; z < resolution; ++z)
      for (int y = 0; y < resolution; ++y)
        for (int x = 0; x < resolution; ++x) {
          if (!occupancy[index(x, y, z)]) continue;
          const int nx = x + dx, ny = y + dy, nz = z + dz;
          if (!in_bounds(nx, ny, nz)) continue;
          out.set(nx, ny, nz);
          if (has_color()) out.set_rgb(out.index(nx, ny, nz), rgb(index(x, y, z)));
        }
    return out;
  }
};

inline bool is_connected6(const VoxelShape& s) {
  const std::size_t total = s.count();
  if (total == 0) return false;
  std::vector<std::uint8_t> seen(s.occupancy.size(), 0);
  std::vector<std::array<int, 3>> stack;
  for (int z = 0; z < s.resolution && stack.empty(); ++z)
    for (int y = 0; y < s.resolution && stack.empty(); ++y)
      for (int x = 0; x < s.resolution && stack.empty(); ++x)
        if (s.occ(x, y, z)) stack.push_back({x, y, z});
  seen[s.index(stack[0][0], stack[0][1], stack[0][2])] = 1;
  std::size_t visited = 0;
  static constexpr int kDir[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                     {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  while (!stack.empty()) {
    auto [x, y, z] = stack.back();
    stack.pop_back();
    ++visited;
    for (const auto& d : kDir) {
      const int nx = x + d[0], ny = y + d[1], nz = z + d[2];
      if (s.occ(nx, ny, nz) && !seen[s.index(nx, ny, nz)]) {
        seen[s.index(nx, ny, nz)] = 1;
        stack.push_back({nx, ny, nz});
      }
    }
  }
  return visited == total;
}

inline double voxel_iou(const VoxelShape& a, const VoxelShape& b) {
  if (a.resolution != b.resolution)
    throw std::invalid_argument("voxel_iou: resolution mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.occupancy.size(); ++i) {
    inter += a.occupancy[i] & b.occupancy[i];
    uni += a.occupancy[i] | b.occupancy[i];
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

inline std::size_t voxel_diff_count(const VoxelShape& a, const VoxelShape& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.occupancy.size(); ++i)
    n += a.occupancy[i] ^ b.occupancy[i];
  return n;
}

// --- VXS container -------------------------------------------------------
// 16-byte header: magic "VXS1", u32 resolution, u32 flags (bit0: color),
// u32 reserved; then bit-packed occupancy, then optional 3*res^3 float32.

inline void save_vxs(const VoxelShape& s, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_vxs: cannot write " + path);
  f.write("VXS1", 4);
  const std::uint32_t res = std::uint32_t(s.resolution);
  const std::uint32_t flags = s.has_color() ? 1u : 0u;
  const std::uint32_t reserved = 0;
  f.write(reinterpret_cast<const char*>(&res), 4);
  f.write(reinterpret_cast<const char*>(&flags), 4);
  f.write(reinterpret_cast<const char*>(&reserved), 4);
  std::vector<std::uint8_t> packed((s.occupancy.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < s.occupancy.size(); ++i)
    if (s.occupancy[i]) packed[i / 8] |= std::uint8_t(1u << (i % 8));
  f.write(reinterpret_cast<const char*>(packed.data()), std::streamsize(packed.size()));
  if (s.has_color())
    f.write(reinterpret_cast<const char*>(s.color.data()),
            std::streamsize(sizeof(float) * s.color.size()));
  if (!f) throw std::runtime_error("save_vxs: write failed " + path);
}

inline VoxelShape load_vxs(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_vxs: cannot read " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != "VXS1")
    throw std::runtime_error("load_vxs: bad magic in " + path);
  std::uint32_t res = 0, flags = 0, reserved = 0;
  f.read(reinterpret_cast<char*>(&res), 4);
  f.read(reinterpret_cast<char*>(&flags), 4);
  f.read(reinterpret_cast<char*>(&reserved), 4);
  VoxelShape s{};
  s = VoxelShape(int(res));
  std::vector<std::uint8_t> packed((s.occupancy.size() + 7) / 8, 0);
  f.read(reinterpret_cast<char*>(packed.data()), std::streamsize(packed.size()));
  for (std::size_t i = 0; i < s.occupancy.size(); ++i)
    s.occupancy[i] = (packed[i / 8] >> (i % 8)) & 1u;
  if (flags & 1u) {
    s.color.resize(s.occupancy.size() * 3);
    f.read(reinterpret_cast<char*>(s.color.data()),
           std::streamsize(sizeof(float) * s.color.size()));
  }
  if (!f) throw std::runtime_error("load_vxs: truncated " + path);
  return s;
}

}  // namespace shapeup::synth
