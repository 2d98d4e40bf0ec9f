#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "shapeup/synth/partobject.hpp"
#include "shapeup/synth/render.hpp"
#include "shapeup/synth/voxel.hpp"

using namespace shapeup;
using namespace shapeup::synth;

namespace {

// exhaustive per-pixel ray cast: slab-test every voxel, keep the nearest hit
ViewRender render_oracle(const VoxelShape& shape, const ViewSpec& vs) {
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
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < S; ++j) {
      const Eigen::Vector3f origin = pixel_ray_origin(vs, cb, i, j);
      float best_t = std::numeric_limits<float>::infinity();
      int bx = -1, by = -1, bz = -1;
      for (int z = 0; z < res; ++z)
        for (int y = 0; y < res; ++y)
          for (int x = 0; x < res; ++x) {
            if (!shape.occ(x, y, z)) continue;
            float t = 0.f;
            if (voxel_entry_t(origin, dir, res, x, y, z, t) && t < best_t) {
              best_t = t;
              bx = x;
              by = y;
              bz = z;
            }
          }
      if (bx >= 0) {
        out.silhouette(i, j) = 1.f;
        out.depth(i, j) = best_t / kDepthRange;
        const Eigen::Vector3f n = voxel_normal(shape, bx, by, bz, dir);
        out.nx(i, j) = n.x();
        out.ny(i, j) = n.y();
        out.nz(i, j) = n.z();
      }
    }
  return out;
}

VoxelShape make_sphere(int res, float radius = 0.35f) {
  VoxelShape s(res);
  for (int z = 0; z < res; ++z)
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x)
        if ((s.center_of(x, y, z) - Eigen::Vector3f(0.5f, 0.5f, 0.5f)).norm() <= radius)
          s.set(x, y, z);
  return s;
}

}  // namespace

TEST_CASE("generate_part_object determinism and seed sensitivity") {
  auto a = generate_part_object(0, 2, 32);
  auto b = generate_part_object(0, 2, 32);
  CHECK(a.union_shape().occupancy == b.union_shape().occupancy);
  auto c = generate_part_object(1, 2, 32);
  CHECK(a.union_shape().occupancy != c.union_shape().occupancy);
  CHECK(a.parts.size() == 2);
}

TEST_CASE("generate_part_object union connected (flood-fill oracle)") {
  for (std::uint64_t seed : {7ULL, 11ULL, 23ULL}) {
    auto obj = generate_part_object(seed, 4, 32);
    CHECK(is_connected6(obj.union_shape()));
  }
}

TEST_CASE("part fragments disjoint, root largest, shape centered") {
  auto obj = generate_part_object(3, 3, 32);
  VoxelShape overlap(32);
  for (const auto& f : obj.fragments)
    for (std::size_t i = 0; i < overlap.occupancy.size(); ++i) {
      CHECK((overlap.occupancy[i] & f.occupancy[i]) == 0);
      overlap.occupancy[i] |= f.occupancy[i];
    }
  const std::size_t root_count = obj.fragments[std::size_t(obj.base)].count();
  for (int i = 0; i < int(obj.fragments.size()); ++i)
    if (i != obj.base) CHECK(obj.fragments[std::size_t(i)].count() < root_count);

  const auto bb = obj.union_shape().bbox();
  CHECK(std::abs((bb.lo[0] + bb.hi[0]) / 2.0 - 15.5) <= 1.5);
  CHECK(std::abs((bb.lo[1] + bb.hi[1]) / 2.0 - 15.5) <= 1.5);
  CHECK(std::abs((bb.lo[2] + bb.hi[2]) / 2.0 - 15.5) <= 1.5);
}

TEST_CASE("generate_part_object rejects bad arguments") {
  CHECK_THROWS_AS(generate_part_object(0, 2, 8), std::invalid_argument);
  CHECK_THROWS_AS(generate_part_object(0, 1, 32), std::invalid_argument);
  CHECK_THROWS_AS(generate_part_object(0, 5, 32), std::invalid_argument);
}

TEST_CASE("articulate rest pose, static root, bounded count drift") {
  auto seq = generate_anim(5, 3, 32, 8);
  const VoxelShape rest = articulate(seq, 0);
  CHECK(rest.occupancy == seq.object.union_shape().occupancy);
  const auto& root = seq.object.fragments[std::size_t(seq.object.base)];
  const std::size_t n0 = rest.count();
  for (int f = 1; f < seq.n_frames(); ++f) {
    const VoxelShape frame = articulate(seq, f);
    for (std::size_t i = 0; i < root.occupancy.size(); ++i)
      if (root.occupancy[i]) CHECK(frame.occupancy[i] == 1);
    const double drift = std::abs(double(frame.count()) - double(n0)) / double(n0);
    CHECK(drift < 0.30);
  }
  CHECK_THROWS_AS(articulate(seq, 8), std::out_of_range);
  CHECK_THROWS_AS(articulate(seq, -1), std::out_of_range);
}

TEST_CASE("render unit-ish cube front view gives axis-aligned square") {
  VoxelShape s(16);
  for (int z = 4; z < 12; ++z)
    for (int y = 4; y < 12; ++y)
      for (int x = 4; x < 12; ++x) s.set(x, y, z);
  ViewSpec vs{0.f, 0.f, 48};
  const auto r = render(s, vs);
  // silhouette is a filled axis-aligned rectangle: every row/col slice of the
  // silhouette is contiguous and identical across the covered band
  int min_i = 1 << 20, max_i = -1, min_j = 1 << 20, max_j = -1;
  for (int i = 0; i < 48; ++i)
    for (int j = 0; j < 48; ++j)
      if (r.silhouette(i, j) > 0.5f) {
        min_i = std::min(min_i, i);
        max_i = std::max(max_i, i);
        min_j = std::min(min_j, j);
        max_j = std::max(max_j, j);
      }
  CHECK(max_i >= 0);
  for (int i = min_i; i <= max_i; ++i)
    for (int j = min_j; j <= max_j; ++j) CHECK(r.silhouette(i, j) == 1.f);
  // symmetric square
  CHECK(max_i - min_i == max_j - min_j);
}

TEST_CASE("render angle periodicity") {
  auto obj = generate_part_object(9, 3, 16);
  const auto shape = obj.union_shape();
  ViewSpec a{33.f, 12.f, 24}, b{33.f + 360.f, 12.f, 24};
  const auto ra = render(shape, a), rb = render(shape, b);
  CHECK((ra.depth - rb.depth).abs().maxCoeff() == 0.f);
  CHECK((ra.silhouette - rb.silhouette).abs().maxCoeff() == 0.f);
}

TEST_CASE("render matches exhaustive ray-cast oracle at 8^3") {
  const VoxelShape sphere = make_sphere(8);
  for (const ViewSpec vs : {ViewSpec{0.f, 0.f, 16}, ViewSpec{37.f, 21.f, 16},
                            ViewSpec{-55.f, -10.f, 16}, ViewSpec{90.f, 0.f, 16}}) {
    const auto fast = render(sphere, vs);
    const auto slow = render_oracle(sphere, vs);
    CHECK((fast.silhouette - slow.silhouette).abs().maxCoeff() == 0.f);
    CHECK((fast.depth - slow.depth).abs().maxCoeff() == 0.f);  // bit-identical
    CHECK((fast.nx - slow.nx).abs().maxCoeff() == 0.f);
  }
}

TEST_CASE("render invariants: depth<1 iff silhouette, unit normals") {
  auto obj = generate_part_object(13, 4, 32);
  const auto shape = obj.union_shape();
  for (const auto& vs : sample_views(2, 3, 32)) {
    const auto r = render(shape, vs);
    for (int i = 0; i < vs.image_size; ++i)
      for (int j = 0; j < vs.image_size; ++j) {
        if (r.silhouette(i, j) > 0.5f) {
          CHECK(r.depth(i, j) < 1.f);
          const float n = std::sqrt(r.nx(i, j) * r.nx(i, j) + r.ny(i, j) * r.ny(i, j) +
                                    r.nz(i, j) * r.nz(i, j));
          CHECK(std::abs(n - 1.f) < 1e-3f);
        } else {
          CHECK(r.depth(i, j) == 1.f);
          CHECK(r.nx(i, j) == 0.f);
        }
      }
  }
  CHECK_THROWS_AS(render(VoxelShape(8), ViewSpec{}), std::invalid_argument);
}

TEST_CASE("sample_views counts, ranges, determinism") {
  const auto views = sample_views(3, 20);
  CHECK(views.size() == 26);
  for (std::size_t i = 6; i < views.size(); ++i) {
    CHECK(views[i].azimuth >= -70.f);
    CHECK(views[i].azimuth <= 70.f);
    CHECK(views[i].elevation >= -15.f);
    CHECK(views[i].elevation <= 30.f);
  }
  CHECK(sample_views(3, 1).size() == 7);
  const auto again = sample_views(3, 20);
  for (std::size_t i = 0; i < views.size(); ++i) {
    CHECK(views[i].azimuth == again[i].azimuth);
    CHECK(views[i].elevation == again[i].elevation);
  }
  CHECK_THROWS_AS(sample_views(3, 0), std::invalid_argument);
}

TEST_CASE("vxs round trip with and without color") {
  auto obj = generate_part_object(21, 3, 32);
  const VoxelShape s = obj.union_shape();
  save_vxs(s, "/tmp/shapeup_test.vxs");
  const VoxelShape t = load_vxs("/tmp/shapeup_test.vxs");
  CHECK(t.resolution == s.resolution);
  CHECK(t.occupancy == s.occupancy);
  REQUIRE(t.has_color());
  CHECK(t.color == s.color);

  VoxelShape plain = make_sphere(8);
  save_vxs(plain, "/tmp/shapeup_test2.vxs");
  const VoxelShape u = load_vxs("/tmp/shapeup_test2.vxs");
  CHECK(u.occupancy == plain.occupancy);
  CHECK(!u.has_color());
  std::remove("/tmp/shapeup_test.vxs");
  std::remove("/tmp/shapeup_test2.vxs");
}

TEST_CASE("pfm and render bundle round trip") {
  auto obj = generate_part_object(17, 2, 16);
  const auto r = render(obj.union_shape(), ViewSpec{10.f, 5.f, 24});
  save_view_render(r, "/tmp/shapeup_test_render");
  const auto q = load_view_render("/tmp/shapeup_test_render");
  CHECK((q.depth - r.depth).abs().maxCoeff() == 0.f);
  CHECK((q.silhouette - r.silhouette).abs().maxCoeff() == 0.f);
  CHECK(q.view.azimuth == r.view.azimuth);
  REQUIRE(q.color.has_value());
  CHECK(((*q.color)[1] - (*r.color)[1]).abs().maxCoeff() == 0.f);
  for (const char* ext : {".sil.pfm", ".depth.pfm", ".nx.pfm", ".ny.pfm", ".nz.pfm",
                          ".r.pfm", ".g.pfm", ".b.pfm", ".view.txt"})
    std::remove((std::string("/tmp/shapeup_test_render") + ext).c_str());
}

TEST_CASE("deform and palette swap") {
  auto obj = generate_part_object(31, 3, 32);
  const VoxelShape base = obj.union_shape();
  const VoxelShape def = deform(obj, Eigen::Vector3f(1.3f, 0.85f, 1.f), 0.2f);
  CHECK(def.occupancy != base.occupancy);
  const VoxelShape swapped = palette_swap(obj, 99);
  CHECK(swapped.occupancy == base.occupancy);
  CHECK(swapped.color != base.color);
}
