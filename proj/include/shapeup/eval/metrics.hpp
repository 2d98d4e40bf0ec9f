#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "shapeup/codec/codec.hpp"
#include "shapeup/synth/render.hpp"
#include "shapeup/synth/voxel.hpp"

namespace shapeup::eval {

using synth::Image;

// ---- SSIM ----------------------------------------------------------------

namespace detail {

inline std::vector<double> gaussian_kernel(int radius, double sigma) {
  std::vector<double> k(std::size_t(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i)
    k[std::size_t(i + radius)] = std::exp(-0.5 * double(i * i) / (sigma * sigma));
  return k;
}

// weighted local filtering with border-truncated, renormalized windows,
// realized as separable passes over the image and a ones-image
inline Eigen::ArrayXXd local_mean(const Eigen::ArrayXXd& x,
                                  const std::vector<double>& k) {
  const int radius = (int(k.size()) - 1) / 2;
  const Eigen::Index R = x.rows(), C = x.cols();
  Eigen::ArrayXXd h(R, C), hw(R, C);
  for (Eigen::Index i = 0; i < R; ++i)
    for (Eigen::Index j = 0; j < C; ++j) {
      double s = 0.0, w = 0.0;
      for (int d = -radius; d <= radius; ++d) {
        const Eigen::Index jj = j + d;
        if (jj < 0 || jj >= C) continue;
        s += k[std::size_t(d + radius)] * x(i, jj);
        w += k[std::size_t(d + radius)];
      }
      h(i, j) = s;
      hw(i, j) = w;
    }
  Eigen::ArrayXXd v(R, C), vw(R, C);
  for (Eigen::Index j = 0; j < C; ++j)
    for (Eigen::Index i = 0; i < R; ++i) {
      double s = 0.0, sw = 0.0, w = 0.0;
      for (int d = -radius; d <= radius; ++d) {
        const Eigen::Index ii = i + d;
        if (ii < 0 || ii >= R) continue;
        s += k[std::size_t(d + radius)] * h(ii, j);
        sw += k[std::size_t(d + radius)] * hw(ii, j);
        w += k[std::size_t(d + radius)];
      }
      (void)w;
      v(i, j) = s;
      vw(i, j) = sw;
    }
  return v / vw;
}

}  // namespace detail

// Windowed SSIM, 11x11 Gaussian (sigma 1.5), C1=(0.01)^2, C2=(0.03)^2 on a
// unit dynamic range. Borders use truncated renormalized windows.
inline double ssim(const Image& a, const Image& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("ssim: size mismatch");
  const auto k = detail::gaussian_kernel(5, 1.5);
  const Eigen::ArrayXXd x = a.cast<double>(), y = b.cast<double>();
  const Eigen::ArrayXXd mx = detail::local_mean(x, k);
  const Eigen::ArrayXXd my = detail::local_mean(y, k);
  const Eigen::ArrayXXd sxx = detail::local_mean(x * x, k) - mx * mx;
  const Eigen::ArrayXXd syy = detail::local_mean(y * y, k) - my * my;
  const Eigen::ArrayXXd sxy = detail::local_mean(x * y, k) - mx * my;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Eigen::ArrayXXd num = (2.0 * mx * my + c1) * (2.0 * sxy + c2);
  const Eigen::ArrayXXd den = (mx * mx + my * my + c1) * (sxx + syy + c2);
  return (num / den).mean();
}

// ---- perceptual distance -------------------------------------------------

// Multi-scale random-filter-bank distance: the raw pixel L2 plus, per level,
// the L2 between 3x3 filter responses, halving resolution four times. The
// bank is fixed by an internal seed, so the metric is stable across runs.
inline double perceptual_dist(const Image& a, const Image& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("perceptual_dist: size mismatch");
  Rng rng(sub_seed(0x9e1b7u, "perceptual-bank"));
  const int n_filters = 4, levels = 4;
  std::vector<Eigen::Matrix3d> bank;
  for (int f = 0; f < n_filters; ++f) {
    Eigen::Matrix3d m;
    for (int i = 0; i < 9; ++i) m.data()[i] = rng.normal() / 3.0;
    bank.push_back(m);
  }

  Eigen::ArrayXXd x = a.cast<double>(), y = b.cast<double>();
  double total = std::sqrt((x - y).square().mean());
  for (int level = 0; level < levels; ++level) {
    const Eigen::Index R = x.rows(), C = x.cols();
    if (R < 3 || C < 3) break;
    for (const auto& f : bank) {
      double acc = 0.0;
      for (Eigen::Index i = 1; i + 1 < R; ++i)
        for (Eigen::Index j = 1; j + 1 < C; ++j) {
          double rx = 0.0, ry = 0.0;
          for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj) {
              rx += f(di + 1, dj + 1) * x(i + di, j + dj);
              ry += f(di + 1, dj + 1) * y(i + di, j + dj);
            }
          acc += (rx - ry) * (rx - ry);
        }
      total += std::sqrt(acc / double((R - 2) * (C - 2)));
    }
    if (R < 4 || C < 4) break;
    Eigen::ArrayXXd x2(R / 2, C / 2), y2(R / 2, C / 2);
    for (Eigen::Index i = 0; i < R / 2; ++i)
      for (Eigen::Index j = 0; j < C / 2; ++j) {
        x2(i, j) = 0.25 * (x(2 * i, 2 * j) + x(2 * i + 1, 2 * j) +
                           x(2 * i, 2 * j + 1) + x(2 * i + 1, 2 * j + 1));
        y2(i, j) = 0.25 * (y(2 * i, 2 * j) + y(2 * i + 1, 2 * j) +
                           y(2 * i, 2 * j + 1) + y(2 * i + 1, 2 * j + 1));
      }
    x = std::move(x2);
    y = std::move(y2);
  }
  return total;
}

// ---- embeddings ----------------------------------------------------------

template <class S>
using EmbedVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
EmbedVec<S> embed_shape(const codec::Codec<S>& c, const synth::VoxelShape& s) {
  const auto post = c.encode(s);
  return Eigen::Map<const EmbedVec<S>>(post.mean.data(), post.mean.size());
}

// Image embedding through the same encoder: unproject the render into a
// surface point cloud (position map + normals + color) and pool it.
template <class S>
EmbedVec<S> embed_render(const codec::Codec<S>& c, const synth::ViewRender& r) {
  const int sz = r.view.image_size;
  const auto pos = synth::position_map(r);
  typename codec::Codec<S>::Points pts;
  std::vector<std::array<float, 9>> rows;
  for (int i = 0; i < sz; ++i)
    for (int j = 0; j < sz; ++j) {
      if (r.silhouette(i, j) <= 0.f) continue;
      std::array<float, 9> row{pos[0](i, j), pos[1](i, j), pos[2](i, j),
                               r.nx(i, j),   r.ny(i, j),   r.nz(i, j),
                               0.5f,         0.5f,         0.5f};
      if (r.color)
        for (int ch = 0; ch < 3; ++ch)
          row[std::size_t(6 + ch)] = (*r.color)[std::size_t(ch)](i, j);
      rows.push_back(row);
    }
  if (rows.empty())
    throw std::invalid_argument("embed_render: empty silhouette");
  pts.feats.resize(Eigen::Index(rows.size()), 9);
  pts.pos.resize(Eigen::Index(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int ch = 0; ch < 9; ++ch)
      pts.feats(Eigen::Index(i), ch) = S(rows[i][std::size_t(ch)]);
    pts.pos.row(Eigen::Index(i)) << S(rows[i][0]), S(rows[i][1]), S(rows[i][2]);
  }
  const auto post = c.encode_points(pts);
  return Eigen::Map<const EmbedVec<S>>(post.mean.data(), post.mean.size());
}

template <class S>
double cosine(const EmbedVec<S>& a, const EmbedVec<S>& b) {
  const double na = double(a.norm()), nb = double(b.norm());
  if (na == 0.0 || nb == 0.0)
    throw std::invalid_argument("cosine: zero-norm embedding");
  return double(a.template cast<double>().dot(b.template cast<double>())) / (na * nb);
}

template <class S>
double embed_sim(const codec::Codec<S>& c, const synth::VoxelShape& a,
                 const synth::VoxelShape& b) {
  return cosine(embed_shape(c, a), embed_shape(c, b));
}

// directional similarity with an explicit degenerate-delta flag
struct DirSim {
  double value = 0.0;
  bool degenerate = false;
};

template <class S>
DirSim dir_sim(const EmbedVec<S>& e_src, const EmbedVec<S>& e_pred,
               const EmbedVec<S>& e_cond) {
  const EmbedVec<S> dp = e_pred - e_src;
  const EmbedVec<S> dc = e_cond - e_src;
  if (double(dp.norm()) < 1e-9 || double(dc.norm()) < 1e-9) return {0.0, true};
  return {cosine(dp, dc), false};
}

// ---- visibility / occluded fidelity --------------------------------------

// Per-voxel visibility from a view: cast the orthographic ray through each
// occupied voxel's center and keep the voxel iff it is the first hit. Grid
// walk is a DDA; the test oracle re-derives this with exhaustive slab tests.
inline std::vector<std::uint8_t> visible_voxels(const synth::VoxelShape& s,
                                                const synth::ViewSpec& view) {
  const auto cb = synth::camera_basis(view);
  const Eigen::Vector3f dir = -cb.v;
  const int res = s.resolution;
  std::vector<std::uint8_t> vis(s.occupancy.size(), 0);
  for (int z = 0; z < res; ++z)
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) {
        if (!s.occ(x, y, z)) continue;
        const Eigen::Vector3f p = s.center_of(x, y, z);
        const Eigen::Vector3f origin = p - dir * 4.f;  // well outside the cube
        // clip to the unit cube
        float t0 = 0.f, t1 = 8.f;
        for (int a = 0; a < 3; ++a) {
          if (std::abs(dir[a]) < 1e-12f) {
            if (origin[a] < 0.f || origin[a] > 1.f) { t0 = 1.f; t1 = 0.f; }
            continue;
          }
          float ta = (0.f - origin[a]) / dir[a];
          float tb = (1.f - origin[a]) / dir[a];
          if (ta > tb) std::swap(ta, tb);
          t0 = std::max(t0, ta);
          t1 = std::min(t1, tb);
        }
        if (t0 > t1) continue;
        Eigen::Vector3f q = origin + dir * (t0 + 1e-5f);
        int cx = std::min(res - 1, std::max(0, int(std::floor(q.x() * res))));
        int cy = std::min(res - 1, std::max(0, int(std::floor(q.y() * res))));
        int cz = std::min(res - 1, std::max(0, int(std::floor(q.z() * res))));
        const int step[3] = {dir.x() > 0 ? 1 : -1, dir.y() > 0 ? 1 : -1,
                             dir.z() > 0 ? 1 : -1};
        float tmax[3], tdelta[3];
        const float inv_res = 1.f / float(res);
        int c[3] = {cx, cy, cz};
        for (int a = 0; a < 3; ++a) {
          if (std::abs(dir[a]) < 1e-12f) {
            tmax[a] = std::numeric_limits<float>::infinity();
            tdelta[a] = std::numeric_limits<float>::infinity();
            continue;
          }
          const float next =
              (float(c[a]) + (step[a] > 0 ? 1.f : 0.f)) * inv_res;
          tmax[a] = (next - origin[a]) / dir[a];
          tdelta[a] = inv_res / std::abs(dir[a]);
        }
        bool first_hit_is_target = false;
        while (c[0] >= 0 && c[0] < res && c[1] >= 0 && c[1] < res && c[2] >= 0 &&
               c[2] < res) {
          if (s.occ(c[0], c[1], c[2])) {
            first_hit_is_target = (c[0] == x && c[1] == y && c[2] == z);
            break;
          }
          const int a = tmax[0] < tmax[1] ? (tmax[0] < tmax[2] ? 0 : 2)
                                          : (tmax[1] < tmax[2] ? 1 : 2);
          c[a] += step[a];
          tmax[a] += tdelta[a];
        }
        if (first_hit_is_target) vis[s.index(x, y, z)] = 1;
      }
  return vis;
}

struct OcclResult {
  double embed = 0.0;  // mean embedding similarity over the occluded-side views
  double iou = 1.0;    // IoU on voxels hidden from the condition view
};

// Renders both shapes from the view opposite the condition and +-120 degrees,
// compares embeddings there, and computes IoU on the voxel set invisible from
// the condition view (optionally excluding the ground-truth edit mask).
template <class S>
OcclResult occluded_fidelity(const codec::Codec<S>& c, const synth::VoxelShape& pred,
                             const synth::VoxelShape& src,
                             const synth::ViewSpec& cond_view,
                             const std::vector<std::uint8_t>& edit_mask = {}) {
  if (pred.resolution != src.resolution)
    throw std::invalid_argument("occluded_fidelity: resolution mismatch");
  OcclResult out;

  const auto vis = visible_voxels(src, cond_view);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < src.occupancy.size(); ++i) {
    if (vis[i]) continue;  // occluded set only
    if (!edit_mask.empty() && edit_mask[i]) continue;
    const bool a = pred.occupancy[i] != 0, b = src.occupancy[i] != 0;
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  out.iou = uni == 0 ? 1.0 : double(inter) / double(uni);

  double acc = 0.0;
  int n = 0;
  for (float delta : {180.f, 120.f, -120.f}) {
    synth::ViewSpec v = cond_view;
    v.azimuth = synth::normalize_azimuth(cond_view.azimuth + delta);
    try {
      const auto ep = embed_render(c, synth::render(pred, v));
      const auto es = embed_render(c, synth::render(src, v));
      acc += cosine(ep, es);
      ++n;
    } catch (const std::invalid_argument&) {
      // empty silhouette from this side: skip the view
    }
  }
  out.embed = n == 0 ? 0.0 : acc / double(n);
  return out;
}

}  // namespace shapeup::eval
