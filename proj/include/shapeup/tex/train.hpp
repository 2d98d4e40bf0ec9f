#pragma once

#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include "shapeup/data/triplet.hpp"
#include "shapeup/tex/model.hpp"

namespace shapeup::tex {

// one texture-supervision item derived from an edit triplet
struct TexItem {
  MVSet source_mv;
  MVSet target_mv;
  synth::ViewRender edit_image;
  GeomCond geom;  // renders of the edited geometry
};

inline TexItem make_tex_item(const data::EditTriplet& t, int view_size) {
  TexItem item;
  item.source_mv = render_mv(t.source, view_size);
  item.target_mv = render_mv(t.target, view_size);
  synth::ViewSpec vs = t.condition.view;
  vs.image_size = view_size;
  item.edit_image = synth::render(t.target, vs);
  item.geom = render_geom(t.target, view_size);
  return item;
}

struct TexTrainConfig {
  long steps = 1000;
  double lr = 1e-3;
  bool adapters_only = true;  // default: frozen backbone
  std::uint64_t seed = 0;
};

struct TexTrainLog {
  std::vector<double> losses;
  long image_drops = 0;
  long mv_drops = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

template <class S>
TexTrainLog tex_train(TexModel<S>& model, const std::vector<TexItem>& items,
                      const TexTrainConfig& tc) {
  using Mat = typename TexModel<S>::Mat;
  if (items.empty()) throw std::invalid_argument("tex_train: no items");

  // precompute conditions and clean target stacks
  std::vector<TexCond<S>> conds;
  std::vector<std::array<Mat, 6>> targets;
  for (const auto& it : items) {
    conds.push_back(model.make_cond(it.edit_image, it.source_mv));
    std::array<Mat, 6> x1;
    for (std::size_t v = 0; v < 6; ++v)
      x1[v] = detail::color_mat<S>(it.target_mv.views[v]);
    targets.push_back(std::move(x1));
  }

  Rng rng(sub_seed(tc.seed, "tex-train"));
  nn::Adam<S> opt(tc.lr);
  auto trainable = [&](const std::string& name) {
    return !tc.adapters_only || TexModel<S>::is_adapter(name);
  };
  const int V = model.cfg.view_size;
  TexTrainLog log;

  for (long step = 0; step < tc.steps; ++step) {
    const std::size_t i = std::size_t(rng.below(items.size()));
    const S time = S(rng.uniform());
    const bool di = rng.uniform() < model.cfg.p_drop_image;
    const bool dm = rng.uniform() < model.cfg.p_drop_mv;
    log.image_drops += di;
    log.mv_drops += dm;

    TexCond<S> cond = conds[i];
    cond.image_dropped = di;
    cond.mv_dropped = dm;

    std::array<Mat, 6> zt, vel;
    for (std::size_t v = 0; v < 6; ++v) {
      Mat z0(V * V, 3);
      for (Eigen::Index k = 0; k < z0.size(); ++k) z0.data()[k] = S(rng.normal());
      zt[v] = (S(1) - time) * z0 + time * targets[i][v];
      vel[v] = targets[i][v] - z0;
    }

    model.params.zero_grads();
    nn::Tape<S> t;
    nn::Binder<S> bind(t, model.params);
    const auto pred = model.forward_on_tape(t, bind, zt, time, cond, items[i].geom);
    typename nn::Tape<S>::Var loss;
    for (std::size_t v = 0; v < 6; ++v) {
      auto lv = t.mse(pred[v], t.leaf(vel[v]));
      loss = v == 0 ? lv : t.add(loss, lv);
    }
    loss = t.scale(loss, S(1.0 / 6.0));
    const double lval = double(t.val(loss)(0, 0));
    if (!std::isfinite(lval))
      throw std::runtime_error("tex_train: loss diverged at step " +
                               std::to_string(step));
    t.backward(loss);
    bind.harvest(trainable);
    opt.step(model.params, trainable);
    log.losses.push_back(lval);
  }
  const std::size_t w = std::min<std::size_t>(50, log.losses.size());
  double a = 0, b = 0;
  for (std::size_t j = 0; j < w; ++j) {
    a += log.losses[j];
    b += log.losses[log.losses.size() - 1 - j];
  }
  log.initial_loss = a / double(w);
  log.final_loss = b / double(w);
  return log;
}

// Deterministic held-out style probe: fixed noise, times, and conditions, so
// before/after comparisons are not confounded by the sampling noise.
template <class S>
double tex_eval_loss(const TexModel<S>& model, const std::vector<TexItem>& items,
                     std::uint64_t seed, int n_probes = 4) {
  using Mat = typename TexModel<S>::Mat;
  if (items.empty()) throw std::invalid_argument("tex_eval_loss: no items");
  Rng rng(sub_seed(seed, "tex-eval"));
  const int V = model.cfg.view_size;
  double total = 0.0;
  for (int p = 0; p < n_probes; ++p) {
    const auto& it = items[std::size_t(rng.below(items.size()))];
    const S time = S(rng.uniform());
    const TexCond<S> cond = model.make_cond(it.edit_image, it.source_mv);
    std::array<Mat, 6> zt, vel;
    for (std::size_t v = 0; v < 6; ++v) {
      const Mat x1 = detail::color_mat<S>(it.target_mv.views[v]);
      Mat z0(V * V, 3);
      for (Eigen::Index k = 0; k < z0.size(); ++k) z0.data()[k] = S(rng.normal());
      zt[v] = (S(1) - time) * z0 + time * x1;
      vel[v] = x1 - z0;
    }
    const auto pred = model.forward(zt, time, cond, it.geom);
    for (std::size_t v = 0; v < 6; ++v)
      total += double((pred[v] - vel[v]).array().square().mean()) / 6.0;
  }
  return total / double(n_probes);
}

// ---- guided sampling -----------------------------------------------------

struct TexGuidance {
  double s_image = 2.5;
  double s_mv = 3.5;
  int steps = 8;
};

// eps(0,0) + s_i (eps(ci,0) - eps(0,0)) + s_mv (eps(ci,cmv) - eps(0,0)) in the
// gathered form so the limit cases reduce exactly
template <class M>
M tex_cfg(const M& e_uncond, const M& e_image, const M& e_both, double s_i,
          double s_mv) {
  using Sc = typename M::Scalar;
  return Sc(1.0 - s_i - s_mv) * e_uncond + Sc(s_i) * e_image + Sc(s_mv) * e_both;
}

template <class S>
MVSet generate_views(const TexModel<S>& model, const synth::ViewRender& edit_image,
                     const MVSet& source_mv, const GeomCond& geom,
                     const TexGuidance& g, std::uint64_t seed) {
  using Mat = typename TexModel<S>::Mat;
  const int V = model.cfg.view_size;
  TexCond<S> both = model.make_cond(edit_image, source_mv);
  TexCond<S> img_only = both;
  img_only.mv_dropped = true;
  TexCond<S> uncond = both;
  uncond.image_dropped = true;
  uncond.mv_dropped = true;

  Rng rng(sub_seed(seed, "tex-sample"));
  std::array<Mat, 6> z;
  for (auto& m : z) {
    m.resize(V * V, 3);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = S(rng.normal());
  }
  const S dt = S(1) / S(g.steps);
  for (int s = 0; s < g.steps; ++s) {
    const S time = S(s) / S(g.steps);
    const auto eu = model.forward(z, time, uncond, geom);
    const auto ei = model.forward(z, time, img_only, geom);
    const auto eb = model.forward(z, time, both, geom);
    for (std::size_t v = 0; v < 6; ++v)
      z[v] += dt * tex_cfg(eu[v], ei[v], eb[v], g.s_image, g.s_mv);
  }

  // assemble output views over the edited geometry; background is forced to
  // the mid-gray canvas
  MVSet out;
  for (std::size_t v = 0; v < 6; ++v) {
    out.views[v] = geom.views[v];
    std::array<synth::Image, 3> color{synth::Image::Zero(V, V),
                                      synth::Image::Zero(V, V),
                                      synth::Image::Zero(V, V)};
    for (int y = 0; y < V; ++y)
      for (int x = 0; x < V; ++x)
        for (int c = 0; c < 3; ++c) {
          const float raw = float(z[v](y * V + x, c));
          color[std::size_t(c)](y, x) =
              geom.views[v].silhouette(y, x) > 0.f
                  ? std::min(1.f, std::max(0.f, raw))
                  : 0.5f;
        }
    out.views[v].color = color;
  }
  return out;
}

// ---- baking --------------------------------------------------------------

namespace detail {

// canonical axis (component index, sign) of an orthogonal view direction
inline std::pair<int, int> view_axis(const synth::ViewSpec& vs) {
  const auto b = synth::camera_basis(vs);
  int axis = 0;
  for (int k = 1; k < 3; ++k)
    if (std::abs(b.v[k]) > std::abs(b.v[axis])) axis = k;
  return {axis, b.v[axis] > 0.f ? 1 : -1};
}

inline bool column_visible(const synth::VoxelShape& s, int x, int y, int z,
                           int axis, int sign) {
  int c[3] = {x, y, z};
  for (c[axis] += sign; c[axis] >= 0 && c[axis] < s.resolution; c[axis] += sign)
    if (s.occ(c[0], c[1], c[2])) return false;
  return true;
}

}  // namespace detail

// Visibility-weighted projection of the six views onto the shape's surface
// voxels (weight |normal . view-axis|, hard occlusion along the view column);
// interior and never-visible voxels inherit the nearest baked color.
inline synth::VoxelShape bake(const MVSet& views, const synth::VoxelShape& shape) {
  views.validate();
  if (shape.empty()) throw std::invalid_argument("bake: empty shape");
  const int res = shape.resolution;
  synth::VoxelShape out = shape;
  out.ensure_color();

  std::vector<std::uint8_t> baked(shape.occupancy.size(), 0);
  for (int z = 0; z < res; ++z)
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) {
        if (!shape.occ(x, y, z)) continue;
        float wsum = 0.f;
        Eigen::Vector3f csum = Eigen::Vector3f::Zero();
        for (const auto& view : views.views) {
          const auto [axis, sign] = detail::view_axis(view.view);
          if (!detail::column_visible(shape, x, y, z, axis, sign)) continue;
          const auto cb = synth::camera_basis(view.view);
          const Eigen::Vector3f n = synth::voxel_normal(shape, x, y, z, -cb.v);
          const float w = std::abs(n.dot(cb.v));
          if (w <= 0.f) continue;
          const Eigen::Vector3f p = shape.center_of(x, y, z);
          const Eigen::Vector3f d = p - Eigen::Vector3f(0.5f, 0.5f, 0.5f);
          const float su = d.dot(cb.right), sv = d.dot(cb.up);
          const float sz = float(view.view.image_size);
          const int j = int(std::lround((su / synth::kOrthoExtent + 0.5f) * sz - 0.5f));
          const int i = int(std::lround((0.5f - sv / synth::kOrthoExtent) * sz - 0.5f));
          if (i < 0 || i >= int(sz) || j < 0 || j >= int(sz)) continue;
          const auto& col = *view.color;
          csum += w * Eigen::Vector3f(col[0](i, j), col[1](i, j), col[2](i, j));
          wsum += w;
        }
        if (wsum > 0.f) {
          const std::size_t vi = shape.index(x, y, z);
          for (int c = 0; c < 3; ++c) out.color[3 * vi + std::size_t(c)] = csum[c] / wsum;
          baked[vi] = 1;
        }
      }

  // flood-fill the rest (interiors, fully occluded voxels) from baked voxels
  std::deque<std::array<int, 3>> frontier;
  for (int z = 0; z < res; ++z)
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x)
        if (baked[shape.index(x, y, z)]) frontier.push_back({x, y, z});
  static const int kN[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                               {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
  while (!frontier.empty()) {
    const auto [x, y, z] = frontier.front();
    frontier.pop_front();
    const std::size_t vi = shape.index(x, y, z);
    for (const auto& d : kN) {
      const int nx = x + d[0], ny = y + d[1], nz = z + d[2];
      if (!shape.occ(nx, ny, nz)) continue;
      const std::size_t ni = shape.index(nx, ny, nz);
      if (baked[ni]) continue;
      baked[ni] = 1;
      for (int c = 0; c < 3; ++c)
        out.color[3 * ni + std::size_t(c)] = out.color[3 * vi + std::size_t(c)];
      frontier.push_back({nx, ny, nz});
    }
  }
  return out;
}

}  // namespace shapeup::tex
