#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "shapeup/core/params.hpp"
#include "shapeup/core/rng.hpp"
#include "shapeup/core/tape.hpp"
#include "shapeup/synth/render.hpp"

namespace shapeup::tex {

// the six canonical orthogonal views with the color plane present
struct MVSet {
  std::array<synth::ViewRender, 6> views;

  int image_size() const { return views[0].view.image_size; }

  void validate() const {
    const auto specs = synth::orthogonal_views(image_size());
    for (std::size_t i = 0; i < 6; ++i) {
      const auto& v = views[i];
      if (!v.color) throw std::invalid_argument("MVSet: view missing color plane");
      if (v.view.azimuth != specs[i].azimuth || v.view.elevation != specs[i].elevation ||
          v.view.image_size != image_size())
        throw std::invalid_argument("MVSet: views not in canonical orthogonal order");
    }
  }
};

inline MVSet render_mv(const synth::VoxelShape& shape, int image_size) {
  MVSet mv;
  const auto specs = synth::orthogonal_views(image_size);
  for (std::size_t i = 0; i < 6; ++i) mv.views[i] = synth::render(shape, specs[i]);
  return mv;
}

struct TexConfig {
  int view_size = 64;
  int base_ch = 16;   // conv width C; attention width is 2C
  int patch = 4;      // condition token patch size
  bool concat_mv = false;  // ablation: source MVs concatenated into the input
  double p_drop_image = 0.2;
  double p_drop_mv = 0.1;
  std::uint64_t seed = 0;
};

namespace detail {

// flattened patch features over the 8 render channels, same layout as the
// geometry stage's image embedder
template <class S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> patch_features(
    const synth::ViewRender& r, int patch) {
  const int sz = r.view.image_size, p = patch;
  const int np = sz / p;
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> out(np * np, p * p * 8);
  auto chan = [&](int c, int i, int j) -> float {
    switch (c) {
      case 0: return r.silhouette(i, j);
      case 1: return r.depth(i, j);
      case 2: return r.nx(i, j);
      case 3: return r.ny(i, j);
      case 4: return r.nz(i, j);
      default: return r.color ? (*r.color)[std::size_t(c - 5)](i, j) : 0.5f;
    }
  };
  for (int py = 0; py < np; ++py)
    for (int px = 0; px < np; ++px) {
      int col = 0;
      for (int c = 0; c < 8; ++c)
        for (int dy = 0; dy < p; ++dy)
          for (int dx = 0; dx < p; ++dx)
            out(py * np + px, col++) = S(chan(c, py * p + dy, px * p + dx));
    }
  return out;
}

// pixel-major (row = y*V+x) channel matrix from the color planes
template <class S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> color_mat(const synth::ViewRender& r) {
  if (!r.color) throw std::invalid_argument("color_mat: render has no color");
  const int sz = r.view.image_size;
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> out(sz * sz, 3);
  for (int y = 0; y < sz; ++y)
    for (int x = 0; x < sz; ++x)
      for (int c = 0; c < 3; ++c)
        out(y * sz + x, c) = S((*r.color)[std::size_t(c)](y, x));
  return out;
}

// structural geometry condition: silhouette, normals, position map (7 ch)
template <class S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> geom_mat(const synth::ViewRender& r) {
  const int sz = r.view.image_size;
  const auto pos = synth::position_map(r);
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> out(sz * sz, 7);
  for (int y = 0; y < sz; ++y)
    for (int x = 0; x < sz; ++x) {
      const int row = y * sz + x;
      out(row, 0) = S(r.silhouette(y, x));
      out(row, 1) = S(r.nx(y, x));
      out(row, 2) = S(r.ny(y, x));
      out(row, 3) = S(r.nz(y, x));
      for (int c = 0; c < 3; ++c) out(row, 4 + c) = S(pos[std::size_t(c)](y, x));
    }
  return out;
}

}  // namespace detail

// renders of the edited untextured shape, one per canonical view
struct GeomCond {
  std::array<synth::ViewRender, 6> views;
};

inline GeomCond render_geom(const synth::VoxelShape& shape, int image_size) {
  GeomCond g;
  const auto specs = synth::orthogonal_views(image_size);
  for (std::size_t i = 0; i < 6; ++i) g.views[i] = synth::render(shape, specs[i]);
  return g;
}

// Per-step conditioning with dropout flags; geometry is structural and never
// dropped or guided.
template <class S>
struct TexCond {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  Mat image_feats;               // P x patch-feature
  std::array<Mat, 6> mv_feats;   // per-view patch features of the source MVs
  std::array<Mat, 6> mv_colors;  // per-view V^2 x 3 (for the concat variant)
  bool image_dropped = false;
  bool mv_dropped = false;
};

// Multi-scale convolutional denoiser over the 6-view stack, weights shared
// across views. Adapter layers (cross-attention, geometry encoder, condition
// projections, view codes) are the trainable set in the default mode.
template <class S>
class TexModel {
public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using Tape = nn::Tape<S>;
  using Var = typename Tape::Var;

  TexConfig cfg;
  nn::ParamSet<S> params;

  explicit TexModel(const TexConfig& config) : cfg(config) {
    Rng rng(sub_seed(cfg.seed, "tex-init"));
    const int C = cfg.base_ch, A = 2 * C;
    const int pf = cfg.patch * cfg.patch * 8;
    const int np = (cfg.view_size / cfg.patch) * (cfg.view_size / cfg.patch);

    auto lin = [&](const std::string& n, int in, int out) {
      params.add(n + ".w", in, out, rng, 1.0 / std::sqrt(double(in)));
      params.add_zeros(n + ".b", 1, out);
    };
    lin("u.in", 9 * 3, C);
    if (cfg.concat_mv)
      params.add_zeros("u.in_mv.w", 9 * 3, C);  // widened input, zero-init
    lin("u.d1", 9 * C, C);
    lin("u.d2", 9 * C, A);
    lin("u.mid", 9 * A, A);
    lin("u.u1", 9 * (A + A), C);
    lin("u.u2", 9 * (C + C), C);
    lin("u.out", 9 * C, 3);
    lin("time.fc1", 17, A);
    lin("time.fc2", A, A);
    // adapters
    lin("xa.q", A, A);
    lin("xa.k", A, A);
    lin("xa.v", A, A);
    lin("xa.o", A, A);
    lin("cond.img", pf, A);
    params.add("cond.imgpos", np, A, rng, 0.02);
    lin("cond.mv", pf, A);
    params.add("cond.mvpos", np, A, rng, 0.02);
    params.add("cond.viewcode", 6, A, rng, 0.02);
    params.add("cond.null_img", 1, A, rng, 0.02);
    params.add("cond.null_mv", 1, A, rng, 0.02);
    lin("geom.enc", 9 * 7, A);
  }

  static bool is_adapter(const std::string& name) {
    return name.rfind("xa.", 0) == 0 || name.rfind("cond.", 0) == 0 ||
           name.rfind("geom.", 0) == 0;
  }

  static Mat time_features(S t) {
    Mat f(1, 17);
    f(0, 0) = t;
    for (int k = 0; k < 8; ++k) {
      const S w = S(6.283185307179586 * double(1 << k));
      f(0, 1 + 2 * k) = std::sin(t * w);
      f(0, 2 + 2 * k) = std::cos(t * w);
    }
    return f;
  }

  TexCond<S> make_cond(const synth::ViewRender& edit_image, const MVSet& source_mv) const {
    source_mv.validate();
    if (edit_image.view.image_size != cfg.view_size ||
        source_mv.image_size() != cfg.view_size)
      throw std::invalid_argument("make_cond: image size mismatch");
    TexCond<S> c;
    c.image_feats = detail::patch_features<S>(edit_image, cfg.patch);
    for (std::size_t i = 0; i < 6; ++i) {
      c.mv_feats[i] = detail::patch_features<S>(source_mv.views[i], cfg.patch);
      c.mv_colors[i] = detail::color_mat<S>(source_mv.views[i]);
    }
    return c;
  }

  // source-MV token set with the additive learned view-axis code (plain math,
  // mirrors the tape path inside forward_on_tape)
  Mat mv_tokens(const MVSet& source_mv) const {
    source_mv.validate();
    const int np = int(params.at("cond.mvpos").rows());
    Mat out(6 * np, params.at("cond.mvpos").cols());
    for (int v = 0; v < 6; ++v) {
      const Mat f = detail::patch_features<S>(source_mv.views[std::size_t(v)], cfg.patch);
      Mat tok = (f * params.at("cond.mv.w")).rowwise() + params.at("cond.mv.b").row(0);
      tok += params.at("cond.mvpos");
      tok.rowwise() += params.at("cond.viewcode").row(v);
      out.middleRows(v * np, np) = tok;
    }
    return out;
  }

  // Denoiser pass over all six views. Returns per-view V^2 x 3 predictions.
  std::array<Var, 6> forward_on_tape(Tape& t, nn::Binder<S>& bind,
                                     const std::array<Mat, 6>& noisy, S time,
                                     const TexCond<S>& cond,
                                     const GeomCond& geom) const {
    const int V = cfg.view_size, C = cfg.base_ch, A = 2 * C;
    for (const auto& n : noisy)
      if (int(n.rows()) != V * V || n.cols() != 3)
        throw std::invalid_argument("forward: noisy stack shape mismatch");

    auto lin = [&](const std::string& n, Var x) {
      return t.add_rowvec(t.matmul(x, bind(n + ".w")), bind(n + ".b"));
    };
    auto conv = [&](const std::string& n, Var x, int side) {
      return lin(n, t.im2col(x, side, side, 3));
    };

    // condition token sequence shared by every view
    const int np = int(params.at("cond.imgpos").rows());
    Var tok_img = cond.image_dropped
                      ? t.add_rowvec(t.leaf(Mat::Zero(np, A)), bind("cond.null_img"))
                      : t.add(lin("cond.img", t.leaf(cond.image_feats)),
                              bind("cond.imgpos"));
    Var tok_mv;
    if (cond.mv_dropped) {
      tok_mv = t.add_rowvec(t.leaf(Mat::Zero(6 * np, A)), bind("cond.null_mv"));
    } else {
      for (int v = 0; v < 6; ++v) {
        Var tv = t.add(lin("cond.mv", t.leaf(cond.mv_feats[std::size_t(v)])),
                       bind("cond.mvpos"));
        tv = t.add_rowvec(tv, t.rows_of(bind("cond.viewcode"), v, 1));
        tok_mv = v == 0 ? tv : t.vcat(tok_mv, tv);
      }
    }
    Var tokens = t.vcat(tok_img, tok_mv);
    Var tk = lin("xa.k", tokens);
    Var tv_ = lin("xa.v", tokens);

    Var temb = t.gelu(lin("time.fc1", t.leaf(time_features(time))));
    temb = lin("time.fc2", temb);
    const S att_scale = S(1.0 / std::sqrt(double(A)));

    std::array<Var, 6> out;
    for (int v = 0; v < 6; ++v) {
      Var x = conv("u.in", t.leaf(noisy[std::size_t(v)]), V);
      if (cfg.concat_mv) {
        Var extra = t.matmul(t.im2col(t.leaf(cond.mv_colors[std::size_t(v)]), V, V, 3),
                             bind("u.in_mv.w"));
        x = t.add(x, extra);
      }
      x = t.gelu(x);
      Var d1 = t.gelu(conv("u.d1", x, V));
      Var p1 = t.avgpool2(d1, V, V);
      Var d2 = t.gelu(conv("u.d2", p1, V / 2));
      Var p2 = t.avgpool2(d2, V / 2, V / 2);
      Var m = t.gelu(conv("u.mid", p2, V / 4));
      m = t.add_rowvec(m, temb);
      // cross-attention to the condition tokens (adapter)
      {
        Var q = lin("xa.q", m);
        Var att = t.softmax_rows(t.scale(t.matmul(q, t.transpose(tk)), att_scale));
        m = t.add(m, lin("xa.o", t.matmul(att, tv_)));
      }
      // structural geometry residual (adapter)
      {
        Var g = t.leaf(detail::geom_mat<S>(geom.views[std::size_t(v)]));
        g = t.avgpool2(g, V, V);
        g = t.avgpool2(g, V / 2, V / 2);
        m = t.add(m, conv("geom.enc", g, V / 4));
      }
      Var u1 = t.gelu(conv("u.u1", t.hcat(t.upsample2(m, V / 4, V / 4), d2), V / 2));
      Var u2 = t.gelu(conv("u.u2", t.hcat(t.upsample2(u1, V / 2, V / 2), d1), V));
      out[std::size_t(v)] = conv("u.out", u2, V);
    }
    return out;
  }

  std::array<Mat, 6> forward(const std::array<Mat, 6>& noisy, S time,
                             const TexCond<S>& cond, const GeomCond& geom) const {
    Tape t;
    nn::ParamSet<S>& ps = const_cast<nn::ParamSet<S>&>(params);
    nn::Binder<S> bind(t, ps);
    const auto vars = forward_on_tape(t, bind, noisy, time, cond, geom);
    std::array<Mat, 6> out;
    for (std::size_t i = 0; i < 6; ++i) out[i] = t.val(vars[i]);
    return out;
  }
};

}  // namespace shapeup::tex
