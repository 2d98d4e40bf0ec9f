#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "shapeup/codec/codec.hpp"
#include "shapeup/core/params.hpp"
#include "shapeup/core/rng.hpp"
#include "shapeup/core/tape.hpp"
#include "shapeup/synth/render.hpp"

namespace shapeup::edit {

struct EditConfig {
  int width = 128;
  int heads = 4;
  int n_double = 4;
  int n_single = 4;
  int token_dim = 16;
  int lora_rank = 8;
  double lora_alpha = 16.0;
  int image_size = 32;
  int patch = 4;
  // "flow" (rectified flow, velocity target) or "eps" (noise target, cosine
  // schedule, DDIM-style sampler)
  std::string objective = "flow";
  std::uint64_t seed = 0;
};

// Per-step conditioning. Dropped streams are replaced inside the model by a
// learned null token row replicated to the stream's length, never by zeros.
template <class S>
struct ConditionBundle {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  Mat image_feats;               // P x (patch*patch*8), raw patch features
  Mat shape_tokens;              // K_s x D
  std::vector<int> shape_indices;
  bool image_dropped = false;
  bool shape_dropped = false;
};

// Flow-matching DiT over latent token sets: double-stream blocks keep latent
// and condition branches separate under joint attention, single-stream blocks
// run the merged sequence. LoRA adapters sit on every attention projection and
// are exact identities at init (B = 0).
template <class S>
class EditFlow {
public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using Mat3 = Eigen::Matrix<S, Eigen::Dynamic, 3>;
  using Tape = nn::Tape<S>;
  using Var = typename Tape::Var;

  static constexpr int kImageChannels = 8;  // sil, depth, normal xyz, rgb

  EditConfig cfg;
  nn::ParamSet<S> params;
  Mat3 anchors;  // M x 3, shared with the codec
  std::vector<std::string> lora_targets;

  EditFlow(const EditConfig& config, const Mat3& codec_anchors)
      : cfg(config), anchors(codec_anchors) {
    Rng rng(sub_seed(cfg.seed, "edit-init"));
    const int W = cfg.width, D = cfg.token_dim;
    const int patch_feat = cfg.patch * cfg.patch * kImageChannels;
    const int n_patches = (cfg.image_size / cfg.patch) * (cfg.image_size / cfg.patch);

    auto lin = [&](const std::string& n, int in, int out) {
      params.add(n + ".w", in, out, rng, 1.0 / std::sqrt(double(in)));
      params.add_zeros(n + ".b", 1, out);
    };
    lin("in.x", D, W);
    lin("in.xpos", 21, W);  // fourier features of token anchor coordinates
    lin("in.img", patch_feat, W);
    params.add("in.imgpos", n_patches, W, rng, 0.02);
    lin("in.shp", D, W);  // no positional encoding: c_s is an unordered set
    params.add("null.img", 1, W, rng, 0.02);
    params.add("null.shp", 1, W, rng, 0.02);
    lin("time.fc1", 17, W);
    lin("time.fc2", W, W);

    auto attn = [&](const std::string& p) {
      for (const char* m : {"q", "k", "v", "o"}) {
        lin(p + "." + m, W, W);
        lora_targets.push_back(p + "." + m);
      }
    };
    auto mlp = [&](const std::string& p) {
      lin(p + ".mlp1", W, 4 * W);
      lin(p + ".mlp2", 4 * W, W);
    };
    for (int i = 0; i < cfg.n_double; ++i) {
      const std::string d = "d" + std::to_string(i);
      attn(d + ".x");
      attn(d + ".c");
      mlp(d + ".x");
      mlp(d + ".c");
    }
    for (int i = 0; i < cfg.n_single; ++i) {
      const std::string s = "s" + std::to_string(i);
      attn(s);
      mlp(s);
    }
    lin("out", W, D);
    for (const auto& t : lora_targets) {
      params.add("lora." + t + ".A", W, cfg.lora_rank, rng,
                 1.0 / std::sqrt(double(W)));
      params.add_zeros("lora." + t + ".B", cfg.lora_rank, W);
    }
  }

  static bool is_lora(const std::string& name) {
    return name.rfind("lora.", 0) == 0;
  }

  // flattened 4x4 patches of the 8 render channels, row-major over patches
  Mat image_features(const synth::ViewRender& r) const {
    const int sz = cfg.image_size, p = cfg.patch;
    if (int(r.depth.rows()) != sz || int(r.depth.cols()) != sz)
      throw std::invalid_argument("image_features: render size mismatch");
    const int np = sz / p;
    Mat out(np * np, p * p * kImageChannels);
    auto chan = [&](int c, int i, int j) -> float {
      switch (c) {
        case 0: return r.silhouette(i, j);
        case 1: return r.depth(i, j);
        case 2: return r.nx(i, j);
        case 3: return r.ny(i, j);
        case 4: return r.nz(i, j);
        default:
          return r.color ? (*r.color)[std::size_t(c - 5)](i, j) : 0.5f;
      }
    };
    for (int py = 0; py < np; ++py)
      for (int px = 0; px < np; ++px) {
        int col = 0;
        for (int c = 0; c < kImageChannels; ++c)
          for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx)
              out(py * np + px, col++) = S(chan(c, py * p + dy, px * p + dx));
      }
    return out;
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

  // Velocity (or eps) prediction for K latent tokens. `use_lora` switches the
  // adapters in; with freshly initialized adapters the output is identical.
  Var forward_on_tape(Tape& t, nn::Binder<S>& bind, Var x_tokens,
                      const std::vector<int>& x_indices, S time,
                      const ConditionBundle<S>& cond, bool use_lora) const {
    const int W = cfg.width;
    const int K = int(t.val(x_tokens).rows());
    if (int(t.val(x_tokens).cols()) != cfg.token_dim ||
        K != int(x_indices.size()))
      throw std::invalid_argument("forward: latent token shape mismatch");
    if (!cond.shape_dropped &&
        cond.shape_tokens.rows() != Eigen::Index(cond.shape_indices.size()))
      throw std::invalid_argument("forward: shape condition mismatch");

    auto lin = [&](const std::string& n, Var x) {
      Var y = t.add_rowvec(t.matmul(x, bind(n + ".w")), bind(n + ".b"));
      if (use_lora && params.has("lora." + n + ".A")) {
        Var low = t.matmul(t.matmul(x, bind("lora." + n + ".A")),
                           bind("lora." + n + ".B"));
        y = t.add(y, t.scale(low, S(cfg.lora_alpha / double(cfg.lora_rank))));
      }
      return y;
    };
    auto nulls = [&](const std::string& name, int n) {
      return t.add_rowvec(t.leaf(Mat::Zero(n, W)), bind(name));
    };
    // joint attention: queries from one stream, keys/values from both
    auto mha = [&](Var q, Var k, Var v) {
      const int dh = W / cfg.heads;
      const S sc = S(1.0 / std::sqrt(double(dh)));
      Var out;
      for (int h = 0; h < cfg.heads; ++h) {
        Var qh = t.cols_of(q, h * dh, dh);
        Var kh = t.cols_of(k, h * dh, dh);
        Var vh = t.cols_of(v, h * dh, dh);
        Var a = t.softmax_rows(t.scale(t.matmul(qh, t.transpose(kh)), sc));
        Var oh = t.matmul(a, vh);
        out = h == 0 ? oh : t.hcat(out, oh);
      }
      return out;
    };

    Mat3 xa(K, 3);
    for (int i = 0; i < K; ++i) xa.row(i) = anchors.row(x_indices[std::size_t(i)]);
    Var temb = t.gelu(lin("time.fc1", t.leaf(time_features(time))));
    temb = lin("time.fc2", temb);
    auto add_time = [&](Var h) { return t.add_rowvec(h, temb); };

    Var x = t.add(lin("in.x", x_tokens),
                  lin("in.xpos", t.leaf(codec::detail::fourier_queries<S>(xa))));
    x = add_time(x);

    const int n_patches = int(params.at("in.imgpos").rows());
    Var ci = cond.image_dropped
                 ? nulls("null.img", n_patches)
                 : t.add(lin("in.img", t.leaf(cond.image_feats)), bind("in.imgpos"));
    const int n_shp = cond.shape_dropped
                          ? std::max(1, int(cond.shape_indices.size()))
                          : int(cond.shape_tokens.rows());
    Var cs = cond.shape_dropped ? nulls("null.shp", n_shp)
                                : lin("in.shp", t.leaf(cond.shape_tokens));
    Var c = add_time(t.vcat(ci, cs));

    for (int i = 0; i < cfg.n_double; ++i) {
      const std::string dx = "d" + std::to_string(i) + ".x";
      const std::string dc = "d" + std::to_string(i) + ".c";
      Var xn = t.layernorm_rows(x);
      Var cn = t.layernorm_rows(c);
      Var k = t.vcat(lin(dx + ".k", xn), lin(dc + ".k", cn));
      Var v = t.vcat(lin(dx + ".v", xn), lin(dc + ".v", cn));
      x = t.add(x, lin(dx + ".o", mha(lin(dx + ".q", xn), k, v)));
      c = t.add(c, lin(dc + ".o", mha(lin(dc + ".q", cn), k, v)));
      x = t.add(x, lin(dx + ".mlp2", t.gelu(lin(dx + ".mlp1", t.layernorm_rows(x)))));
      c = t.add(c, lin(dc + ".mlp2", t.gelu(lin(dc + ".mlp1", t.layernorm_rows(c)))));
    }
    Var u = t.vcat(x, c);
    for (int i = 0; i < cfg.n_single; ++i) {
      const std::string s = "s" + std::to_string(i);
      Var un = t.layernorm_rows(u);
      u = t.add(u, lin(s + ".o", mha(lin(s + ".q", un), lin(s + ".k", un),
                                     lin(s + ".v", un))));
      u = t.add(u, lin(s + ".mlp2", t.gelu(lin(s + ".mlp1", t.layernorm_rows(u)))));
    }
    // condition rows are dropped here; only latent tokens produce output
    return lin("out", t.layernorm_rows(t.rows_of(u, 0, K)));
  }

  // inference convenience: one forward pass, no gradients kept
  Mat forward(const Mat& x_tokens, const std::vector<int>& x_indices, S time,
              const ConditionBundle<S>& cond, bool use_lora) const {
    Tape t;
    nn::ParamSet<S>& ps = const_cast<nn::ParamSet<S>&>(params);
    nn::Binder<S> bind(t, ps);
    return t.val(forward_on_tape(t, bind, t.leaf(x_tokens), x_indices, time,
                                 cond, use_lora));
  }
};

// ---- adapter checkpoints -------------------------------------------------

template <class S>
void save_adapters(const EditFlow<S>& flow, const std::string& path) {
  TensorContainer c;
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> meta(1, 3);
  meta << S(flow.cfg.lora_rank), S(flow.cfg.lora_alpha),
      S(flow.lora_targets.size());
  c.put_any("lora.meta", meta);
  for (const auto& t : flow.lora_targets) {
    c.put_any("lora." + t + ".A", flow.params.at("lora." + t + ".A"));
    c.put_any("lora." + t + ".B", flow.params.at("lora." + t + ".B"));
  }
  c.save(path);
}

template <class S>
void load_adapters(EditFlow<S>& flow, const std::string& path) {
  const TensorContainer c = TensorContainer::load(path);
  const auto& meta = c.get("lora.meta");
  if (int(meta(0, 0)) != flow.cfg.lora_rank ||
      std::size_t(meta(0, 2)) != flow.lora_targets.size())
    throw std::runtime_error("load_adapters: checkpoint does not match config");
  for (const auto& t : flow.lora_targets) {
    flow.params["lora." + t + ".A"] = c.get("lora." + t + ".A").template cast<S>();
    flow.params["lora." + t + ".B"] = c.get("lora." + t + ".B").template cast<S>();
  }
}

}  // namespace shapeup::edit
