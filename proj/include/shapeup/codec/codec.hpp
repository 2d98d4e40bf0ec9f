#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "shapeup/core/params.hpp"
#include "shapeup/core/rng.hpp"
#include "shapeup/core/tape.hpp"
#include "shapeup/synth/render.hpp"
#include "shapeup/synth/voxel.hpp"

namespace shapeup::codec {

struct CodecConfig {
  int tokens = 256;      // M
  int token_dim = 16;    // D
  int hidden = 48;
  double beta = 1e-3;    // KL weight
  double tau = 0.02;     // spatial attention bias temperature (squared dist)
  std::uint64_t seed = 0;
};

template <class S>
struct Posterior {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  Mat mean;     // M x D
  Mat log_var;  // M x D, clamped to [-10, 10]
};

// Ordered latent token set with the anchor coordinates each token summarizes.
template <class S>
struct LatentTokenSet {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  Mat tokens;                // K x D
  std::vector<int> indices;  // which of the M anchors each row corresponds to
  bool full = true;          // provenance: full sample vs subsample(K, seed)
  std::uint64_t sample_seed = 0;
};

namespace detail {

// positional encoding for decoder queries: xyz plus sin/cos at 3 frequencies
template <class S>
Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> fourier_queries(
    const Eigen::Matrix<S, Eigen::Dynamic, 3>& pos) {
  const Eigen::Index n = pos.rows();
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> out(n, 3 + 3 * 2 * 3);
  out.leftCols(3) = pos;
  int c = 3;
  for (int f = 0; f < 3; ++f) {
    const S w = S(6.283185307179586 * double(1 << f));
    for (int a = 0; a < 3; ++a) {
      out.col(c++) = (pos.col(a) * w).array().sin().matrix();
      out.col(c++) = (pos.col(a) * w).array().cos().matrix();
    }
  }
  return out;
}

}  // namespace detail

// Token-set shape VAE. Encoder: pointwise feature lift over surface samples,
// cross-attention pooling onto M learned query tokens with a spatial bias
// toward each token's fixed anchor. Decoder: per-query cross-attention over
// whichever token subset is supplied, so any K works.
template <class S>
class Codec {
public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using Mat3 = Eigen::Matrix<S, Eigen::Dynamic, 3>;
  using Tape = nn::Tape<S>;
  using Var = typename Tape::Var;

  static constexpr int kPointFeat = 9;  // xyz, normal, rgb
  static constexpr int kQueryFeat = 3 + 18;

  CodecConfig cfg;
  nn::ParamSet<S> params;
  Mat3 anchors;  // M x 3, fixed Halton points
  mutable long encode_calls = 0;

  explicit Codec(const CodecConfig& config) : cfg(config) {
    Rng rng(sub_seed(cfg.seed, "codec-init"));
    const int H = cfg.hidden, D = cfg.token_dim, M = cfg.tokens;
    anchors.resize(M, 3);
    for (int m = 0; m < M; ++m)
      anchors.row(m) << S(halton(m, 2)), S(halton(m, 3)), S(halton(m, 5));

    auto lin = [&](const std::string& n, int in, int out) {
      params.add(n + ".w", in, out, rng, 1.0 / std::sqrt(double(in)));
      params.add_zeros(n + ".b", 1, out);
    };
    lin("enc.lift1", kPointFeat, H);
    lin("enc.lift2", H, H);
    params.add("enc.q", M, H, rng, 0.5);
    lin("enc.k", H, H);
    lin("enc.v", H, H);
    lin("enc.post", H, H);
    lin("enc.mu", H, D);
    lin("enc.lv", H, D);
    lin("dec.qlift", kQueryFeat, H);
    lin("dec.k", D, H);
    lin("dec.v", D, H);
    lin("dec.mlp1", H, H);
    lin("dec.mlp2", H, H);
    lin("dec.out", H, 4);  // occupancy logit + rgb
  }

  struct Points {
    Mat feats;  // N x 9
    Mat3 pos;   // N x 3
  };

  // All surface voxels (occupied with an empty 6-neighbor); high-curvature
  // voxels (2+ empty neighbors) are emitted twice, doubling their pooling
  // weight.
  static Points surface_points(const synth::VoxelShape& s) {
    std::vector<std::array<float, 9>> rows;
    const bool colored = s.has_color();
    for (int z = 0; z < s.resolution; ++z)
      for (int y = 0; y < s.resolution; ++y)
        for (int x = 0; x < s.resolution; ++x) {
          if (!s.occ(x, y, z)) continue;
          int empty = 0;
          empty += !s.occ(x + 1, y, z);
          empty += !s.occ(x - 1, y, z);
          empty += !s.occ(x, y + 1, z);
          empty += !s.occ(x, y - 1, z);
          empty += !s.occ(x, y, z + 1);
          empty += !s.occ(x, y, z - 1);
          if (empty == 0) continue;
          const Eigen::Vector3f p = s.center_of(x, y, z);
          const Eigen::Vector3f n =
              synth::voxel_normal(s, x, y, z, Eigen::Vector3f(0.f, 0.f, -1.f));
          const Eigen::Vector3f c =
              colored ? s.rgb(s.index(x, y, z)) : Eigen::Vector3f(0.5f, 0.5f, 0.5f);
          const std::array<float, 9> row{p.x(), p.y(), p.z(), n.x(), n.y(),
                                         n.z(), c.x(), c.y(), c.z()};
          rows.push_back(row);
          if (empty >= 2) rows.push_back(row);  // sharp-sample emphasis
        }
    Points out;
    out.feats.resize(Eigen::Index(rows.size()), kPointFeat);
    out.pos.resize(Eigen::Index(rows.size()), 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (int c = 0; c < 9; ++c) out.feats(Eigen::Index(i), c) = S(rows[i][std::size_t(c)]);
      out.pos.row(Eigen::Index(i)) << S(rows[i][0]), S(rows[i][1]), S(rows[i][2]);
    }
    return out;
  }

  // ---- tape forwards (training + gradient checks) ----

  std::pair<Var, Var> encode_on_tape(Tape& t, nn::Binder<S>& bind,
                                     const Points& pts) const {
    auto lin = [&](const std::string& n, Var x) {
      return t.add_rowvec(t.matmul(x, bind(n + ".w")), bind(n + ".b"));
    };
    Var h = t.gelu(lin("enc.lift1", t.leaf(pts.feats)));
    h = t.gelu(lin("enc.lift2", h));
    Var k = lin("enc.k", h);
    Var v = lin("enc.v", h);
    // spatial bias: -(anchor-to-point squared distance)/tau
    Mat bias(cfg.tokens, pts.pos.rows());
    for (int m = 0; m < cfg.tokens; ++m)
      bias.row(m) = -((pts.pos.rowwise() - anchors.row(m)).rowwise().squaredNorm() /
                      S(cfg.tau))
                        .transpose();
    const S scale = S(1.0 / std::sqrt(double(cfg.hidden)));
    Var logits = t.add(t.scale(t.matmul(bind("enc.q"), t.transpose(k)), scale),
                       t.leaf(bias));
    Var pooled = t.matmul(t.softmax_rows(logits), v);
    pooled = t.gelu(lin("enc.post", pooled));
    Var mu = lin("enc.mu", pooled);
    Var lv = t.clamp(lin("enc.lv", pooled), S(-10), S(10));
    return {mu, lv};
  }

  // tokens: K x D on the tape; token_indices: anchor rows for those tokens;
  // qpos: query positions. Returns Nq x 4 (occupancy logit, rgb logits).
  Var decode_on_tape(Tape& t, nn::Binder<S>& bind, Var tokens,
                     const std::vector<int>& token_indices, const Mat3& qpos) const {
    auto lin = [&](const std::string& n, Var x) {
      return t.add_rowvec(t.matmul(x, bind(n + ".w")), bind(n + ".b"));
    };
    Var q = t.gelu(lin("dec.qlift", t.leaf(detail::fourier_queries<S>(qpos))));
    Var k = lin("dec.k", tokens);
    Var v = lin("dec.v", tokens);
    Mat bias(qpos.rows(), Eigen::Index(token_indices.size()));
    for (std::size_t j = 0; j < token_indices.size(); ++j)
      bias.col(Eigen::Index(j)) =
          -((qpos.rowwise() - anchors.row(token_indices[j])).rowwise().squaredNorm() /
            S(cfg.tau));
    const S scale = S(1.0 / std::sqrt(double(cfg.hidden)));
    Var logits = t.add(t.scale(t.matmul(q, t.transpose(k)), scale), t.leaf(bias));
    Var pooled = t.matmul(t.softmax_rows(logits), v);
    Var h = t.gelu(lin("dec.mlp1", pooled));
    h = t.gelu(lin("dec.mlp2", h));
    return lin("dec.out", h);
  }

  // ---- plain-Eigen inference (kept equal to the tape path by unit test) ----

  Posterior<S> encode(const synth::VoxelShape& shape) const {
    if (shape.empty()) throw std::invalid_argument("encode: empty shape");
    ++encode_calls;
    return encode_points(surface_points(shape));
  }

  Posterior<S> encode_points(const Points& pts) const {
    auto lin = [&](const std::string& n, const Mat& x) -> Mat {
      return (x * params.at(n + ".w")).rowwise() + params.at(n + ".b").row(0);
    };
    Mat h = gelu_mat(lin("enc.lift1", pts.feats));
    h = gelu_mat(lin("enc.lift2", h));
    Mat k = lin("enc.k", h);
    Mat v = lin("enc.v", h);
    Mat logits = params.at("enc.q") * k.transpose() * S(1.0 / std::sqrt(double(cfg.hidden)));
    for (int m = 0; m < cfg.tokens; ++m)
      logits.row(m) -= ((pts.pos.rowwise() - anchors.row(m)).rowwise().squaredNorm() /
                        S(cfg.tau))
                           .transpose();
    Mat pooled = softmax_mat(logits) * v;
    pooled = gelu_mat(lin("enc.post", pooled));
    Posterior<S> post;
    post.mean = lin("enc.mu", pooled);
    post.log_var = lin("enc.lv", pooled).array().min(S(10)).max(S(-10)).matrix();
    return post;
  }

  // one reparameterized sample per token, then uniform subsampling without
  // replacement to K indices
  LatentTokenSet<S> sample_latents(const Posterior<S>& post, int K,
                                   std::uint64_t seed) const {
    const int M = int(post.mean.rows());
    if (K < 1 || K > M) throw std::invalid_argument("sample_latents: K out of range");
    Rng rng(sub_seed(seed, "latent-sample"));
    Mat z(M, post.mean.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      for (Eigen::Index j = 0; j < z.cols(); ++j)
        z(i, j) = post.mean(i, j) +
                  std::exp(post.log_var(i, j) * S(0.5)) * S(rng.normal());
    std::vector<int> idx(static_cast<std::size_t>(M));
    for (int i = 0; i < M; ++i) idx[std::size_t(i)] = i;
    for (int i = M - 1; i > 0; --i)
      std::swap(idx[std::size_t(i)], idx[std::size_t(rng.below(std::uint64_t(i + 1)))]);
    idx.resize(std::size_t(K));
    std::sort(idx.begin(), idx.end());
    LatentTokenSet<S> out;
    out.tokens.resize(K, post.mean.cols());
    for (int i = 0; i < K; ++i) out.tokens.row(i) = z.row(idx[std::size_t(i)]);
    out.indices = std::move(idx);
    out.full = (K == M);
    out.sample_seed = seed;
    return out;
  }

  // Nq x 4 raw decoder output for arbitrary query positions
  Mat decode_raw(const Mat& tokens, const std::vector<int>& token_indices,
                 const Mat3& qpos) const {
    auto lin = [&](const std::string& n, const Mat& x) -> Mat {
      return (x * params.at(n + ".w")).rowwise() + params.at(n + ".b").row(0);
    };
    Mat q = gelu_mat(lin("dec.qlift", detail::fourier_queries<S>(qpos)));
    Mat k = lin("dec.k", tokens);
    Mat v = lin("dec.v", tokens);
    Mat logits = q * k.transpose() * S(1.0 / std::sqrt(double(cfg.hidden)));
    for (std::size_t j = 0; j < token_indices.size(); ++j)
      logits.col(Eigen::Index(j)) -=
          (qpos.rowwise() - anchors.row(token_indices[j])).rowwise().squaredNorm() /
          S(cfg.tau);
    Mat pooled = softmax_mat(logits) * v;
    Mat h = gelu_mat(lin("dec.mlp1", pooled));
    h = gelu_mat(lin("dec.mlp2", h));
    return lin("dec.out", h);
  }

  synth::VoxelShape decode(const LatentTokenSet<S>& latents, int resolution) const {
    if (latents.tokens.rows() == 0)
      throw std::invalid_argument("decode: empty latent set");
    synth::VoxelShape out(resolution);
    out.ensure_color();
    const int chunk = 4096;
    const int total = resolution * resolution * resolution;
    Mat3 qpos(chunk, 3);
    for (int start = 0; start < total; start += chunk) {
      const int n = std::min(chunk, total - start);
      for (int i = 0; i < n; ++i) {
        const int lin_idx = start + i;
        const int x = lin_idx % resolution;
        const int y = (lin_idx / resolution) % resolution;
        const int z = lin_idx / (resolution * resolution);
        qpos.row(i) << S((x + 0.5) / resolution), S((y + 0.5) / resolution),
            S((z + 0.5) / resolution);
      }
      const Mat raw = decode_raw(latents.tokens, latents.indices, qpos.topRows(n));
      for (int i = 0; i < n; ++i) {
        const std::size_t vi = std::size_t(start + i);
        out.occupancy[vi] = raw(i, 0) > S(0) ? 1 : 0;
        for (int c = 0; c < 3; ++c)
          out.color[3 * vi + std::size_t(c)] =
              float(S(1) / (S(1) + std::exp(-raw(i, 1 + c))));
      }
    }
    return out;
  }

  static Mat gelu_mat(const Mat& x) {
    return x.unaryExpr([](S v) {
      return S(0.5 * double(v) * (1.0 + std::erf(double(v) * 0.70710678118654752440)));
    });
  }
  static Mat softmax_mat(const Mat& x) {
    using Arr = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic>;
    using Col = Eigen::Array<S, Eigen::Dynamic, 1>;
    Arr a = x.array();
    Col mx = a.rowwise().maxCoeff();
    Arr ex = (a.colwise() - mx).exp();
    Col denom = ex.rowwise().sum();
    return (ex.colwise() / denom).matrix();
  }
};

}  // namespace shapeup::codec
