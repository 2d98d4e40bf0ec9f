#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "shapeup/codec/codec.hpp"
#include "shapeup/data/dataset.hpp"
#include "shapeup/edit/flow.hpp"

namespace shapeup::edit {

struct EditTrainConfig {
  long steps = 2000;
  double lr = 1e-3;
  int latent_tokens = 64;  // K drawn per shape
  bool train_lora = false;  // false: full backbone, true: adapters only
  double p_drop_image = 0.2;
  double p_drop_shape = 0.1;
  std::uint64_t seed = 0;
};

struct EditTrainLog {
  std::vector<double> losses;
  long image_drops = 0;
  long shape_drops = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// independent per-stream condition dropout; split out so the realized rates
// can be measured without running the optimizer
inline std::pair<bool, bool> draw_dropout(Rng& rng, double p_img, double p_shp) {
  const bool di = rng.uniform() < p_img;
  const bool ds = rng.uniform() < p_shp;
  return {di, ds};
}

template <class S>
EditTrainLog train_edit(EditFlow<S>& flow, const codec::Codec<S>& shape_codec,
                        const std::vector<data::EditTriplet>& triplets,
                        const EditTrainConfig& tc) {
  using Mat = typename EditFlow<S>::Mat;
  if (triplets.empty()) throw std::invalid_argument("train_edit: no triplets");

  // class-weighted stream (DFM triplets 3x) via the shared sampler
  data::DatasetManifest kinds;
  for (const auto& t : triplets) {
    data::ManifestEntry e;
    e.kind = t.kind;
    kinds.entries.push_back(e);
  }
  data::WeightedSampler sampler(kinds, sub_seed(tc.seed, "edit-sampler"));

  // posteriors and condition features never change: compute once
  std::vector<codec::Posterior<S>> post_src, post_tgt;
  std::vector<Mat> img_feats;
  for (const auto& t : triplets) {
    post_src.push_back(shape_codec.encode(t.source));
    post_tgt.push_back(shape_codec.encode(t.target));
    img_feats.push_back(flow.image_features(t.condition));
  }

  Rng rng(sub_seed(tc.seed, "edit-train"));
  nn::Adam<S> opt(tc.lr);
  auto trainable = [&](const std::string& name) {
    return tc.train_lora == EditFlow<S>::is_lora(name);
  };
  const int K = tc.latent_tokens, D = flow.cfg.token_dim;
  EditTrainLog log;

  for (long step = 0; step < tc.steps; ++step) {
    const std::size_t i = sampler.next();
    const std::uint64_t ss = sub_seed(tc.seed, "step-" + std::to_string(step));
    const auto z1 = shape_codec.sample_latents(post_tgt[i], K, sub_seed(ss, "z1"));
    const auto cs = shape_codec.sample_latents(post_src[i], K, sub_seed(ss, "cs"));

    const S time = S(rng.uniform());
    const auto [di, ds] = draw_dropout(rng, tc.p_drop_image, tc.p_drop_shape);
    log.image_drops += di;
    log.shape_drops += ds;

    ConditionBundle<S> cond;
    cond.image_feats = img_feats[i];
    cond.shape_tokens = cs.tokens;
    cond.shape_indices = cs.indices;
    cond.image_dropped = di;
    cond.shape_dropped = ds;

    Mat z0(K, D);
    for (int k = 0; k < K * D; ++k) z0.data()[k] = S(rng.normal());
    Mat zt, target;
    if (flow.cfg.objective == "eps") {
      const S a = S(1.5707963267948966) * (S(1) - time);
      zt = std::cos(a) * z1.tokens + std::sin(a) * z0;
      target = z0;
    } else {
      zt = (S(1) - time) * z0 + time * z1.tokens;
      target = z1.tokens - z0;
    }

    flow.params.zero_grads();
    nn::Tape<S> t;
    nn::Binder<S> bind(t, flow.params);
    auto v = flow.forward_on_tape(t, bind, t.leaf(zt), z1.indices, time, cond,
                                  tc.train_lora);
    auto loss = t.mse(v, t.leaf(target));
    const double lval = double(t.val(loss)(0, 0));
    if (!std::isfinite(lval))
      throw std::runtime_error("train_edit: loss diverged at step " +
                               std::to_string(step));
    t.backward(loss);
    bind.harvest(trainable);
    opt.step(flow.params, trainable);
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

// ---- guided sampling -----------------------------------------------------

struct GuidanceConfig {
  double s_image = 2.5;
  double s_shape = 3.5;
  int steps = 16;
  int latent_tokens = 0;  // 0: default M/4 cap of 64
};

// v(0,0) + s_i (v(ci,0) - v(0,0)) + s_s (v(ci,cs) - v(0,0)), evaluated in the
// gathered form (1 - s_i - s_s) v(0,0) + s_i v(ci,0) + s_s v(ci,cs) so the
// limit cases (scales 0/1) reduce exactly
template <class M>
M cfg_velocity(const M& v_uncond, const M& v_image, const M& v_both, double s_i,
               double s_s) {
  using Sc = typename M::Scalar;
  return Sc(1.0 - s_i - s_s) * v_uncond + Sc(s_i) * v_image + Sc(s_s) * v_both;
}

template <class S>
codec::LatentTokenSet<S> sample_edit_latents(const EditFlow<S>& flow,
                                             const codec::Codec<S>& shape_codec,
                                             const synth::VoxelShape& source,
                                             const synth::ViewRender& condition,
                                             const GuidanceConfig& g,
                                             std::uint64_t seed, bool use_lora) {
  using Mat = typename EditFlow<S>::Mat;
  const int K = g.latent_tokens > 0 ? std::min(g.latent_tokens, shape_codec.cfg.tokens)
                                    : std::min(64, shape_codec.cfg.tokens);
  const int D = flow.cfg.token_dim;

  const auto post = shape_codec.encode(source);
  const auto cs = shape_codec.sample_latents(post, std::min(K, int(post.mean.rows())),
                                             sub_seed(seed, "cond"));
  Rng rng(sub_seed(seed, "edit-sample"));
  const int M = int(shape_codec.cfg.tokens);
  std::vector<int> idx(static_cast<std::size_t>(M));
  for (int i = 0; i < M; ++i) idx[std::size_t(i)] = i;
  for (int i = M - 1; i > 0; --i)
    std::swap(idx[std::size_t(i)], idx[std::size_t(rng.below(std::uint64_t(i + 1)))]);
  idx.resize(std::size_t(std::min(K, M)));
  std::sort(idx.begin(), idx.end());

  Mat z(idx.size(), D);
  for (Eigen::Index k = 0; k < z.size(); ++k) z.data()[k] = S(rng.normal());

  const Mat img = flow.image_features(condition);
  ConditionBundle<S> uu, iu, is;
  for (ConditionBundle<S>* c : {&uu, &iu, &is}) {
    c->image_feats = img;
    c->shape_tokens = cs.tokens;
    c->shape_indices = cs.indices;
  }
  uu.image_dropped = true;
  uu.shape_dropped = true;
  iu.shape_dropped = true;

  auto guided = [&](const Mat& zt, S time) {
    const Mat vu = flow.forward(zt, idx, time, uu, use_lora);
    const Mat vi = flow.forward(zt, idx, time, iu, use_lora);
    const Mat vb = flow.forward(zt, idx, time, is, use_lora);
    return cfg_velocity(vu, vi, vb, g.s_image, g.s_shape);
  };

  if (flow.cfg.objective == "eps") {
    for (int s = 0; s < g.steps; ++s) {
      const S time = S(s) / S(g.steps);
      const S a = S(1.5707963267948966) * (S(1) - time);
      const Mat eps = guided(z, time);
      const S ca = std::max(std::cos(a), S(1e-3));
      const Mat z1_hat = (z - std::sin(a) * eps) / ca;
      const S a2 = S(1.5707963267948966) * (S(1) - S(s + 1) / S(g.steps));
      z = std::cos(a2) * z1_hat + std::sin(a2) * eps;
    }
  } else {
    const S dt = S(1) / S(g.steps);
    for (int s = 0; s < g.steps; ++s) {
      const S time = S(s) / S(g.steps);
      z += dt * guided(z, time);
    }
  }
  codec::LatentTokenSet<S> out;
  out.tokens = std::move(z);
  out.indices = std::move(idx);
  out.full = (int(out.indices.size()) == M);
  out.sample_seed = seed;
  return out;
}

template <class S>
synth::VoxelShape sample_edit(const EditFlow<S>& flow,
                              const codec::Codec<S>& shape_codec,
                              const synth::VoxelShape& source,
                              const synth::ViewRender& condition,
                              const GuidanceConfig& g, std::uint64_t seed,
                              bool use_lora = true) {
  const auto lat =
      sample_edit_latents(flow, shape_codec, source, condition, g, seed, use_lora);
  auto out = shape_codec.decode(lat, source.resolution);
  if (out.empty())
    throw std::runtime_error("sample_edit: decoded shape is empty (sampling failure)");
  return out;
}

}  // namespace shapeup::edit
