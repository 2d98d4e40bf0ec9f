#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "shapeup/codec/codec.hpp"
#include "shapeup/core/container.hpp"

namespace shapeup::codec {

struct CodecTrainConfig {
  long steps = 4000;
  double lr = 2e-3;
  int n_queries = 768;       // balanced occupied/empty decoder queries per step
  double subset_prob = 0.5;  // train decode on random token subsets this often
  std::uint64_t seed = 0;
};

struct CodecTrainLog {
  std::vector<double> bce;
  std::vector<double> kl;
  double initial_bce = 0.0;
  double final_bce = 0.0;
};

namespace detail {

// balanced decoder query batch: occupied voxels vs empties (half of them
// drawn from the 2-voxel boundary shell so the surface stays sharp)
template <class S>
void sample_queries(const synth::VoxelShape& shape, int n, Rng& rng,
                    Eigen::Matrix<S, Eigen::Dynamic, 3>& qpos,
                    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& occ_target,
                    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& rgb_target,
                    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& rgb_weight) {
  const int res = shape.resolution;
  std::vector<int> occupied;
  for (int i = 0; i < res * res * res; ++i)
    if (shape.occupancy[std::size_t(i)]) occupied.push_back(i);
  if (occupied.empty()) throw std::invalid_argument("sample_queries: empty shape");

  qpos.resize(n, 3);
  occ_target.resize(n, 1);
  rgb_target.resize(n, 3);
  rgb_weight.resize(n, 3);
  auto put = [&](int row, int x, int y, int z) {
    qpos.row(row) << S((x + 0.5) / res), S((y + 0.5) / res), S((z + 0.5) / res);
    const std::size_t vi = shape.index(x, y, z);
    const bool occ = shape.occupancy[vi] != 0;
    occ_target(row, 0) = occ ? S(1) : S(0);
    if (occ && shape.has_color()) {
      const auto c = shape.rgb(vi);
      rgb_target.row(row) << S(c.x()), S(c.y()), S(c.z());
      rgb_weight.row(row).setConstant(S(1));
    } else {
      rgb_target.row(row).setZero();
      rgb_weight.row(row).setZero();
    }
  };
  for (int i = 0; i < n; ++i) {
    if (i % 2 == 0) {
      const int v = occupied[std::size_t(rng.below(occupied.size()))];
      put(i, v % res, (v / res) % res, v / (res * res));
    } else {
      // empty query: jitter around a random occupied voxel, fall back to uniform
      int x = 0, y = 0, z = 0;
      bool found = false;
      for (int tries = 0; tries < 8 && !found; ++tries) {
        if (tries < 4) {
          const int v = occupied[std::size_t(rng.below(occupied.size()))];
          x = v % res + rng.range(-2, 2);
          y = (v / res) % res + rng.range(-2, 2);
          z = v / (res * res) + rng.range(-2, 2);
        } else {
          x = int(rng.below(std::uint64_t(res)));
          y = int(rng.below(std::uint64_t(res)));
          z = int(rng.below(std::uint64_t(res)));
        }
        found = shape.in_bounds(x, y, z) && !shape.occ(x, y, z);
      }
      if (!found) { x = 0; y = 0; z = 0; }
      put(i, x, y, z);
    }
  }
}

}  // namespace detail

// Full ELBO for one shape on a tape: balanced occupancy BCE + masked color L2
// + beta * KL, with a reparameterized full-token draw and an optional token
// subset for the decoder. Returns (total, bce, kl) vars.
template <class S>
struct ElboVars {
  typename nn::Tape<S>::Var total, bce, kl;
};

template <class S>
ElboVars<S> elbo_on_tape(const Codec<S>& codec, nn::Tape<S>& t, nn::Binder<S>& bind,
                         const typename Codec<S>::Points& pts,
                         const Eigen::Matrix<S, Eigen::Dynamic, 3>& qpos,
                         const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& occ_target,
                         const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& rgb_target,
                         const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& rgb_weight,
                         const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& eps,
                         const std::vector<int>& token_subset) {
  auto [mu, lv] = codec.encode_on_tape(t, bind, pts);
  auto z = t.add(mu, t.cmul(t.exp_of(t.scale(lv, S(0.5))), t.leaf(eps)));
  auto z_sub = t.gather_rows(z, token_subset);
  auto raw = codec.decode_on_tape(t, bind, z_sub, token_subset, qpos);

  auto occ_logit = t.cols_of(raw, 0, 1);
  auto bce = t.bce_logits(occ_logit, occ_target);
  auto rgb = t.sigmoid(t.cols_of(raw, 1, 3));
  typename nn::Tape<S>::Var color_l2;
  {
    auto diff = t.sub(rgb, t.leaf(rgb_target));
    color_l2 = t.mean_all(t.cmul(t.square(diff), t.leaf(rgb_weight)));
  }
  // KL(q || N(0,I)) per dimension: 0.5 (mu^2 + e^lv - 1 - lv)
  auto kl_terms = t.sub(t.add(t.square(mu), t.exp_of(lv)),
                        t.add_scalar(lv, S(1)));
  auto kl = t.scale(t.mean_all(kl_terms), S(0.5));
  auto total = t.add(t.add(bce, t.scale(color_l2, S(0.5))),
                     t.scale(kl, S(codec.cfg.beta)));
  return {total, bce, kl};
}

template <class S>
CodecTrainLog train_codec(Codec<S>& codec, const std::vector<synth::VoxelShape>& corpus,
                          const CodecTrainConfig& tc) {
  if (corpus.size() < 2) throw std::invalid_argument("train_codec: corpus too small");
  Rng rng(sub_seed(tc.seed, "codec-train"));
  nn::Adam<S> opt(tc.lr);
  CodecTrainLog log;

  // surface point sets are reused across steps
  std::vector<typename Codec<S>::Points> pts;
  pts.reserve(corpus.size());
  for (const auto& s : corpus) pts.push_back(Codec<S>::surface_points(s));

  const int M = codec.cfg.tokens, D = codec.cfg.token_dim;
  for (long step = 0; step < tc.steps; ++step) {
    const std::size_t si = std::size_t(rng.below(corpus.size()));

    Eigen::Matrix<S, Eigen::Dynamic, 3> qpos;
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> occ_t, rgb_t, rgb_w;
    detail::sample_queries(corpus[si], tc.n_queries, rng, qpos, occ_t, rgb_t, rgb_w);

    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> eps(M, D);
    for (int i = 0; i < M * D; ++i) eps.data()[i] = S(rng.normal());

    std::vector<int> subset;
    if (rng.uniform() < tc.subset_prob) {
      const int K = M / 4 + int(rng.below(std::uint64_t(M - M / 4 + 1)));
      std::vector<int> idx(static_cast<std::size_t>(M));
      for (int i = 0; i < M; ++i) idx[std::size_t(i)] = i;
      for (int i = M - 1; i > 0; --i)
        std::swap(idx[std::size_t(i)], idx[std::size_t(rng.below(std::uint64_t(i + 1)))]);
      idx.resize(std::size_t(K));
      std::sort(idx.begin(), idx.end());
      subset = std::move(idx);
    } else {
      subset.resize(std::size_t(M));
      for (int i = 0; i < M; ++i) subset[std::size_t(i)] = i;
    }

    codec.params.zero_grads();
    nn::Tape<S> t;
    nn::Binder<S> bind(t, codec.params);
    const auto elbo = elbo_on_tape(codec, t, bind, pts[si], qpos, occ_t, rgb_t,
                                   rgb_w, eps, subset);
    const double bce = double(t.val(elbo.bce)(0, 0));
    const double kl = double(t.val(elbo.kl)(0, 0));
    if (!std::isfinite(double(t.val(elbo.total)(0, 0))))
      throw std::runtime_error("train_codec: loss diverged (non-finite) at step " +
                               std::to_string(step));
    if (kl < -1e-9)
      throw std::runtime_error("train_codec: negative KL at step " + std::to_string(step));
    t.backward(elbo.total);
    bind.harvest();
    opt.step(codec.params);
    log.bce.push_back(bce);
    log.kl.push_back(kl);
  }
  const std::size_t w = std::min<std::size_t>(20, log.bce.size());
  double a = 0, b = 0;
  for (std::size_t i = 0; i < w; ++i) {
    a += log.bce[i];
    b += log.bce[log.bce.size() - 1 - i];
  }
  log.initial_bce = a / double(w);
  log.final_bce = b / double(w);
  return log;
}

// --- posterior cache -----------------------------------------------------

template <class S>
void save_posterior(const Posterior<S>& p, const std::string& path) {
  TensorContainer c;
  c.put_any("mean", p.mean);
  c.put_any("log_var", p.log_var);
  c.save(path);
}

template <class S>
Posterior<S> load_posterior(const std::string& path, const std::string& asset_name) {
  try {
    const TensorContainer c = TensorContainer::load(path);
    Posterior<S> p;
    p.mean = c.get("mean").template cast<S>();
    p.log_var = c.get("log_var").template cast<S>();
    if (!p.mean.allFinite() || !p.log_var.allFinite())
      throw std::runtime_error("non-finite posterior");
    return p;
  } catch (const std::exception& e) {
    throw std::runtime_error("posterior cache: corrupt entry for asset '" +
                             asset_name + "': " + e.what());
  }
}

// Caches per-asset posteriors so training never re-runs the encoder.
template <class S>
class PosteriorCache {
public:
  PosteriorCache(const Codec<S>& codec, std::string dir)
      : codec_(codec), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  // encode-and-store pass over named shapes
  void build(const std::vector<std::pair<std::string, const synth::VoxelShape*>>& shapes) {
    for (const auto& [name, shape] : shapes)
      save_posterior(codec_.encode(*shape), path_for(name));
  }

  const Posterior<S>& get(const std::string& name) {
    auto it = loaded_.find(name);
    if (it == loaded_.end())
      it = loaded_.emplace(name, load_posterior<S>(path_for(name), name)).first;
    return it->second;
  }

  LatentTokenSet<S> draw(const std::string& name, int K, std::uint64_t seed) {
    return codec_.sample_latents(get(name), K, seed);
  }

  std::string path_for(const std::string& name) const {
    return dir_ + "/post-" + name + ".tns";
  }

private:
  const Codec<S>& codec_;
  std::string dir_;
  std::map<std::string, Posterior<S>> loaded_;
};

}  // namespace shapeup::codec
