#pragma once

#include <Eigen/Core>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "shapeup/core/container.hpp"
#include "shapeup/core/rng.hpp"
#include "shapeup/core/tape.hpp"

namespace shapeup::nn {

// Named parameter store shared by all trainable models. Keys are stable
// strings so checkpoints, gradient checks, and trainable-subset filters all
// address the same tensors.
template <class S>
struct ParamSet {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  std::map<std::string, Mat> values;
  std::map<std::string, Mat> grads;

  Mat& add(const std::string& name, Eigen::Index r, Eigen::Index c, Rng& rng,
           double std_dev) {
    Mat m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = S(rng.normal() * std_dev);
    values[name] = std::move(m);
    return values[name];
  }

  Mat& add_zeros(const std::string& name, Eigen::Index r, Eigen::Index c) {
    values[name] = Mat::Zero(r, c);
    return values[name];
  }

  Mat& operator[](const std::string& name) { return values.at(name); }
  const Mat& at(const std::string& name) const { return values.at(name); }
  bool has(const std::string& name) const { return values.count(name) > 0; }

  void zero_grads() {
    for (auto& [k, v] : values) grads[k] = Mat::Zero(v.rows(), v.cols());
  }

  TensorContainer to_container() const {
    TensorContainer c;
    for (const auto& [k, v] : values) c.put_any(k, v);
    return c;
  }

  void from_container(const TensorContainer& c) {
    for (auto& [k, v] : values) v = c.get(k).template cast<S>();
  }

  std::uint64_t checksum() const { return to_container().checksum(); }
};

// Binds parameters as tape leaves for one forward/backward pass and harvests
// gradients back into the ParamSet afterwards.
template <class S>
class Binder {
public:
  using Var = typename Tape<S>::Var;

  Binder(Tape<S>& tape, ParamSet<S>& ps) : tape_(tape), ps_(ps) {}

  Var operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var v = tape_.leaf(ps_.values.at(name));
    bound_[name] = v;
    return v;
  }

  // call after tape.backward(); `trainable` empty means all params train
  void harvest(const std::function<bool(const std::string&)>& trainable = {}) {
    for (const auto& [name, var] : bound_) {
      if (trainable && !trainable(name)) continue;
      const auto& g = tape_.grad(var);
      if (!g.size()) continue;
      ps_.grads[name] += g;
    }
  }

private:
  Tape<S>& tape_;
  ParamSet<S>& ps_;
  std::map<std::string, Var> bound_;
};

template <class S>
class Adam {
public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  explicit Adam(double lr = 1e-3, double b1 = 0.9, double b2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

  void set_lr(double lr) { lr_ = lr; }

  void step(ParamSet<S>& ps,
            const std::function<bool(const std::string&)>& trainable = {}) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (auto& [name, p] : ps.values) {
      if (trainable && !trainable(name)) continue;
      auto git = ps.grads.find(name);
      if (git == ps.grads.end() || !git->second.size()) continue;
      Mat& g = git->second;
      Mat& m = state(m_, name, p);
      Mat& v = state(v_, name, p);
      m = S(b1_) * m + S(1.0 - b1_) * g;
      v = (S(b2_) * v.array() + S(1.0 - b2_) * g.array().square()).matrix();
      auto mhat = (m.array() / S(bc1));
      auto vhat = (v.array() / S(bc2));
      p.array() -= S(lr_) * mhat / (vhat.sqrt() + S(eps_));
    }
  }

private:
  Mat& state(std::map<std::string, Mat>& store, const std::string& name,
             const Mat& like) {
    auto it = store.find(name);
    if (it == store.end())
      it = store.emplace(name, Mat::Zero(like.rows(), like.cols())).first;
    return it->second;
  }

  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::map<std::string, Mat> m_, v_;
};

// Central finite differences over every entry of the listed parameters.
// Returns the max relative error against `analytic` (same keying as ParamSet
// grads). Meant for double-instantiated micro-models.
template <class S>
double grad_check(ParamSet<S>& ps, const std::vector<std::string>& names,
                  const std::function<double()>& loss_fn,
                  const std::map<std::string, typename ParamSet<S>::Mat>& analytic,
                  double h = 1e-5) {
  double max_rel = 0.0;
  for (const auto& name : names) {
    auto& p = ps.values.at(name);
    const auto& g = analytic.at(name);
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const S orig = p(i, j);
        p(i, j) = orig + S(h);
        const double lp = loss_fn();
        p(i, j) = orig - S(h);
        const double lm = loss_fn();
        p(i, j) = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = double(g(i, j));
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        max_rel = std::max(max_rel, std::abs(fd - an) / denom);
      }
  }
  return max_rel;
}

}  // namespace shapeup::nn
