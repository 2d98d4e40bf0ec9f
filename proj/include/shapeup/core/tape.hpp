#pragma once

#include <Eigen/Core>
#include <cassert>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace shapeup::nn {

// Reverse-mode autodiff over dense Eigen matrices, templated on scalar so
// training runs in float while gradient checks instantiate double.
// A Tape is rebuilt per step; Var is an index into it.
template <class S>
class Tape {
public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using Arr = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic>;

  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  const Mat& val(Var v) const { return nodes_[v.id].val; }
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }
  Eigen::Index rows(Var v) const { return nodes_[v.id].val.rows(); }
  Eigen::Index cols(Var v) const { return nodes_[v.id].val.cols(); }

  Var leaf(Mat v) { return push(std::move(v), {}); }

  Var add(Var a, Var b) {
    Var o = push(val(a) + val(b), [this, a, b](const Mat& g) {
      acc(a, g);
      acc(b, g);
    });
    return o;
  }

  Var sub(Var a, Var b) {
    return push(val(a) - val(b), [this, a, b](const Mat& g) {
      acc(a, g);
      acc(b, -g);
    });
  }

  Var scale(Var a, S c) {
    return push(val(a) * c, [this, a, c](const Mat& g) { acc(a, (g * c).eval()); });
  }

  Var add_scalar(Var a, S c) {
    return push((val(a).array() + c).matrix(), [this, a](const Mat& g) { acc(a, g); });
  }

  // broadcast-add a 1 x C row vector to every row
  Var add_rowvec(Var a, Var b) {
    assert(cols(a) == cols(b) && rows(b) == 1);
    return push(val(a).rowwise() + val(b).row(0),
                [this, a, b](const Mat& g) {
                  acc(a, g);
                  acc(b, g.colwise().sum().eval());
                });
  }

  // broadcast-multiply each row by a 1 x C row vector
  Var cmul_rowvec(Var a, Var b) {
    assert(cols(a) == cols(b) && rows(b) == 1);
    return push((val(a).array().rowwise() * val(b).row(0).array()).matrix(),
                [this, a, b](const Mat& g) {
                  acc(a, (g.array().rowwise() * val(b).row(0).array()).matrix().eval());
                  acc(b, (g.array() * val(a).array()).matrix().colwise().sum().eval());
                });
  }

  Var matmul(Var a, Var b) {
    assert(cols(a) == rows(b));
    return push(val(a) * val(b), [this, a, b](const Mat& g) {
      acc(a, (g * val(b).transpose()).eval());
      acc(b, (val(a).transpose() * g).eval());
    });
  }

  Var transpose(Var a) {
    return push(val(a).transpose(),
                [this, a](const Mat& g) { acc(a, g.transpose().eval()); });
  }

  Var cmul(Var a, Var b) {
    assert(rows(a) == rows(b) && cols(a) == cols(b));
    return push((val(a).array() * val(b).array()).matrix(),
                [this, a, b](const Mat& g) {
                  acc(a, (g.array() * val(b).array()).matrix().eval());
                  acc(b, (g.array() * val(a).array()).matrix().eval());
                });
  }

  Var rows_of(Var a, int r0, int n) {
    return push(val(a).middleRows(r0, n), [this, a, r0, n](const Mat& g) {
      Mat full = Mat::Zero(rows(a), cols(a));
      full.middleRows(r0, n) = g;
      acc(a, full);
    });
  }

  Var cols_of(Var a, int c0, int n) {
    return push(val(a).middleCols(c0, n), [this, a, c0, n](const Mat& g) {
      Mat full = Mat::Zero(rows(a), cols(a));
      full.middleCols(c0, n) = g;
      acc(a, full);
    });
  }

  Var vcat(Var a, Var b) {
    assert(cols(a) == cols(b));
    Mat v(rows(a) + rows(b), cols(a));
    v << val(a), val(b);
    const int ra = int(rows(a));
    return push(std::move(v), [this, a, b, ra](const Mat& g) {
      acc(a, g.topRows(ra).eval());
      acc(b, g.bottomRows(g.rows() - ra).eval());
    });
  }

  Var hcat(Var a, Var b) {
    assert(rows(a) == rows(b));
    Mat v(rows(a), cols(a) + cols(b));
    v << val(a), val(b);
    const int ca = int(cols(a));
    return push(std::move(v), [this, a, b, ca](const Mat& g) {
      acc(a, g.leftCols(ca).eval());
      acc(b, g.rightCols(g.cols() - ca).eval());
    });
  }

  Var gather_rows(Var a, std::vector<int> idx) {
    Mat v(idx.size(), cols(a));
    for (std::size_t i = 0; i < idx.size(); ++i) v.row(Eigen::Index(i)) = val(a).row(idx[i]);
    return push(std::move(v), [this, a, idx = std::move(idx)](const Mat& g) {
      Mat full = Mat::Zero(rows(a), cols(a));
      for (std::size_t i = 0; i < idx.size(); ++i)
        full.row(idx[i]) += g.row(Eigen::Index(i));
      acc(a, full);
    });
  }

  Var softmax_rows(Var a) {
    using Col = Eigen::Array<S, Eigen::Dynamic, 1>;
    Arr x = val(a).array();
    Col mx = x.rowwise().maxCoeff();
    Arr ex = (x.colwise() - mx).exp();
    Col denom = ex.rowwise().sum();
    Mat y = (ex.colwise() / denom).matrix();
    Var o = push(y, {});
    nodes_[o.id].back = [this, a, o](const Mat& g) {
      const Arr y2 = val(o).array();
      Arr gy = g.array() * y2;
      Col rs = gy.rowwise().sum();
      Arr out = gy - (y2.colwise() * rs);
      acc(a, out.matrix().eval());
    };
    return o;
  }

  Var sigmoid(Var a) {
    Mat y = (S(1) / (S(1) + (-val(a).array()).exp())).matrix();
    Var o = push(y, {});
    nodes_[o.id].back = [this, a, o](const Mat& g) {
      const Arr y2 = val(o).array();
      acc(a, (g.array() * y2 * (S(1) - y2)).matrix().eval());
    };
    return o;
  }

  Var tanh_act(Var a) {
    Mat y = val(a).array().tanh().matrix();
    Var o = push(y, {});
    nodes_[o.id].back = [this, a, o](const Mat& g) {
      const Arr y2 = val(o).array();
      acc(a, (g.array() * (S(1) - y2 * y2)).matrix().eval());
    };
    return o;
  }

  Var gelu(Var a) {
    const S inv_sqrt2 = S(0.70710678118654752440L);
    const S inv_sqrt2pi = S(0.39894228040143267794L);
    auto erf_arr = [](const Arr& z) {
      return z.unaryExpr([](S v) { return S(std::erf(double(v))); });
    };
    Arr x = val(a).array();
    Arr cdf = (S(1) + erf_arr((x * inv_sqrt2).eval())) * S(0.5);
    Var o = push((x * cdf).matrix(), {});
    nodes_[o.id].back = [this, a, erf_arr, inv_sqrt2, inv_sqrt2pi](const Mat& g) {
      Arr x2 = val(a).array();
      Arr cdf2 = (S(1) + erf_arr((x2 * inv_sqrt2).eval())) * S(0.5);
      Arr pdf = (-(x2 * x2) * S(0.5)).exp() * inv_sqrt2pi;
      acc(a, (g.array() * (cdf2 + x2 * pdf)).matrix().eval());
    };
    return o;
  }

  Var exp_of(Var a) {
    Var o = push(val(a).array().exp().matrix(), {});
    nodes_[o.id].back = [this, a, o](const Mat& g) {
      acc(a, (g.array() * val(o).array()).matrix().eval());
    };
    return o;
  }

  Var square(Var a) {
    return push(val(a).array().square().matrix(), [this, a](const Mat& g) {
      acc(a, (g.array() * val(a).array() * S(2)).matrix().eval());
    });
  }

  // hard clamp; gradient masked to the interior
  Var clamp(Var a, S lo, S hi) {
    return push(val(a).array().min(hi).max(lo).matrix(),
                [this, a, lo, hi](const Mat& g) {
                  Arr x = val(a).array();
                  Arr mask = ((x >= lo) && (x <= hi)).template cast<S>();
                  acc(a, (g.array() * mask).matrix().eval());
                });
  }

  // per-row layer norm, no affine (compose with cmul_rowvec/add_rowvec)
  Var layernorm_rows(Var a, S eps = S(1e-5)) {
    using Col = Eigen::Array<S, Eigen::Dynamic, 1>;
    Arr x = val(a).array();
    Col mu = x.rowwise().mean();
    Arr xc = x.colwise() - mu;
    Col var = xc.square().rowwise().mean();
    Col inv = (var + eps).sqrt().inverse();
    Mat y = (xc.colwise() * inv).matrix();
    Var o = push(y, {});
    nodes_[o.id].back = [this, a, o, eps](const Mat& g) {
      Arr x2 = val(a).array();
      Col mu2 = x2.rowwise().mean();
      Arr xc2 = x2.colwise() - mu2;
      Col var2 = xc2.square().rowwise().mean();
      Col inv2 = (var2 + eps).sqrt().inverse();
      Arr y2 = val(o).array();
      Arr gg = g.array();
      Col gmean = gg.rowwise().mean();
      Col gymean = (gg * y2).rowwise().mean();
      Arr out = ((gg.colwise() - gmean) - y2.colwise() * gymean).colwise() * inv2;
      acc(a, out.matrix().eval());
    };
    return o;
  }

  Var sum_all(Var a) {
    Mat v(1, 1);
    v(0, 0) = val(a).sum();
    return push(std::move(v), [this, a](const Mat& g) {
      acc(a, Mat::Constant(rows(a), cols(a), g(0, 0)));
    });
  }

  Var mean_all(Var a) {
    const S n = S(val(a).size());
    Mat v(1, 1);
    v(0, 0) = val(a).sum() / n;
    return push(std::move(v), [this, a, n](const Mat& g) {
      acc(a, Mat::Constant(rows(a), cols(a), g(0, 0) / n));
    });
  }

  Var mse(Var pred, Var target) {
    return mean_all(square(sub(pred, target)));
  }

  // numerically stable BCE-with-logits against a constant target, with
  // optional per-element weights (both plain matrices, not tape vars)
  Var bce_logits(Var logits, Mat target, Mat weight = Mat()) {
    Arr x = val(logits).array();
    Arr t = target.array();
    Arr loss = x.max(S(0)) - x * t + (S(1) + (-x.abs()).exp()).log();
    Mat w = weight.size() ? weight : Mat::Ones(target.rows(), target.cols());
    const S wsum = w.sum();
    Mat v(1, 1);
    v(0, 0) = (loss * w.array()).sum() / wsum;
    return push(std::move(v),
                [this, logits, target = std::move(target), w = std::move(w),
                 wsum](const Mat& g) {
                  Arr x2 = val(logits).array();
                  Arr sig = S(1) / (S(1) + (-x2).exp());
                  acc(logits, ((sig - target.array()) * w.array() * (g(0, 0) / wsum))
                                  .matrix()
                                  .eval());
                });
  }

  // im2col for images stored as (H*W) x C, row-major pixels, zero padding,
  // stride 1, odd kernel k. Output is (H*W) x (k*k*C).
  Var im2col(Var a, int H, int W, int k) {
    const int C = int(cols(a));
    const int pad = k / 2;
    Mat out = Mat::Zero(Eigen::Index(H) * W, Eigen::Index(k) * k * C);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const Eigen::Index p = Eigen::Index(y) * W + x;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            const int sy = y + dy - pad, sx = x + dx - pad;
            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
            out.block(p, Eigen::Index(dy * k + dx) * C, 1, C) =
                val(a).row(Eigen::Index(sy) * W + sx);
          }
      }
    return push(std::move(out), [this, a, H, W, k, C, pad](const Mat& g) {
      Mat ga = Mat::Zero(rows(a), C);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const Eigen::Index p = Eigen::Index(y) * W + x;
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              const int sy = y + dy - pad, sx = x + dx - pad;
              if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
              ga.row(Eigen::Index(sy) * W + sx) +=
                  g.block(p, Eigen::Index(dy * k + dx) * C, 1, C);
            }
        }
      acc(a, std::move(ga));
    });
  }

  // 2x2 average pool on (H*W) x C image; H, W even
  Var avgpool2(Var a, int H, int W) {
    const int C = int(cols(a));
    const int Ho = H / 2, Wo = W / 2;
    Mat out(Eigen::Index(Ho) * Wo, C);
    for (int y = 0; y < Ho; ++y)
      for (int x = 0; x < Wo; ++x)
        out.row(Eigen::Index(y) * Wo + x) =
            S(0.25) * (val(a).row(Eigen::Index(2 * y) * W + 2 * x) +
                       val(a).row(Eigen::Index(2 * y) * W + 2 * x + 1) +
                       val(a).row(Eigen::Index(2 * y + 1) * W + 2 * x) +
                       val(a).row(Eigen::Index(2 * y + 1) * W + 2 * x + 1));
    return push(std::move(out), [this, a, H, W, Ho, Wo, C](const Mat& g) {
      Mat ga(Eigen::Index(H) * W, C);
      for (int y = 0; y < Ho; ++y)
        for (int x = 0; x < Wo; ++x) {
          const auto r = (S(0.25) * g.row(Eigen::Index(y) * Wo + x)).eval();
          ga.row(Eigen::Index(2 * y) * W + 2 * x) = r;
          ga.row(Eigen::Index(2 * y) * W + 2 * x + 1) = r;
          ga.row(Eigen::Index(2 * y + 1) * W + 2 * x) = r;
          ga.row(Eigen::Index(2 * y + 1) * W + 2 * x + 1) = r;
        }
      acc(a, std::move(ga));
    });
  }

  // nearest-neighbor 2x upsample on (H*W) x C image
  Var upsample2(Var a, int H, int W) {
    const int C = int(cols(a));
    const int Ho = H * 2, Wo = W * 2;
    Mat out(Eigen::Index(Ho) * Wo, C);
    for (int y = 0; y < Ho; ++y)
      for (int x = 0; x < Wo; ++x)
        out.row(Eigen::Index(y) * Wo + x) = val(a).row(Eigen::Index(y / 2) * W + x / 2);
    return push(std::move(out), [this, a, H, W, Ho, Wo, C](const Mat& g) {
      Mat ga = Mat::Zero(Eigen::Index(H) * W, C);
      for (int y = 0; y < Ho; ++y)
        for (int x = 0; x < Wo; ++x)
          ga.row(Eigen::Index(y / 2) * W + x / 2) += g.row(Eigen::Index(y) * Wo + x);
      acc(a, std::move(ga));
    });
  }

  void backward(Var loss) {
    assert(val(loss).size() == 1);
    for (auto& n : nodes_)
      if (n.grad.size()) n.grad.setZero();
    ensure_grad(loss.id);
    nodes_[loss.id].grad(0, 0) = S(1);
    for (int i = loss.id; i >= 0; --i) {
      auto& n = nodes_[i];
      if (n.back && n.grad.size()) n.back(n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void(const Mat&)> back;
  };

  Var push(Mat v, std::function<void(const Mat&)> back) {
    nodes_.push_back(Node{std::move(v), Mat(), std::move(back)});
    return Var{int(nodes_.size()) - 1};
  }

  void ensure_grad(int id) {
    auto& n = nodes_[id];
    if (!n.grad.size()) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
  }

  void acc(Var v, const Mat& g) {
    ensure_grad(v.id);
    nodes_[v.id].grad += g;
  }

  std::vector<Node> nodes_;
};

}  // namespace shapeup::nn
