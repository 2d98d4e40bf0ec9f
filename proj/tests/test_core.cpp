#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "shapeup/core/container.hpp"
#include "shapeup/core/params.hpp"
#include "shapeup/core/rng.hpp"
#include "shapeup/core/tape.hpp"

using namespace shapeup;
using nn::Tape;

TEST_CASE("rng determinism and ranges") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  CHECK(Rng(1).next_u64() != Rng(2).next_u64());
  CHECK(sub_seed(7, "codec") != sub_seed(7, "edit"));
}

TEST_CASE("rng normal moments") {
  Rng rng(5);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("tensor container round trip") {
  TensorContainer c;
  Eigen::MatrixXf m = Eigen::MatrixXf::Random(5, 7);
  c.put_any("w", m);
  c.put_any("b", Eigen::MatrixXf::Random(1, 7));
  const std::string path = "/tmp/shapeup_test_container.tns";
  c.save(path);
  TensorContainer d = TensorContainer::load(path);
  CHECK(d.has("w"));
  CHECK((d.get("w").cast<float>() - Eigen::Matrix<float, -1, -1, Eigen::RowMajor>(m)).cwiseAbs().maxCoeff() == 0.f);
  CHECK(c.checksum() == d.checksum());
  std::remove(path.c_str());
  CHECK_THROWS(d.get("missing"));
}

namespace {

// generic finite-difference check for a scalar-valued tape computation
template <class Fn>
double fd_check(Eigen::MatrixXd x0, Fn&& build, double h = 1e-6) {
  double max_rel = 0.0;
  for (Eigen::Index j = 0; j < x0.cols(); ++j)
    for (Eigen::Index i = 0; i < x0.rows(); ++i) {
      Tape<double> t;
      auto x = t.leaf(x0);
      auto loss = build(t, x);
      t.backward(loss);
      const double an = t.grad(x)(i, j);

      auto eval = [&](double v) {
        Eigen::MatrixXd xp = x0;
        xp(i, j) = v;
        Tape<double> tt;
        auto xv = tt.leaf(xp);
        return tt.val(build(tt, xv))(0, 0);
      };
      const double fd = (eval(x0(i, j) + h) - eval(x0(i, j) - h)) / (2 * h);
      const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
      max_rel = std::max(max_rel, std::abs(an - fd) / denom);
    }
  return max_rel;
}

}  // namespace

TEST_CASE("tape gradients match finite differences on composed ops") {
  Rng rng(11);
  Eigen::MatrixXd x(3, 4);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Eigen::MatrixXd w(4, 4), tgt(3, 4);
  for (int i = 0; i < w.size(); ++i) w.data()[i] = rng.normal() * 0.5;
  for (int i = 0; i < tgt.size(); ++i) tgt.data()[i] = rng.normal();

  SUBCASE("matmul + gelu + mse") {
    const double e = fd_check(x, [&](Tape<double>& t, Tape<double>::Var xv) {
      auto wv = t.leaf(w);
      return t.mse(t.gelu(t.matmul(xv, wv)), t.leaf(tgt));
    });
    CHECK(e < 1e-6);
  }
  SUBCASE("softmax attention") {
    const double e = fd_check(x, [&](Tape<double>& t, Tape<double>::Var xv) {
      auto a = t.softmax_rows(t.matmul(xv, t.transpose(xv)));
      return t.mean_all(t.matmul(a, xv));
    });
    CHECK(e < 1e-6);
  }
  SUBCASE("layernorm + rowvec affine") {
    Eigen::MatrixXd g0 = Eigen::MatrixXd::Constant(1, 4, 1.3);
    Eigen::MatrixXd b0 = Eigen::MatrixXd::Constant(1, 4, -0.2);
    const double e = fd_check(x, [&](Tape<double>& t, Tape<double>::Var xv) {
      auto y = t.add_rowvec(t.cmul_rowvec(t.layernorm_rows(xv), t.leaf(g0)), t.leaf(b0));
      return t.mse(y, t.leaf(tgt));
    });
    CHECK(e < 1e-5);
  }
  SUBCASE("bce with logits") {
    Eigen::MatrixXd tt = (tgt.array() > 0).cast<double>();
    const double e = fd_check(x, [&](Tape<double>& t, Tape<double>::Var xv) {
      return t.bce_logits(xv, tt);
    });
    CHECK(e < 1e-6);
  }
  SUBCASE("softmax/exp/log/clamp/square chain") {
    const double e = fd_check(x, [&](Tape<double>& t, Tape<double>::Var xv) {
      auto y = t.square(t.clamp(t.exp_of(t.scale(xv, 0.3)), 0.8, 2.0));
      return t.mean_all(t.cmul(y, t.sigmoid(xv)));
    });
    CHECK(e < 1e-5);
  }
  SUBCASE("slicing, concat, gather") {
    const double e = fd_check(x, [&](Tape<double>& t, Tape<double>::Var xv) {
      auto top = t.rows_of(xv, 0, 2);
      auto rest = t.rows_of(xv, 2, 1);
      auto cat = t.vcat(top, rest);
      auto g = t.gather_rows(cat, {2, 0, 0, 1});
      auto h = t.hcat(t.cols_of(g, 0, 2), t.cols_of(g, 2, 2));
      return t.mean_all(t.square(h));
    });
    CHECK(e < 1e-6);
  }
}

TEST_CASE("tape image ops gradients") {
  Rng rng(12);
  const int H = 4, W = 4, C = 2;
  Eigen::MatrixXd img(H * W, C);
  for (int i = 0; i < img.size(); ++i) img.data()[i] = rng.normal();

  SUBCASE("im2col conv") {
    Eigen::MatrixXd k(9 * C, 3);
    for (int i = 0; i < k.size(); ++i) k.data()[i] = rng.normal() * 0.2;
    const double e = fd_check(img, [&](Tape<double>& t, Tape<double>::Var xv) {
      return t.mean_all(t.square(t.matmul(t.im2col(xv, H, W, 3), t.leaf(k))));
    });
    CHECK(e < 1e-6);
  }
  SUBCASE("pool and upsample") {
    const double e = fd_check(img, [&](Tape<double>& t, Tape<double>::Var xv) {
      auto d = t.avgpool2(xv, H, W);
      auto u = t.upsample2(d, H / 2, W / 2);
      return t.mean_all(t.square(t.sub(u, xv)));
    });
    CHECK(e < 1e-6);
  }
}

TEST_CASE("adam reduces a quadratic") {
  nn::ParamSet<double> ps;
  Rng rng(3);
  ps.add("w", 4, 4, rng, 1.0);
  nn::Adam<double> opt(0.05);
  double first = 0, last = 0;
  for (int step = 0; step < 200; ++step) {
    ps.zero_grads();
    Tape<double> t;
    nn::Binder<double> bind(t, ps);
    auto loss = t.mean_all(t.square(bind("w")));
    t.backward(loss);
    bind.harvest();
    if (step == 0) first = t.val(loss)(0, 0);
    last = t.val(loss)(0, 0);
    opt.step(ps);
  }
  CHECK(last < 0.01 * first);
}

TEST_CASE("binder trainable filter freezes params") {
  nn::ParamSet<double> ps;
  Rng rng(4);
  ps.add("frozen", 2, 2, rng, 1.0);
  ps.add("lora", 2, 2, rng, 1.0);
  ps.zero_grads();
  Tape<double> t;
  nn::Binder<double> bind(t, ps);
  auto loss = t.mean_all(t.square(t.matmul(bind("frozen"), bind("lora"))));
  t.backward(loss);
  bind.harvest([](const std::string& n) { return n == "lora"; });
  CHECK(ps.grads["frozen"].cwiseAbs().maxCoeff() == 0.0);
  CHECK(ps.grads["lora"].cwiseAbs().maxCoeff() > 0.0);
}
