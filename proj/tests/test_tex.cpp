#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "shapeup/data/triplet.hpp"
#include "shapeup/tex/model.hpp"
#include "shapeup/tex/train.hpp"

using namespace shapeup;
using namespace shapeup::tex;

namespace {

TexConfig micro_config() {
  TexConfig c;
  c.view_size = 8;
  c.base_ch = 2;
  c.patch = 4;
  c.seed = 13;
  return c;
}

// MVSet with canonical view specs but manually authored pixel content
MVSet constant_mv(int size, float r, float g, float b, float depth = 0.5f) {
  MVSet mv;
  const auto specs = synth::orthogonal_views(size);
  for (std::size_t i = 0; i < 6; ++i) {
    synth::ViewRender& v = mv.views[i];
    v.view = specs[i];
    v.silhouette = synth::Image::Ones(size, size);
    v.depth = synth::Image::Constant(size, size, depth);
    v.nx = synth::Image::Zero(size, size);
    v.ny = synth::Image::Zero(size, size);
    v.nz = synth::Image::Ones(size, size);
    v.color = {synth::Image::Constant(size, size, r),
               synth::Image::Constant(size, size, g),
               synth::Image::Constant(size, size, b)};
  }
  return mv;
}

synth::VoxelShape solid_cube(int res, int lo, int hi) {
  synth::VoxelShape s(res);
  s.ensure_color();
  for (int z = lo; z < hi; ++z)
    for (int y = lo; y < hi; ++y)
      for (int x = lo; x < hi; ++x) {
        s.set(x, y, z, 1);
        const std::size_t i = s.index(x, y, z);
        s.color[3 * i] = 0.4f;
        s.color[3 * i + 1] = 0.6f;
        s.color[3 * i + 2] = 0.2f;
      }
  return s;
}

// random 8^3 blob for the bake oracle; no connectivity requirement
synth::VoxelShape random_blob(std::uint64_t seed) {
  Rng rng(seed);
  synth::VoxelShape s(8);
  for (int z = 1; z < 7; ++z)
    for (int y = 1; y < 7; ++y)
      for (int x = 1; x < 7; ++x)
        if (rng.uniform() < 0.4) s.set(x, y, z, 1);
  s.set(4, 4, 4, 1);
  return s;
}

std::vector<TexItem> micro_items(int view_size) {
  const auto obj = synth::generate_part_object(41, 2, 16);
  const auto variants = data::make_parts_variants(obj);
  const auto views = synth::sample_views(41, 4, view_size);
  const auto triplets =
      data::build_triplets(variants, views, 41, data::TripletKind::Parts, 0);
  std::vector<TexItem> items;
  for (std::size_t i = 0; i < std::min<std::size_t>(2, triplets.size()); ++i)
    items.push_back(make_tex_item(triplets[i], view_size));
  return items;
}

}  // namespace

TEST_CASE("mv tokens: additive view codes, exact difference") {
  TexModel<float> m(micro_config());
  const auto mv = constant_mv(8, 0.3f, 0.6f, 0.9f);
  const auto tok = m.mv_tokens(mv);
  const int np = int(m.params.at("cond.mvpos").rows());
  REQUIRE(tok.rows() == 6 * np);

  // identical pixel content in all views: token rows differ exactly by codes
  const auto& codes = m.params.at("cond.viewcode");
  for (int p = 0; p < np; ++p) {
    const Eigen::RowVectorXf diff = tok.row(3 * np + p) - tok.row(0 * np + p);
    const Eigen::RowVectorXf code_diff = codes.row(3) - codes.row(0);
    CHECK((diff - code_diff).array().abs().maxCoeff() <= 1e-6f);
  }
}

TEST_CASE("MVSet validation: missing color and wrong order are hard errors") {
  auto mv = constant_mv(8, 0.5f, 0.5f, 0.5f);
  CHECK_NOTHROW(mv.validate());
  auto broken = mv;
  broken.views[2].color.reset();
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
  auto swapped = mv;
  std::swap(swapped.views[0].view, swapped.views[1].view);
  CHECK_THROWS_AS(swapped.validate(), std::invalid_argument);
}

TEST_CASE("concat variant: zero-init widening is an exact identity") {
  TexConfig base_cfg = micro_config();
  TexConfig cat_cfg = base_cfg;
  cat_cfg.concat_mv = true;
  TexModel<float> base(base_cfg);
  TexModel<float> cat(cat_cfg);

  // doubled input channels, new ones zero
  REQUIRE(cat.params.has("u.in_mv.w"));
  CHECK(cat.params.at("u.in_mv.w").rows() == cat.params.at("u.in.w").rows());
  CHECK(cat.params.at("u.in_mv.w").isZero());

  const auto mv = constant_mv(8, 0.2f, 0.4f, 0.8f);
  const auto geom = render_geom(solid_cube(8, 2, 6), 8);
  const auto cond_b = base.make_cond(mv.views[4], mv);
  const auto cond_c = cat.make_cond(mv.views[4], mv);
  std::array<Eigen::MatrixXf, 6> z;
  Rng rng(5);
  for (auto& zi : z) {
    zi.resize(64, 3);
    for (Eigen::Index k = 0; k < zi.size(); ++k) zi.data()[k] = float(rng.normal());
  }
  const auto ob = base.forward(z, 0.4f, cond_b, geom);
  const auto oc = cat.forward(z, 0.4f, cond_c, geom);
  for (std::size_t v = 0; v < 6; ++v)
    CHECK((ob[v] - oc[v]).array().abs().maxCoeff() <= 1e-6f);
}

TEST_CASE("texture guidance algebra") {
  Eigen::MatrixXd eu = Eigen::MatrixXd::Random(10, 3);
  Eigen::MatrixXd ei = Eigen::MatrixXd::Random(10, 3);
  Eigen::MatrixXd eb = Eigen::MatrixXd::Random(10, 3);
  CHECK(tex_cfg(eu, ei, eb, 0.0, 1.0) == eb);
  CHECK(tex_cfg(eu, ei, eb, 1.0, 0.0) == ei);
  CHECK(tex_cfg(eu, ei, eb, 0.0, 0.0) == eu);
  const Eigen::MatrixXd gathered = (1.0 - 2.5 - 3.5) * eu + 2.5 * ei + 3.5 * eb;
  CHECK(tex_cfg(eu, ei, eb, 2.5, 3.5) == gathered);
}

TEST_CASE("adapter gradients match central differences within 1e-4") {
  TexModel<double> m(micro_config());
  const auto mv = constant_mv(8, 0.3f, 0.1f, 0.7f);
  const auto geom = render_geom(solid_cube(8, 2, 6), 8);
  auto cond = m.make_cond(mv.views[4], mv);

  Rng rng(9);
  std::array<Eigen::MatrixXd, 6> z, target;
  for (std::size_t v = 0; v < 6; ++v) {
    z[v].resize(64, 3);
    target[v].resize(64, 3);
    for (Eigen::Index k = 0; k < z[v].size(); ++k) {
      z[v].data()[k] = rng.normal();
      target[v].data()[k] = rng.normal();
    }
  }
  auto loss_value = [&]() {
    nn::Tape<double> t;
    nn::Binder<double> bind(t, m.params);
    const auto pred = m.forward_on_tape(t, bind, z, 0.35, cond, geom);
    typename nn::Tape<double>::Var loss;
    for (std::size_t v = 0; v < 6; ++v) {
      auto lv = t.mse(pred[v], t.leaf(target[v]));
      loss = v == 0 ? lv : t.add(loss, lv);
    }
    return t.val(loss)(0, 0);
  };
  m.params.zero_grads();
  {
    nn::Tape<double> t;
    nn::Binder<double> bind(t, m.params);
    const auto pred = m.forward_on_tape(t, bind, z, 0.35, cond, geom);
    typename nn::Tape<double>::Var loss;
    for (std::size_t v = 0; v < 6; ++v) {
      auto lv = t.mse(pred[v], t.leaf(target[v]));
      loss = v == 0 ? lv : t.add(loss, lv);
    }
    t.backward(loss);
    bind.harvest();
  }
  std::vector<std::string> names;
  for (const auto& [k, v] : m.params.values)
    if (TexModel<double>::is_adapter(k)) names.push_back(k);
  const double err =
      nn::grad_check<double>(m.params, names, loss_value, m.params.grads);
  CHECK(err < 1e-4);
}

TEST_CASE("training: frozen backbone, loss improves, deterministic") {
  const auto items = micro_items(8);
  REQUIRE(!items.empty());

  TexModel<float> m(micro_config());
  const auto backbone_before = m.params.values;
  const double before = tex_eval_loss(m, items, 71);
  TexTrainConfig tc;
  tc.steps = 150;
  tc.lr = 3e-3;
  tc.seed = 2;
  const auto log = tex_train(m, items, tc);
  CHECK(tex_eval_loss(m, items, 71) < before);
  for (double l : log.losses) CHECK(std::isfinite(l));

  bool adapter_moved = false;
  for (const auto& [name, val] : m.params.values) {
    if (TexModel<float>::is_adapter(name)) {
      if (val != backbone_before.at(name)) adapter_moved = true;
    } else {
      CHECK(val == backbone_before.at(name));  // frozen backbone
      CHECK(m.params.grads.at(name).isZero());
    }
  }
  CHECK(adapter_moved);

  TexModel<float> m2(micro_config());
  const auto log2 = tex_train(m2, items, tc);
  CHECK(log.losses == log2.losses);
  CHECK(m.params.checksum() == m2.params.checksum());

  // full fine-tune moves the backbone too
  TexModel<float> m3(micro_config());
  TexTrainConfig fc = tc;
  fc.steps = 5;
  fc.adapters_only = false;
  tex_train(m3, items, fc);
  CHECK(m3.params.at("u.mid.w") != backbone_before.at("u.mid.w"));
}

TEST_CASE("generate_views: deterministic, background forced to mid-gray") {
  TexModel<float> m(micro_config());
  const auto shape = solid_cube(8, 2, 6);
  auto src = render_mv(shape, 8);
  const auto geom = render_geom(shape, 8);
  TexGuidance g;
  g.steps = 2;
  const auto a = generate_views(m, src.views[4], src, geom, g, 55);
  const auto b = generate_views(m, src.views[4], src, geom, g, 55);
  for (std::size_t v = 0; v < 6; ++v)
    for (int c = 0; c < 3; ++c) {
      CHECK(((*a.views[v].color)[std::size_t(c)] ==
             (*b.views[v].color)[std::size_t(c)]).all());
      const auto& img = (*a.views[v].color)[std::size_t(c)];
      CHECK(img.minCoeff() >= 0.f);
      CHECK(img.maxCoeff() <= 1.f);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          if (geom.views[v].silhouette(y, x) == 0.f)
            CHECK(img(y, x) == 0.5f);
    }
  a.validate();
}

TEST_CASE("bake: constant views give a uniform shape, exactly") {
  const auto shape = solid_cube(8, 1, 7);
  const auto mv = constant_mv(12, 0.25f, 0.5f, 0.75f);
  const auto baked = bake(mv, shape);
  REQUIRE(baked.has_color());
  for (std::size_t i = 0; i < shape.occupancy.size(); ++i) {
    if (!shape.occupancy[i]) continue;
    CHECK(baked.color[3 * i] == doctest::Approx(0.25f).epsilon(1e-6));
    CHECK(baked.color[3 * i + 1] == doctest::Approx(0.5f).epsilon(1e-6));
    CHECK(baked.color[3 * i + 2] == doctest::Approx(0.75f).epsilon(1e-6));
  }
  CHECK_THROWS_AS(bake(mv, synth::VoxelShape(8)), std::invalid_argument);
}

TEST_CASE("bake: +x-only-visible voxel copies the +x pixel exactly") {
  // full cube: face-interior voxels are visible from exactly one view.
  // image size 12 puts pixel centers exactly on voxel-center projections.
  synth::VoxelShape shape = solid_cube(8, 0, 8);
  auto mv = constant_mv(12, 0.f, 0.f, 0.f);
  // paint the +x view (index 0) with a per-pixel pattern
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j) {
      (*mv.views[0].color)[0](i, j) = float(i) / 12.f;
      (*mv.views[0].color)[1](i, j) = float(j) / 12.f;
    }
  const auto baked = bake(mv, shape);

  // voxel (7,3,2): +x face interior, occluded in all other views
  const auto cb = synth::camera_basis(mv.views[0].view);
  const Eigen::Vector3f p = shape.center_of(7, 3, 2);
  const Eigen::Vector3f d = p - Eigen::Vector3f(0.5f, 0.5f, 0.5f);
  const int j = int(std::lround((d.dot(cb.right) / synth::kOrthoExtent + 0.5f) * 12.f - 0.5f));
  const int i = int(std::lround((0.5f - d.dot(cb.up) / synth::kOrthoExtent) * 12.f - 0.5f));
  const std::size_t vi = shape.index(7, 3, 2);
  CHECK(baked.color[3 * vi] == (*mv.views[0].color)[0](i, j));
  CHECK(baked.color[3 * vi + 1] == (*mv.views[0].color)[1](i, j));
}

TEST_CASE("bake matches an exhaustive renderer-based visibility oracle") {
  const auto shape = random_blob(19);
  const int img = 12;  // aligned pixel grid for res 8

  // views rendered from a colored copy so each pixel carries real content
  synth::VoxelShape colored = shape;
  colored.ensure_color();
  for (std::size_t i = 0; i < colored.occupancy.size(); ++i)
    if (colored.occupancy[i]) {
      colored.color[3 * i] = float(i % 7) / 7.f;
      colored.color[3 * i + 1] = float(i % 5) / 5.f;
      colored.color[3 * i + 2] = float(i % 3) / 3.f;
    }
  const auto mv = render_mv(colored, img);
  const auto baked = bake(mv, shape);

  // oracle: visibility by comparing the rendered depth to this voxel's
  // canonical slab-entry depth along the pixel ray
  synth::VoxelShape oracle = shape;
  oracle.ensure_color();
  std::vector<std::uint8_t> seen(shape.occupancy.size(), 0);
  for (int z = 0; z < 8; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        if (!shape.occ(x, y, z)) continue;
        float wsum = 0.f;
        Eigen::Vector3f csum = Eigen::Vector3f::Zero();
        for (const auto& view : mv.views) {
          const auto cb = synth::camera_basis(view.view);
          const Eigen::Vector3f p = shape.center_of(x, y, z);
          const Eigen::Vector3f d = p - Eigen::Vector3f(0.5f, 0.5f, 0.5f);
          const int j = int(std::lround(
              (d.dot(cb.right) / synth::kOrthoExtent + 0.5f) * float(img) - 0.5f));
          const int i = int(std::lround(
              (0.5f - d.dot(cb.up) / synth::kOrthoExtent) * float(img) - 0.5f));
          if (i < 0 || i >= img || j < 0 || j >= img) continue;
          const Eigen::Vector3f origin = synth::pixel_ray_origin(view.view, cb, i, j);
          float t_entry = 0.f;
          if (!synth::voxel_entry_t(origin, -cb.v, 8, x, y, z, t_entry)) continue;
          if (std::abs(view.depth(i, j) - t_entry / synth::kDepthRange) > 1e-6f)
            continue;  // some closer voxel owns this pixel: occluded
          const Eigen::Vector3f n = synth::voxel_normal(shape, x, y, z, -cb.v);
          const float w = std::abs(n.dot(cb.v));
          if (w <= 0.f) continue;
          csum += w * Eigen::Vector3f((*view.color)[0](i, j), (*view.color)[1](i, j),
                                      (*view.color)[2](i, j));
          wsum += w;
        }
        if (wsum > 0.f) {
          const std::size_t vi = shape.index(x, y, z);
          for (int c = 0; c < 3; ++c) oracle.color[3 * vi + std::size_t(c)] = csum[c] / wsum;
          seen[vi] = 1;
        }
      }
  int checked = 0;
  for (std::size_t i = 0; i < shape.occupancy.size(); ++i) {
    if (!seen[i]) continue;
    ++checked;
    for (int c = 0; c < 3; ++c)
      CHECK(baked.color[3 * i + std::size_t(c)] ==
            doctest::Approx(oracle.color[3 * i + std::size_t(c)]).epsilon(1e-6));
  }
  CHECK(checked > 20);
}

TEST_CASE("make_tex_item re-renders at the texture resolution") {
  const auto items = micro_items(8);
  REQUIRE(!items.empty());
  CHECK(items[0].source_mv.image_size() == 8);
  CHECK(items[0].target_mv.image_size() == 8);
  CHECK(items[0].edit_image.view.image_size == 8);
  items[0].source_mv.validate();
  items[0].target_mv.validate();
}
