#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "shapeup/data/triplet.hpp"
#include "shapeup/synth/partobject.hpp"
#include "shapeup/synth/render.hpp"

namespace shapeup::eval {

enum class Category { Parts, GlobalDeformation, GlobalPose, GlobalTexture };

inline const char* category_name(Category c) {
  switch (c) {
    case Category::Parts: return "parts";
    case Category::GlobalDeformation: return "deformation";
    case Category::GlobalPose: return "pose";
    case Category::GlobalTexture: return "texture";
  }
  return "?";
}

struct BenchCase {
  synth::VoxelShape source;
  synth::VoxelShape target;  // procedural edits always carry ground truth
  Category category = Category::Parts;
  synth::ViewSpec cond_view;
  synth::ViewRender condition;  // rendered from target
  std::vector<std::uint8_t> edit_mask;  // occupancy symmetric difference
  int asset_id = 0;
};

// Held-out benchmark. Asset ids live in a per-seed band starting at 1e6, far
// above the training corpus ids, so two seeds (and train vs bench) never
// share an id. Category mix is 30/30/30/10 parts/deformation/pose/texture.
inline std::vector<BenchCase> build_bench(std::uint64_t seed, int n_assets,
                                          int n_conds, int resolution = 32,
                                          int image_size = 32) {
  if (n_assets < 1 || n_assets > 100)
    throw std::invalid_argument("build_bench: n_assets must be in [1,100]");
  const int n_parts_cases = (3 * n_conds) / 10;
  const int n_deform = n_parts_cases, n_pose = n_parts_cases;
  const int n_texture = n_conds - 3 * n_parts_cases;

  auto asset_id_of = [&](int idx) {
    return 1000000 + int(seed % 1000000u) * 100 + idx;
  };
  std::map<int, synth::PartObject> objs;
  std::map<int, synth::AnimSequence> anims;
  auto object_for = [&](int idx) -> const synth::PartObject& {
    auto it = objs.find(idx);
    if (it != objs.end()) return it->second;
    const std::uint64_t aseed =
        sub_seed(seed, "bench-asset-" + std::to_string(asset_id_of(idx)));
    Rng r(sub_seed(aseed, "nparts"));
    const int n_parts = 2 + int(r.below(3));
    return objs.emplace(idx, synth::generate_part_object(aseed, n_parts, resolution))
        .first->second;
  };
  auto anim_for = [&](int idx) -> const synth::AnimSequence& {
    auto it = anims.find(idx);
    if (it != anims.end()) return it->second;
    const std::uint64_t aseed =
        sub_seed(seed, "bench-anim-" + std::to_string(asset_id_of(idx)));
    return anims.emplace(idx, synth::generate_anim(aseed, 3, resolution, 10))
        .first->second;
  };

  std::vector<BenchCase> out;
  out.reserve(std::size_t(n_conds));
  for (int c = 0; c < n_conds; ++c) {
    Category cat = Category::GlobalTexture;
    if (c < n_parts_cases) cat = Category::Parts;
    else if (c < n_parts_cases + n_deform) cat = Category::GlobalDeformation;
    else if (c < n_parts_cases + n_deform + n_pose) cat = Category::GlobalPose;

    Rng rng(sub_seed(seed, "bench-case-" + std::to_string(c)));
    const int idx = c % n_assets;
    BenchCase bc;
    bc.category = cat;
    bc.asset_id = asset_id_of(idx);

    switch (cat) {
      case Category::Parts: {
        const auto variants = data::make_parts_variants(object_for(idx));
        const int i = int(rng.below(std::uint64_t(variants.size() - 1)));
        if (rng.uniform() < 0.5) {  // removal vs addition
          bc.source = variants[std::size_t(i)];
          bc.target = variants[std::size_t(i + 1)];
        } else {
          bc.source = variants[std::size_t(i + 1)];
          bc.target = variants[std::size_t(i)];
        }
        break;
      }
      case Category::GlobalDeformation: {
        const auto& obj = object_for(idx);
        bc.source = obj.union_shape();
        for (int attempt = 0; attempt < 8; ++attempt) {
          const Eigen::Vector3f aniso(float(rng.uniform(0.75, 1.25)),
                                      float(rng.uniform(0.75, 1.25)),
                                      float(rng.uniform(0.75, 1.25)));
          const float taper = float(rng.uniform(-0.25, 0.25));
          bc.target = synth::deform(obj, aniso, taper);
          if (!bc.target.empty() &&
              double(synth::voxel_diff_count(bc.source, bc.target)) >=
                  data::kMinEditFraction * double(bc.source.count()))
            break;
        }
        break;
      }
      case Category::GlobalPose: {
        const auto& seq = anim_for(idx);
        bc.source = synth::articulate(seq, 0);
        for (int attempt = 0; attempt < 8; ++attempt) {
          const int f = 1 + int(rng.below(std::uint64_t(seq.n_frames() - 1)));
          bc.target = synth::articulate(seq, f);
          if (double(synth::voxel_diff_count(bc.source, bc.target)) >=
              data::kMinEditFraction * double(bc.source.count()))
            break;
        }
        break;
      }
      case Category::GlobalTexture: {
        const auto& obj = object_for(idx);
        bc.source = obj.union_shape();
        bc.target = synth::palette_swap(obj, rng.next_u64());
        break;
      }
    }

    bc.cond_view.azimuth = float(rng.uniform(-30.0, 30.0));
    bc.cond_view.elevation = float(rng.uniform(-15.0, 30.0));
    bc.cond_view.image_size = image_size;
    bc.condition = synth::render(bc.target, bc.cond_view);
    bc.edit_mask.assign(bc.source.occupancy.size(), 0);
    for (std::size_t i = 0; i < bc.edit_mask.size(); ++i)
      bc.edit_mask[i] = bc.source.occupancy[i] ^ bc.target.occupancy[i];
    out.push_back(std::move(bc));
  }
  return out;
}

}  // namespace shapeup::eval
