#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "shapeup/core/rng.hpp"
#include "shapeup/synth/partobject.hpp"
#include "shapeup/synth/render.hpp"
#include "shapeup/synth/voxel.hpp"

namespace shapeup::data {

enum class TripletKind { Parts, Dfm };

inline const char* kind_name(TripletKind k) {
  return k == TripletKind::Parts ? "parts" : "dfm";
}

// Supervision unit: source shape, one view of the edited target, target shape.
struct EditTriplet {
  synth::VoxelShape source;
  synth::VoxelShape target;
  synth::ViewRender condition;  // rendered from target
  TripletKind kind = TripletKind::Parts;
  int asset_id = 0;
  int src_variant = 0;
  int tgt_variant = 0;
};

// Progressive part removal: variant 1 is the full union, variant i+1 drops
// part i. Colors carried along; every variant stays non-empty and connected.
inline std::vector<synth::VoxelShape> make_parts_variants(const synth::PartObject& obj) {
  if (obj.parts.size() < 2)
    throw std::invalid_argument("make_parts_variants: need >= 2 parts");
  std::vector<synth::VoxelShape> variants;
  synth::VoxelShape cur = obj.union_shape();
  variants.push_back(cur);
  for (std::size_t i = 0; i + 1 < obj.parts.size(); ++i) {
    const auto& frag = obj.fragments[i];
    for (std::size_t v = 0; v < cur.occupancy.size(); ++v)
      if (frag.occupancy[v]) cur.occupancy[v] = 0;
    if (cur.empty() || !synth::is_connected6(cur))
      throw std::runtime_error("make_parts_variants: removal broke the shape");
    variants.push_back(cur);
  }
  return variants;
}

// Keyframe triple (always containing frame 0) maximizing the summed pairwise
// bounding-box dissimilarity. Frame counts are small, so this searches all
// candidate pairs outright; ties resolve to the lowest indices.
inline std::vector<int> select_dfm_keyframe_indices(const synth::AnimSequence& seq) {
  const int n = seq.n_frames();
  if (n < 3) throw std::invalid_argument("make_dfm_keyframes: need >= 3 frames");
  std::vector<std::array<float, 6>> ext;
  ext.reserve(std::size_t(n));
  for (int f = 0; f < n; ++f)
    ext.push_back(synth::articulate(seq, f).bbox().extents());
  auto dissim = [&](int a, int b) {
    float d = 0.f;
    for (int k = 0; k < 6; ++k) d += std::abs(ext[std::size_t(a)][k] - ext[std::size_t(b)][k]);
    return d;
  };
  int best_a = 1, best_b = 2;
  float best = -1.f;
  for (int a = 1; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const float score = dissim(0, a) + dissim(0, b) + dissim(a, b);
      if (score > best) {
        best = score;
        best_a = a;
        best_b = b;
      }
    }
  return {0, best_a, best_b};
}

inline std::vector<synth::VoxelShape> make_dfm_keyframes(const synth::AnimSequence& seq) {
  std::vector<synth::VoxelShape> out;
  for (int f : select_dfm_keyframe_indices(seq)) out.push_back(synth::articulate(seq, f));
  return out;
}

inline constexpr double kMinEditFraction = 0.01;  // negligible-edit filter
inline constexpr double kFrontViewProb = 0.20;

// condition-view draw with the front-view bias: front orthogonal view with
// probability 0.2, otherwise uniform over the random (non-orthogonal) views
inline synth::ViewSpec draw_condition_view(const std::vector<synth::ViewSpec>& views,
                                           Rng& rng) {
  if (views.size() <= 6)
    throw std::invalid_argument("draw_condition_view: expected 6 orthogonal + random views");
  if (rng.uniform() < kFrontViewProb) return views[std::size_t(synth::kFrontViewIndex)];
  return views[6 + std::size_t(rng.below(views.size() - 6))];
}

// All ordered pairs (i != j) of the given variants/keyframes become triplets;
// pairs whose shapes differ by less than 1% of their occupied voxels are
// dropped as negligible edits.
inline std::vector<EditTriplet> build_triplets(const std::vector<synth::VoxelShape>& shapes,
                                               const std::vector<synth::ViewSpec>& views,
                                               std::uint64_t seed, TripletKind kind,
                                               int asset_id = 0) {
  if (shapes.size() < 2) throw std::invalid_argument("build_triplets: need >= 2 shapes");
  Rng rng(sub_seed(seed, "triplets"));
  std::vector<EditTriplet> out;
  for (std::size_t i = 0; i < shapes.size(); ++i)
    for (std::size_t j = 0; j < shapes.size(); ++j) {
      if (i == j) continue;
      const auto diff = synth::voxel_diff_count(shapes[i], shapes[j]);
      const auto scale = std::max(shapes[i].count(), shapes[j].count());
      const synth::ViewSpec view = draw_condition_view(views, rng);
      if (double(diff) < kMinEditFraction * double(scale)) continue;
      EditTriplet t;
      t.source = shapes[i];
      t.target = shapes[j];
      t.condition = synth::render(shapes[j], view);
      t.kind = kind;
      t.asset_id = asset_id;
      t.src_variant = int(i);
      t.tgt_variant = int(j);
      out.push_back(std::move(t));
    }
  return out;
}

}  // namespace shapeup::data
