#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "shapeup/data/dataset.hpp"
#include "shapeup/data/triplet.hpp"

using namespace shapeup;
using namespace shapeup::data;

TEST_CASE("parts variants: counts, monotone occupancy, exact union identity") {
  const auto obj = synth::generate_part_object(4, 3, 32);
  const auto variants = make_parts_variants(obj);
  REQUIRE(variants.size() == 3);
  for (std::size_t i = 0; i + 1 < variants.size(); ++i)
    CHECK(variants[i].count() > variants[i + 1].count());

  // variant 2 (union) part 1 == variant 1, voxel for voxel
  synth::VoxelShape rebuilt = variants[1];
  for (std::size_t v = 0; v < rebuilt.occupancy.size(); ++v)
    rebuilt.occupancy[v] |= obj.fragments[0].occupancy[v];
  CHECK(rebuilt.occupancy == variants[0].occupancy);

  const auto two = make_parts_variants(synth::generate_part_object(5, 2, 32));
  CHECK(two.size() == 2);
}

TEST_CASE("dfm keyframes: unique maximizer, tie-break, brute-force oracle") {
  auto seq = synth::generate_anim(8, 3, 32, 10);

  SUBCASE("constant sequence breaks ties to lowest indices") {
    for (auto& angles : seq.pose_angles)
      for (auto& a : angles) a = 0.f;
    const auto idx = select_dfm_keyframe_indices(seq);
    CHECK(idx == std::vector<int>{0, 1, 2});
  }

  SUBCASE("only frame k moves -> frame k selected") {
    for (auto& angles : seq.pose_angles)
      for (auto& a : angles) a = 0.f;
    const int k = 6;
    for (auto& a : seq.pose_angles[k]) a = 0.9f;
    const auto idx = select_dfm_keyframe_indices(seq);
    CHECK((idx[1] == k || idx[2] == k));
  }

  SUBCASE("matches exhaustive search over all triples containing frame 0") {
    const int n = seq.n_frames();
    std::vector<std::array<float, 6>> ext;
    for (int f = 0; f < n; ++f)
      ext.push_back(synth::articulate(seq, f).bbox().extents());
    auto dissim = [&](int a, int b) {
      float d = 0.f;
      for (int k = 0; k < 6; ++k) d += std::abs(ext[a][k] - ext[b][k]);
      return d;
    };
    float best = -1.f;
    std::vector<int> best_triple;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        for (int c = b + 1; c < n; ++c) {
          if (a != 0 && b != 0 && c != 0) continue;
          const float s = dissim(a, b) + dissim(a, c) + dissim(b, c);
          if (s > best) {
            best = s;
            best_triple = {a, b, c};
          }
        }
    CHECK(select_dfm_keyframe_indices(seq) == best_triple);
  }

  SUBCASE("too-short sequence rejected") {
    seq.pose_angles.resize(2);
    CHECK_THROWS_AS(select_dfm_keyframe_indices(seq), std::invalid_argument);
  }
}

TEST_CASE("build_triplets: ordered pairs, condition matches target render") {
  const auto obj = synth::generate_part_object(12, 3, 32);
  const auto variants = make_parts_variants(obj);
  const auto views = synth::sample_views(2, 8, 32);
  const auto trips = build_triplets(variants, views, 7, TripletKind::Parts, 12);
  CHECK(trips.size() == 6);
  for (const auto& t : trips) {
    CHECK(t.source.occupancy != t.target.occupancy);
    const auto r = synth::render(t.target, t.condition.view);
    CHECK((r.depth - t.condition.depth).abs().maxCoeff() == 0.f);
    CHECK((r.silhouette - t.condition.silhouette).abs().maxCoeff() == 0.f);
  }
  // determinism
  const auto again = build_triplets(variants, views, 7, TripletKind::Parts, 12);
  CHECK(again[0].condition.view.azimuth == trips[0].condition.view.azimuth);
}

TEST_CASE("front-view bias rate is 0.20 +/- 0.02") {
  const auto views = synth::sample_views(3, 20, 32);
  Rng rng(99);
  int front = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto v = draw_condition_view(views, rng);
    if (v.azimuth == 0.f && v.elevation == 0.f) ++front;
  }
  const double rate = double(front) / n;
  CHECK(rate > 0.18);
  CHECK(rate < 0.22);
}

TEST_CASE("weighted sampler: 3x DFM weight, closed form, degenerate cases") {
  auto fake_manifest = [](std::size_t n_parts, std::size_t n_dfm) {
    DatasetManifest m;
    for (std::size_t i = 0; i < n_parts; ++i) {
      ManifestEntry e;
      e.kind = TripletKind::Parts;
      m.entries.push_back(e);
    }
    for (std::size_t i = 0; i < n_dfm; ++i) {
      ManifestEntry e;
      e.kind = TripletKind::Dfm;
      m.entries.push_back(e);
    }
    return m;
  };

  SUBCASE("paper corpus proportions give ~0.197 empirical DFM rate") {
    const auto m = fake_manifest(6870, 560);
    WeightedSampler s(m, 5);
    int dfm = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i)
      if (m.entries[s.next()].kind == TripletKind::Dfm) ++dfm;
    const double rate = double(dfm) / n;
    CHECK(rate > 0.196 - 0.01);
    CHECK(rate < 0.21);
    CHECK(s.dfm_probability() == doctest::Approx(3.0 * 560 / (3.0 * 560 + 6870)));
  }

  SUBCASE("monte carlo matches closed form within 1% on synthetic manifests") {
    for (auto [np, nd] : {std::pair<int, int>{100, 100}, {500, 20}, {30, 300}}) {
      const auto m = fake_manifest(std::size_t(np), std::size_t(nd));
      WeightedSampler s(m, 11);
      int dfm = 0;
      const int n = 100000;
      for (int i = 0; i < n; ++i)
        if (m.entries[s.next()].kind == TripletKind::Dfm) ++dfm;
      CHECK(std::abs(double(dfm) / n - s.dfm_probability()) < 0.01);
    }
  }

  SUBCASE("parts-only manifest draws uniformly, empty manifest throws") {
    const auto m = fake_manifest(50, 0);
    WeightedSampler s(m, 3);
    CHECK(s.dfm_probability() == 0.0);
    for (int i = 0; i < 100; ++i)
      CHECK(m.entries[s.next()].kind == TripletKind::Parts);
    CHECK_THROWS_AS(WeightedSampler(fake_manifest(0, 0), 1), std::invalid_argument);
  }

  SUBCASE("same seed gives the same stream") {
    const auto m = fake_manifest(40, 15);
    WeightedSampler a(m, 9), b(m, 9);
    for (int i = 0; i < 200; ++i) CHECK(a.next() == b.next());
  }
}

TEST_CASE("corpus invariants: parts edit mask and dfm root preservation") {
  CorpusConfig cfg;
  cfg.n_parts_assets = 2;
  cfg.n_dfm_assets = 1;
  const Corpus c = build_corpus(21, cfg);
  CHECK(!c.triplets.empty());
  for (const auto& t : c.triplets) {
    CHECK(t.source.resolution == t.target.resolution);
    const auto mask = edit_mask(t);
    std::size_t diff = 0;
    for (auto v : mask) diff += v;
    CHECK(diff > 0);
    if (t.kind == TripletKind::Dfm) {
      // root voxels present in both source and target
      const std::uint64_t aseed = sub_seed(21, "dfm-asset-" + std::to_string(t.asset_id - 1000));
      const auto seq = synth::generate_anim(aseed, 3, cfg.resolution, cfg.anim_frames);
      const auto& root = seq.object.fragments[std::size_t(seq.object.base)];
      for (std::size_t i = 0; i < root.occupancy.size(); ++i)
        if (root.occupancy[i]) {
          CHECK(t.source.occupancy[i] == 1);
          CHECK(t.target.occupancy[i] == 1);
        }
    }
  }
}

TEST_CASE("manifest round trip is byte identical") {
  CorpusConfig cfg;
  cfg.n_parts_assets = 1;
  cfg.n_dfm_assets = 1;
  const Corpus c = build_corpus(33, cfg);
  const std::string dir = "/tmp/shapeup_test_dataset";
  std::filesystem::remove_all(dir);
  const auto m = write_corpus(c, dir);
  m.validate_files();

  auto loaded = DatasetManifest::load(dir + "/manifest.jsonl");
  CHECK(loaded.entries.size() == m.entries.size());
  loaded.save(dir + "/manifest2.jsonl");
  std::ifstream a(dir + "/manifest.jsonl"), b(dir + "/manifest2.jsonl");
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);

  // corrupting a referenced file is reported
  std::filesystem::remove(loaded.resolve(loaded.entries[0].src_path));
  CHECK_THROWS(loaded.validate_files());
  std::filesystem::remove_all(dir);
}
