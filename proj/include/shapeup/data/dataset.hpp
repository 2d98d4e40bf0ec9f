#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "shapeup/data/triplet.hpp"

namespace shapeup::data {

struct ManifestEntry {
  TripletKind kind = TripletKind::Parts;
  int asset_id = 0;
  int src_variant = 0;
  int tgt_variant = 0;
  float azimuth = 0.f;
  float elevation = 0.f;
  std::string src_path;
  std::string tgt_path;
  std::string cond_prefix;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
  // entry paths are relative to the dataset directory so the tree is
  // relocatable and two runs of the same seed are byte-identical
  std::string base_dir;

  std::string resolve(const std::string& path) const {
    if (base_dir.empty() || (!path.empty() && path.front() == '/')) return path;
    return base_dir + "/" + path;
  }

  std::size_t count(TripletKind k) const {
    std::size_t n = 0;
    for (const auto& e : entries) n += (e.kind == k) ? 1 : 0;
    return n;
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("manifest: cannot write " + path);
    nlohmann::json hdr = {{"type", "header"},
                          {"seed", seed},
                          {"parts", count(TripletKind::Parts)},
                          {"dfm", count(TripletKind::Dfm)}};
    f << hdr.dump() << "\n";
    for (const auto& e : entries) {
      nlohmann::json j = {{"type", "triplet"},
                          {"kind", kind_name(e.kind)},
                          {"asset", e.asset_id},
                          {"src_variant", e.src_variant},
                          {"tgt_variant", e.tgt_variant},
                          {"az", e.azimuth},
                          {"el", e.elevation},
                          {"src", e.src_path},
                          {"tgt", e.tgt_path},
                          {"cond", e.cond_prefix}};
      f << j.dump() << "\n";
    }
  }

  static DatasetManifest load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("manifest: cannot read " + path);
    DatasetManifest m;
    m.base_dir = std::filesystem::path(path).parent_path().string();
    std::string line;
    std::size_t declared_parts = 0, declared_dfm = 0;
    bool have_header = false;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (j.at("type") == "header") {
        m.seed = j.at("seed").get<std::uint64_t>();
        declared_parts = j.at("parts").get<std::size_t>();
        declared_dfm = j.at("dfm").get<std::size_t>();
        have_header = true;
        continue;
      }
      ManifestEntry e;
      e.kind = j.at("kind") == "dfm" ? TripletKind::Dfm : TripletKind::Parts;
      e.asset_id = j.at("asset").get<int>();
      e.src_variant = j.at("src_variant").get<int>();
      e.tgt_variant = j.at("tgt_variant").get<int>();
      e.azimuth = j.at("az").get<float>();
      e.elevation = j.at("el").get<float>();
      e.src_path = j.at("src").get<std::string>();
      e.tgt_path = j.at("tgt").get<std::string>();
      e.cond_prefix = j.at("cond").get<std::string>();
      m.entries.push_back(std::move(e));
    }
    if (!have_header) throw std::runtime_error("manifest: missing header in " + path);
    if (declared_parts != m.count(TripletKind::Parts) ||
        declared_dfm != m.count(TripletKind::Dfm))
      throw std::runtime_error("manifest: header counts disagree with entries in " + path);
    return m;
  }

  // every referenced file must exist
  void validate_files() const {
    namespace fs = std::filesystem;
    for (const auto& e : entries) {
      if (!fs::exists(resolve(e.src_path)))
        throw std::runtime_error("manifest: missing file " + resolve(e.src_path));
      if (!fs::exists(resolve(e.tgt_path)))
        throw std::runtime_error("manifest: missing file " + resolve(e.tgt_path));
      if (!fs::exists(resolve(e.cond_prefix) + ".depth.pfm"))
        throw std::runtime_error("manifest: missing render " + resolve(e.cond_prefix));
    }
  }
};

// Infinite class-weighted stream over manifest entries. DFM entries carry 3x
// the Parts weight; within a class, entries are uniform. Single consumer.
class WeightedSampler {
public:
  static constexpr double kDfmWeight = 3.0;

  WeightedSampler(const DatasetManifest& manifest, std::uint64_t seed)
      : rng_(sub_seed(seed, "sampler")) {
    if (manifest.entries.empty())
      throw std::invalid_argument("WeightedSampler: empty manifest");
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
      (manifest.entries[i].kind == TripletKind::Dfm ? dfm_ : parts_).push_back(i);
  }

  // probability of drawing a DFM entry: 3*n_dfm / (3*n_dfm + n_parts)
  double dfm_probability() const {
    const double w = kDfmWeight * double(dfm_.size()) + double(parts_.size());
    return w == 0.0 ? 0.0 : kDfmWeight * double(dfm_.size()) / w;
  }

  std::size_t next() {
    const double p = dfm_probability();
    if (!dfm_.empty() && (parts_.empty() || rng_.uniform() < p))
      return dfm_[std::size_t(rng_.below(dfm_.size()))];
    return parts_[std::size_t(rng_.below(parts_.size()))];
  }

private:
  Rng rng_;
  std::vector<std::size_t> parts_, dfm_;
};

// In-memory dataset used by the trainers; the CLI mirrors it to disk.
struct Corpus {
  int resolution = 32;
  std::vector<EditTriplet> triplets;
  // all distinct shapes (variants + keyframes) for codec training
  std::vector<synth::VoxelShape> shapes;
  // per-triplet ground-truth edit mask for Parts (symmetric difference)
  std::uint64_t seed = 0;
};

struct CorpusConfig {
  int n_parts_assets = 24;
  int n_dfm_assets = 6;
  int resolution = 32;
  int image_size = 32;
  int n_random_views = 8;
  int anim_frames = 10;
  std::uint64_t asset_seed_base = 0;  // shifts the asset id range (train/test split)
};

inline Corpus build_corpus(std::uint64_t seed, const CorpusConfig& cfg) {
  Corpus c;
  c.resolution = cfg.resolution;
  c.seed = seed;
  for (int a = 0; a < cfg.n_parts_assets; ++a) {
    const std::uint64_t aseed =
        sub_seed(seed, "parts-asset-" + std::to_string(cfg.asset_seed_base + a));
    Rng r(aseed);
    const int n_parts = 2 + int(r.below(3));
    const auto obj = synth::generate_part_object(aseed, n_parts, cfg.resolution);
    const auto variants = make_parts_variants(obj);
    for (const auto& v : variants) c.shapes.push_back(v);
    const auto views = synth::sample_views(aseed, cfg.n_random_views, cfg.image_size);
    auto trips = build_triplets(variants, views, aseed, TripletKind::Parts, int(cfg.asset_seed_base) + a);
    for (auto& t : trips) c.triplets.push_back(std::move(t));
  }
  for (int a = 0; a < cfg.n_dfm_assets; ++a) {
    const std::uint64_t aseed =
        sub_seed(seed, "dfm-asset-" + std::to_string(cfg.asset_seed_base + a));
    const auto seq = synth::generate_anim(aseed, 3, cfg.resolution, cfg.anim_frames);
    const auto keyframes = make_dfm_keyframes(seq);
    for (const auto& k : keyframes) c.shapes.push_back(k);
    const auto views = synth::sample_views(aseed, cfg.n_random_views, cfg.image_size);
    auto trips = build_triplets(keyframes, views, aseed, TripletKind::Dfm,
                                1000 + int(cfg.asset_seed_base) + a);
    for (auto& t : trips) c.triplets.push_back(std::move(t));
  }
  return c;
}

// ground-truth edit mask: symmetric difference of source and target
inline std::vector<std::uint8_t> edit_mask(const EditTriplet& t) {
  std::vector<std::uint8_t> mask(t.source.occupancy.size(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = t.source.occupancy[i] ^ t.target.occupancy[i];
  return mask;
}

// Mirrors a corpus to disk in the documented layout and returns the manifest.
inline DatasetManifest write_corpus(const Corpus& c, const std::string& out_dir) {
  namespace fs = std::filesystem;
  DatasetManifest m;
  m.seed = c.seed;
  m.base_dir = out_dir;
  std::map<std::pair<int, int>, std::string> shape_paths;  // (asset, variant) -> path
  int cond_counter = 0;
  for (const auto& t : c.triplets) {
    const std::string kind_dir = kind_name(t.kind);
    const std::string asset_dir = kind_dir + "/asset-" + std::to_string(t.asset_id);
    fs::create_directories(out_dir + "/" + asset_dir);
    fs::create_directories(out_dir + "/renders");
    auto shape_file = [&](const synth::VoxelShape& s, int variant) {
      const auto key = std::make_pair(t.asset_id, variant);
      auto it = shape_paths.find(key);
      if (it != shape_paths.end()) return it->second;
      const std::string path = asset_dir + "/variant-" + std::to_string(variant) + ".vxs";
      synth::save_vxs(s, m.resolve(path));
      shape_paths[key] = path;
      return path;
    };
    ManifestEntry e;
    e.kind = t.kind;
    e.asset_id = t.asset_id;
    e.src_variant = t.src_variant;
    e.tgt_variant = t.tgt_variant;
    e.azimuth = t.condition.view.azimuth;
    e.elevation = t.condition.view.elevation;
    e.src_path = shape_file(t.source, t.src_variant);
    e.tgt_path = shape_file(t.target, t.tgt_variant);
    e.cond_prefix = "renders/cond-" + std::to_string(cond_counter++);
    synth::save_view_render(t.condition, m.resolve(e.cond_prefix));
    m.entries.push_back(std::move(e));
  }
  m.save(out_dir + "/manifest.jsonl");
  return m;
}

}  // namespace shapeup::data
