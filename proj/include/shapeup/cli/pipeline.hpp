#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "shapeup/cli/config.hpp"
#include "shapeup/codec/train.hpp"
#include "shapeup/data/dataset.hpp"
#include "shapeup/edit/train.hpp"
#include "shapeup/eval/report.hpp"
#include "shapeup/tex/train.hpp"

namespace shapeup::cli {

inline codec::CodecConfig codec_config(const RunConfig& c) {
  codec::CodecConfig cc;
  cc.tokens = c.codec.tokens;
  cc.token_dim = c.codec.token_dim;
  cc.hidden = c.codec.hidden;
  cc.beta = c.codec.beta;
  cc.tau = c.codec.tau;
  cc.seed = sub_seed(c.seed, "codec");
  return cc;
}

inline edit::EditConfig edit_config(const RunConfig& c) {
  edit::EditConfig ec;
  ec.width = c.edit.width;
  ec.heads = c.edit.heads;
  ec.n_double = c.edit.n_double;
  ec.n_single = c.edit.n_single;
  ec.token_dim = c.codec.token_dim;
  ec.lora_rank = c.edit.lora_rank;
  ec.lora_alpha = c.edit.lora_alpha;
  ec.image_size = c.data.image_size;
  ec.objective = c.edit.objective;
  ec.seed = sub_seed(c.seed, "edit");
  return ec;
}

inline tex::TexConfig tex_config(const RunConfig& c) {
  tex::TexConfig tc;
  tc.view_size = c.tex.view_size;
  tc.base_ch = c.tex.base_ch;
  tc.patch = c.tex.patch;
  tc.concat_mv = c.tex.concat_mv;
  tc.p_drop_image = c.tex.p_drop_image;
  tc.p_drop_mv = c.tex.p_drop_mv;
  tc.seed = sub_seed(c.seed, "tex");
  return tc;
}

inline data::Corpus build_train_corpus(const RunConfig& c) {
  data::CorpusConfig dc;
  dc.n_parts_assets = c.data.n_parts_assets;
  dc.n_dfm_assets = c.data.n_dfm_assets;
  dc.resolution = c.data.resolution;
  dc.image_size = c.data.image_size;
  dc.n_random_views = c.data.n_random_views;
  dc.anim_frames = c.data.anim_frames;
  return data::build_corpus(sub_seed(c.seed, "data"), dc);
}

inline codec::Codec<float> train_codec_stage(const RunConfig& c,
                                             const data::Corpus& corpus) {
  codec::Codec<float> codec(codec_config(c));
  codec::CodecTrainConfig tc;
  tc.steps = c.codec.steps;
  tc.lr = c.codec.lr;
  tc.n_queries = c.codec.n_queries;
  tc.subset_prob = c.codec.subset_prob;
  tc.seed = sub_seed(c.seed, "codec-train");
  codec::train_codec(codec, corpus.shapes, tc);
  return codec;
}

inline edit::EditFlow<float> train_edit_stage(const RunConfig& c,
                                              const codec::Codec<float>& codec,
                                              const data::Corpus& corpus) {
  edit::EditFlow<float> flow(edit_config(c), codec.anchors);
  edit::EditTrainConfig tc;
  tc.steps = c.edit.steps;
  tc.lr = c.edit.lr;
  tc.latent_tokens = c.edit.latent_tokens;
  tc.p_drop_image = c.edit.p_drop_image;
  tc.p_drop_shape = c.edit.p_drop_shape;
  tc.seed = sub_seed(c.seed, "edit-train");
  edit::train_edit(flow, codec, corpus.triplets, tc);
  return flow;
}

inline tex::TexModel<float> train_tex_stage(const RunConfig& c,
                                            const data::Corpus& corpus,
                                            int max_items = 8) {
  tex::TexModel<float> model(tex_config(c));
  std::vector<tex::TexItem> items;
  for (const auto& t : corpus.triplets) {
    if (int(items.size()) >= max_items) break;
    items.push_back(tex::make_tex_item(t, c.tex.view_size));
  }
  tex::TexTrainConfig tc;
  tc.steps = c.tex.steps;
  tc.lr = c.tex.lr;
  tc.adapters_only = c.tex.adapters_only;
  tc.seed = sub_seed(c.seed, "tex-train");
  tex::tex_train(model, items, tc);
  return model;
}

inline edit::GuidanceConfig guidance_config(const RunConfig& c) {
  edit::GuidanceConfig g;
  g.s_image = c.edit.s_image;
  g.s_shape = c.edit.s_shape;
  g.steps = c.edit.sample_steps;
  return g;
}

// the trained-model predictor fed to the eval runner
inline eval::Predictor edit_predictor(const edit::EditFlow<float>& flow,
                                      const codec::Codec<float>& codec,
                                      const edit::GuidanceConfig& g) {
  return [&flow, &codec, g](const eval::BenchCase& bc, std::uint64_t seed) {
    return edit::sample_edit(flow, codec, bc.source, bc.condition, g, seed, false);
  };
}

inline eval::MetricReport eval_stage(const RunConfig& c,
                                     const codec::Codec<float>& codec,
                                     const edit::EditFlow<float>& flow,
                                     const std::string& model_id = "ours") {
  const auto bench = eval::build_bench(c.eval.bench_seed, c.eval.n_assets,
                                       c.eval.n_conds, c.data.resolution,
                                       c.data.image_size);
  return eval::run_eval(edit_predictor(flow, codec, guidance_config(c)), bench,
                        codec, sub_seed(c.seed, "eval"), model_id);
}

// FNV-1a over file bytes, for artifact manifests
inline std::uint64_t file_checksum(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checksum: cannot read " + path);
  std::uint64_t h = 14695981039346656037ULL;
  char buf[4096];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= std::uint64_t((unsigned char)buf[i]);
      h *= 1099511628211ULL;
    }
    if (!f) break;
  }
  return h;
}

inline void write_text(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << body;
}

// end-to-end reproduction: data -> codec -> edit -> tex -> eval, every
// artifact plus the resolved config and any CLI overrides recorded in a
// manifest; returns the manifest path
inline std::string run_repro(const RunConfig& c, const std::string& out_dir,
                             const std::vector<std::string>& overrides = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  save_config(c, out_dir + "/config.json");

  const auto corpus = build_train_corpus(c);
  data::write_corpus(corpus, out_dir + "/data");

  const auto codec = train_codec_stage(c, corpus);
  codec.params.to_container().save(out_dir + "/codec.tns");

  const auto flow = train_edit_stage(c, codec, corpus);
  flow.params.to_container().save(out_dir + "/edit.tns");

  const auto texm = train_tex_stage(c, corpus);
  texm.params.to_container().save(out_dir + "/tex.tns");

  const auto report = eval_stage(c, codec, flow);
  write_text(out_dir + "/report.csv", report.to_csv());
  write_text(out_dir + "/report.txt", report.to_table());

  nlohmann::json artifacts = nlohmann::json::array();
  for (const char* name : {"config.json", "codec.tns", "edit.tns", "tex.tns",
                           "report.csv", "report.txt", "data/manifest.jsonl"}) {
    const std::string p = out_dir + "/" + name;
    artifacts.push_back({{"path", name}, {"checksum", file_checksum(p)}});
  }
  const auto agg = report.aggregate();
  nlohmann::json manifest = {
      {"version", c.version},
      {"seed", c.seed},
      {"overrides", overrides},
      {"config", to_json(c)},
      {"artifacts", artifacts},
      {"eval",
       {{"cases", agg.n},
        {"failures", report.failures},
        {"ssim", agg.ssim},
        {"iou_occl", agg.iou_occl}}}};
  write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
  return out_dir + "/manifest.json";
}

// ---- ablation suites -------------------------------------------------------

struct AblationRow {
  std::string name;
  eval::MetricReport::Aggregate agg;
  double tex_probe = 0.0;  // concat suite only
};

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  auto num = [](double v) {
    char b[40];
    std::snprintf(b, sizeof(b), "%.6f", v);
    return std::string(b);
  };
  std::string s = "name,ssim,perceptual,embed_cond,dir_sim,embed_occl,iou_occl,tex_probe\n";
  for (const auto& r : rows)
    s += r.name + "," + num(r.agg.ssim) + "," + num(r.agg.perceptual) + "," +
         num(r.agg.embed_cond) + "," + num(r.agg.dir) + "," + num(r.agg.embed_occl) +
         "," + num(r.agg.iou_occl) + "," + num(r.tex_probe) + "\n";
  return s;
}

// Suites: "motion" retrains without the articulation triplets; "latents"
// sweeps the sampling-time token budget K; "concat" compares the
// cross-attention MV adapter against the channel-concat variant on the
// texture probe loss; "cfg" sweeps the guidance scales.
inline std::vector<AblationRow> ablate_suite(const RunConfig& c,
                                             const std::string& suite) {
  std::vector<AblationRow> rows;
  const auto corpus = build_train_corpus(c);
  const auto bench = eval::build_bench(c.eval.bench_seed, c.eval.n_assets,
                                       c.eval.n_conds, c.data.resolution,
                                       c.data.image_size);
  const std::uint64_t eseed = sub_seed(c.seed, "eval");

  if (suite == "concat") {
    std::vector<tex::TexItem> items;
    for (const auto& t : corpus.triplets) {
      if (items.size() >= 6) break;
      items.push_back(tex::make_tex_item(t, c.tex.view_size));
    }
    for (bool concat : {false, true}) {
      RunConfig v = c;
      v.tex.concat_mv = concat;
      tex::TexModel<float> m(tex_config(v));
      tex::TexTrainConfig tc;
      tc.steps = v.tex.steps;
      tc.lr = v.tex.lr;
      tc.adapters_only = v.tex.adapters_only;
      tc.seed = sub_seed(v.seed, "tex-train");
      tex::tex_train(m, items, tc);
      AblationRow r;
      r.name = concat ? "Concat MV" : "ours";
      r.tex_probe = tex::tex_eval_loss(m, items, sub_seed(v.seed, "tex-probe"));
      rows.push_back(r);
    }
    return rows;
  }

  const auto codec = train_codec_stage(c, corpus);
  if (suite == "motion") {
    for (bool with_dfm : {true, false}) {
      data::Corpus sub = corpus;
      if (!with_dfm) {
        sub.triplets.clear();
        for (const auto& t : corpus.triplets)
          if (t.kind == data::TripletKind::Parts) sub.triplets.push_back(t);
      }
      const auto flow = train_edit_stage(c, codec, sub);
      AblationRow r;
      r.name = with_dfm ? "ours" : "w/o Motion";
      r.agg = eval::run_eval(edit_predictor(flow, codec, guidance_config(c)),
                             bench, codec, eseed, r.name)
                  .aggregate();
      rows.push_back(r);
    }
    return rows;
  }

  const auto flow = train_edit_stage(c, codec, corpus);
  if (suite == "latents") {
    for (int K : {c.codec.tokens / 16, c.codec.tokens / 4, c.codec.tokens}) {
      if (K < 1) continue;
      auto g = guidance_config(c);
      g.latent_tokens = K;
      AblationRow r;
      r.name = std::to_string(K) + " latents";
      r.agg = eval::run_eval(edit_predictor(flow, codec, g), bench, codec, eseed,
                             r.name)
                  .aggregate();
      rows.push_back(r);
    }
    return rows;
  }
  if (suite == "cfg") {
    for (auto [si, ss] : {std::pair{0.0, 0.0}, {1.0, 1.0}, {2.5, 3.5}, {3.5, 2.5}}) {
      auto g = guidance_config(c);
      g.s_image = si;
      g.s_shape = ss;
      AblationRow r;
      char b[64];
      std::snprintf(b, sizeof(b), "cfg %.1f/%.1f", si, ss);
      r.name = b;
      r.agg = eval::run_eval(edit_predictor(flow, codec, g), bench, codec, eseed,
                             r.name)
                  .aggregate();
      rows.push_back(r);
    }
    return rows;
  }
  throw std::runtime_error("ablate: unknown suite '" + suite + "'");
}

}  // namespace shapeup::cli
