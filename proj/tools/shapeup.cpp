#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

#include "shapeup/cli/pipeline.hpp"

using namespace shapeup;

namespace {

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  double si = 0.0, ss = 0.0, smv = 0.0;
};

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--config", a.config_path, "JSON run configuration");
  sub->add_option("--seed", a.seed, "global seed (overrides config)");
  sub->add_option("--si", a.si, "image guidance scale (overrides config)");
  sub->add_option("--ss", a.ss, "shape guidance scale (overrides config)");
  sub->add_option("--smv", a.smv, "multiview guidance scale (overrides config)");
}

// config file first, then explicit flags on top; every applied flag is
// recorded so run manifests show exactly what won
cli::RunConfig resolve(const CLI::App* sub, const CommonArgs& a,
                       std::vector<std::string>* overrides) {
  cli::RunConfig cfg;
  if (!a.config_path.empty()) cfg = cli::load_config(a.config_path);
  auto note = [&](const std::string& s) {
    if (overrides) overrides->push_back(s);
  };
  if (sub->count("--seed")) {
    cfg.seed = a.seed;
    note("--seed=" + std::to_string(a.seed));
  }
  if (sub->count("--si")) {
    cfg.edit.s_image = a.si;
    note("--si=" + std::to_string(a.si));
  }
  if (sub->count("--ss")) {
    cfg.edit.s_shape = a.ss;
    note("--ss=" + std::to_string(a.ss));
  }
  if (sub->count("--smv")) {
    cfg.tex.s_mv = a.smv;
    note("--smv=" + std::to_string(a.smv));
  }
  cfg.validate();
  return cfg;
}

codec::Codec<float> load_or_train_codec(const cli::RunConfig& cfg,
                                        const std::string& codec_path,
                                        const data::Corpus& corpus) {
  codec::Codec<float> c(cli::codec_config(cfg));
  if (!codec_path.empty())
    c.params.from_container(TensorContainer::load(codec_path));
  else
    c = cli::train_codec_stage(cfg, corpus);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"procedural voxel editing: data, training, sampling, eval"};
  app.require_subcommand(1);

  std::string out_dir, report_path, suite = "cfg", mode = "ours";
  std::string source_path, cond_prefix, codec_path, model_path;
  CommonArgs args;

  auto* data_cmd = app.add_subcommand("data", "dataset generation");
  auto* data_build = data_cmd->add_subcommand("build", "build the triplet corpus");
  add_common(data_build, args);
  data_build->add_option("--out", out_dir, "output directory");

  auto* codec_cmd = app.add_subcommand("codec", "shape tokenizer");
  auto* codec_train = codec_cmd->add_subcommand("train", "train the codec");
  add_common(codec_train, args);
  codec_train->add_option("--out", out_dir, "output directory")->required();

  auto* edit_cmd = app.add_subcommand("edit", "geometry editing stage");
  auto* edit_train = edit_cmd->add_subcommand("train", "train the edit model");
  add_common(edit_train, args);
  edit_train->add_option("--out", out_dir, "output directory")->required();
  edit_train->add_option("--codec", codec_path, "pretrained codec checkpoint");
  auto* edit_sample = edit_cmd->add_subcommand("sample", "run one guided edit");
  add_common(edit_sample, args);
  edit_sample->add_option("--source", source_path, "source shape (.vxs)")->required();
  edit_sample->add_option("--condition", cond_prefix, "condition render prefix")->required();
  edit_sample->add_option("--codec", codec_path, "codec checkpoint")->required();
  edit_sample->add_option("--model", model_path, "edit checkpoint")->required();
  edit_sample->add_option("--out", out_dir, "output shape path")->required();

  auto* tex_cmd = app.add_subcommand("tex", "texture stage");
  auto* tex_train = tex_cmd->add_subcommand("train", "train the texture adapter");
  add_common(tex_train, args);
  tex_train->add_option("--out", out_dir, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "benchmark evaluation");
  auto* eval_run = eval_cmd->add_subcommand("run", "run the benchmark");
  add_common(eval_run, args);
  eval_run->add_option("--report", report_path, "report CSV path")->required();
  eval_run->add_option("--mode", mode, "ours|oracle|straw");
  eval_run->add_option("--codec", codec_path, "codec checkpoint");
  eval_run->add_option("--model", model_path, "edit checkpoint");
  auto* eval_ablate = eval_cmd->add_subcommand("ablate", "run an ablation suite");
  add_common(eval_ablate, args);
  eval_ablate->add_option("--suite", suite, "motion|latents|concat|cfg")->required();
  eval_ablate->add_option("--report", report_path, "report CSV path")->required();

  auto* repro = app.add_subcommand("repro", "full deterministic reproduction");
  add_common(repro, args);
  repro->add_option("--out", out_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    std::vector<std::string> overrides;
    if (data_build->parsed()) {
      const auto cfg = resolve(data_build, args, &overrides);
      const std::string dir = out_dir.empty() ? cfg.resolved_data_dir() : out_dir;
      const auto corpus = cli::build_train_corpus(cfg);
      data::write_corpus(corpus, dir);
      std::printf("wrote %zu triplets to %s\n", corpus.triplets.size(), dir.c_str());
    } else if (codec_train->parsed()) {
      const auto cfg = resolve(codec_train, args, &overrides);
      const auto corpus = cli::build_train_corpus(cfg);
      const auto c = cli::train_codec_stage(cfg, corpus);
      std::filesystem::create_directories(out_dir);
      c.params.to_container().save(out_dir + "/codec.tns");
      std::printf("wrote %s/codec.tns\n", out_dir.c_str());
    } else if (edit_train->parsed()) {
      const auto cfg = resolve(edit_train, args, &overrides);
      const auto corpus = cli::build_train_corpus(cfg);
      const auto c = load_or_train_codec(cfg, codec_path, corpus);
      const auto flow = cli::train_edit_stage(cfg, c, corpus);
      std::filesystem::create_directories(out_dir);
      c.params.to_container().save(out_dir + "/codec.tns");
      flow.params.to_container().save(out_dir + "/edit.tns");
      std::printf("wrote %s/{codec,edit}.tns\n", out_dir.c_str());
    } else if (edit_sample->parsed()) {
      const auto cfg = resolve(edit_sample, args, &overrides);
      codec::Codec<float> c(cli::codec_config(cfg));
      c.params.from_container(TensorContainer::load(codec_path));
      edit::EditFlow<float> flow(cli::edit_config(cfg), c.anchors);
      flow.params.from_container(TensorContainer::load(model_path));
      const auto source = synth::load_vxs(source_path);
      const auto condition = synth::load_view_render(cond_prefix);
      const auto edited = edit::sample_edit(flow, c, source, condition,
                                            cli::guidance_config(cfg), cfg.seed);
      synth::save_vxs(edited, out_dir);
      std::printf("wrote %s\n", out_dir.c_str());
    } else if (tex_train->parsed()) {
      const auto cfg = resolve(tex_train, args, &overrides);
      const auto corpus = cli::build_train_corpus(cfg);
      const auto m = cli::train_tex_stage(cfg, corpus);
      std::filesystem::create_directories(out_dir);
      m.params.to_container().save(out_dir + "/tex.tns");
      std::printf("wrote %s/tex.tns\n", out_dir.c_str());
    } else if (eval_run->parsed()) {
      const auto cfg = resolve(eval_run, args, &overrides);
      const auto corpus = cli::build_train_corpus(cfg);
      const auto c = load_or_train_codec(cfg, codec_path, corpus);
      eval::MetricReport report;
      if (mode == "oracle" || mode == "straw") {
        const bool oracle = mode == "oracle";
        const auto bench = eval::build_bench(cfg.eval.bench_seed, cfg.eval.n_assets,
                                             cfg.eval.n_conds, cfg.data.resolution,
                                             cfg.data.image_size);
        const eval::Predictor pred = [oracle](const eval::BenchCase& bc,
                                              std::uint64_t) {
          return oracle ? bc.target : bc.source;
        };
        report = eval::run_eval(pred, bench, c, sub_seed(cfg.seed, "eval"), mode);
      } else if (mode == "ours") {
        edit::EditFlow<float> flow(cli::edit_config(cfg), c.anchors);
        if (!model_path.empty())
          flow.params.from_container(TensorContainer::load(model_path));
        else
          flow = cli::train_edit_stage(cfg, c, corpus);
        report = cli::eval_stage(cfg, c, flow);
      } else {
        throw std::runtime_error("eval run: unknown mode '" + mode + "'");
      }
      cli::write_text(report_path, report.to_csv());
      std::fputs(report.to_table().c_str(), stdout);
    } else if (eval_ablate->parsed()) {
      const auto cfg = resolve(eval_ablate, args, &overrides);
      const auto rows = cli::ablate_suite(cfg, suite);
      cli::write_text(report_path, cli::ablation_csv(rows));
      std::printf("wrote %s (%zu rows)\n", report_path.c_str(), rows.size());
    } else if (repro->parsed()) {
      const auto cfg = resolve(repro, args, &overrides);
      const auto manifest = cli::run_repro(cfg, out_dir, overrides);
      std::printf("wrote %s\n", manifest.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
