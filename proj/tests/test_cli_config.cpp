#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "shapeup/cli/pipeline.hpp"

using namespace shapeup;

namespace {

cli::RunConfig tiny_config(std::uint64_t seed) {
  cli::RunConfig c;
  c.seed = seed;
  c.data.resolution = 16;
  c.data.image_size = 16;
  c.data.n_parts_assets = 2;
  c.data.n_dfm_assets = 1;
  c.data.anim_frames = 6;
  c.codec.tokens = 32;
  c.codec.token_dim = 8;
  c.codec.hidden = 24;
  c.codec.steps = 300;
  c.codec.n_queries = 256;
  c.edit.width = 32;
  c.edit.heads = 2;
  c.edit.n_double = 1;
  c.edit.n_single = 1;
  c.edit.lora_rank = 4;
  c.edit.steps = 100;
  c.edit.latent_tokens = 8;
  c.edit.sample_steps = 4;
  c.tex.view_size = 16;
  c.tex.base_ch = 4;
  c.tex.steps = 30;
  c.tex.sample_steps = 2;
  c.eval.n_assets = 2;
  c.eval.n_conds = 5;
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config round trip") {
  cli::RunConfig c = tiny_config(17);
  c.edit.objective = "eps";
  c.tex.concat_mv = true;
  c.data_dir = "/tmp/somewhere";
  const auto j = cli::to_json(c);
  const cli::RunConfig back = cli::config_from_json(j);
  CHECK(back == c);

  const std::string path = "/tmp/shapeup_cfg_roundtrip.json";
  cli::save_config(c, path);
  CHECK(cli::load_config(path) == c);
  std::filesystem::remove(path);
}

TEST_CASE("unknown and invalid keys are rejected by name") {
  auto j = cli::to_json(cli::RunConfig{});
  j["edit"]["bogus"] = 1;
  CHECK_THROWS_WITH_AS(cli::config_from_json(j),
                       "config: unknown key 'edit.bogus'", std::runtime_error);

  auto j2 = cli::to_json(cli::RunConfig{});
  j2["mystery"] = true;
  CHECK_THROWS_WITH_AS(cli::config_from_json(j2), "config: unknown key 'mystery'",
                       std::runtime_error);

  auto j3 = cli::to_json(cli::RunConfig{});
  j3["edit"]["objective"] = "ddim";
  try {
    cli::config_from_json(j3);
    FAIL("expected a validation error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("edit.objective") != std::string::npos);
  }

  auto j4 = cli::to_json(cli::RunConfig{});
  j4["edit"]["p_drop_image"] = 1.5;
  try {
    cli::config_from_json(j4);
    FAIL("expected a validation error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("edit.p_drop_image") != std::string::npos);
  }

  auto j5 = cli::to_json(cli::RunConfig{});
  j5["codec"]["tokens"] = "many";
  try {
    cli::config_from_json(j5);
    FAIL("expected a type error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("codec.tokens") != std::string::npos);
  }
}

TEST_CASE("defaults carry the canonical constants") {
  const cli::RunConfig c;
  CHECK(c.edit.p_drop_image == 0.2);
  CHECK(c.edit.p_drop_shape == 0.1);
  CHECK(c.tex.p_drop_image == 0.2);
  CHECK(c.tex.p_drop_mv == 0.1);
  CHECK(c.edit.s_image == 2.5);
  CHECK(c.edit.s_shape == 3.5);
  CHECK(c.tex.s_image == 2.5);
  CHECK(c.tex.s_mv == 3.5);
  CHECK(c.data.dfm_weight == data::WeightedSampler::kDfmWeight);
  CHECK(c.edit.latent_tokens * 4 == c.codec.tokens);  // K = M/4
  CHECK(c.codec.tokens == 256);
  CHECK(c.codec.token_dim == 16);
}

TEST_CASE("data dir resolution order") {
  cli::RunConfig c;
  unsetenv("SHAPEUP_DATA_DIR");
  CHECK(c.resolved_data_dir() == ".");
  setenv("SHAPEUP_DATA_DIR", "/tmp/env-data", 1);
  CHECK(c.resolved_data_dir() == "/tmp/env-data");
  c.data_dir = "/tmp/explicit";
  CHECK(c.resolved_data_dir() == "/tmp/explicit");  // explicit beats env
  unsetenv("SHAPEUP_DATA_DIR");
}

TEST_CASE("repro pipeline is deterministic and manifests the run") {
  const auto cfg = tiny_config(4);
  const std::string d1 = "/tmp/shapeup_cli_run1", d2 = "/tmp/shapeup_cli_run2";
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);

  const auto m1 = cli::run_repro(cfg, d1, {"--seed=4"});
  const auto m2 = cli::run_repro(cfg, d2, {"--seed=4"});

  // full artifact tree is byte-identical, so in particular the final CSV is
  CHECK(read_file(d1 + "/report.csv") == read_file(d2 + "/report.csv"));
  CHECK(read_file(m1) == read_file(m2));
  CHECK(cli::file_checksum(d1 + "/codec.tns") == cli::file_checksum(d2 + "/codec.tns"));
  CHECK(cli::file_checksum(d1 + "/data/manifest.jsonl") ==
        cli::file_checksum(d2 + "/data/manifest.jsonl"));

  // the run directory records the exact resolved config and the overrides
  const auto manifest = nlohmann::json::parse(read_file(m1));
  CHECK(cli::config_from_json(manifest.at("config")) == cfg);
  CHECK(manifest.at("overrides").at(0).get<std::string>() == "--seed=4");
  CHECK(manifest.at("eval").at("cases").get<int>() == cfg.eval.n_conds);
  CHECK(cli::load_config(d1 + "/config.json") == cfg);
  for (const auto& a : manifest.at("artifacts"))
    CHECK(std::filesystem::exists(d1 + "/" + a.at("path").get<std::string>()));

  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("ablation suites emit the named rows") {
  auto cfg = tiny_config(6);
  cfg.eval.n_conds = 4;

  const auto latents = cli::ablate_suite(cfg, "latents");
  REQUIRE(latents.size() == 3);
  CHECK(latents[0].name == "2 latents");
  CHECK(latents[1].name == "8 latents");
  CHECK(latents[2].name == "32 latents");

  const auto concat = cli::ablate_suite(cfg, "concat");
  REQUIRE(concat.size() == 2);
  CHECK(concat[0].name == "ours");
  CHECK(concat[1].name == "Concat MV");
  CHECK(concat[0].tex_probe > 0.0);

  const auto csv = cli::ablation_csv(latents);
  CHECK(csv.rfind("name,ssim,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

  CHECK_THROWS_AS(cli::ablate_suite(cfg, "nope"), std::runtime_error);
}
