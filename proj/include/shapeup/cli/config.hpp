#pragma once

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

namespace shapeup::cli {

// Resolved experiment configuration. Defaults are the canonical constants:
// condition dropout 0.2/0.1, guidance 2.5/3.5 for both stages, 3x DFM
// sampling weight, K = M/4 latent subsampling.
struct RunConfig {
  std::string version = "1";
  std::uint64_t seed = 0;
  std::string data_dir;  // empty: $SHAPEUP_DATA_DIR, else "."

  struct DataCfg {
    int resolution = 32;
    int image_size = 32;
    int n_parts_assets = 24;
    int n_dfm_assets = 6;
    int n_random_views = 8;
    int anim_frames = 10;
    double dfm_weight = 3.0;
  } data;

  struct CodecCfg {
    int tokens = 256;
    int token_dim = 16;
    int hidden = 48;
    double beta = 1e-3;
    double tau = 0.02;
    long steps = 4000;
    double lr = 2e-3;
    int n_queries = 768;
    double subset_prob = 0.5;
  } codec;

  struct EditCfg {
    int width = 128;
    int heads = 4;
    int n_double = 4;
    int n_single = 4;
    int lora_rank = 8;
    double lora_alpha = 16.0;
    std::string objective = "flow";
    long steps = 2000;
    double lr = 1e-3;
    int latent_tokens = 64;  // K = M/4
    double p_drop_image = 0.2;
    double p_drop_shape = 0.1;
    double s_image = 2.5;
    double s_shape = 3.5;
    int sample_steps = 16;
  } edit;

  struct TexCfg {
    int view_size = 64;
    int base_ch = 16;
    int patch = 4;
    bool concat_mv = false;
    bool adapters_only = true;
    long steps = 1000;
    double lr = 1e-3;
    double p_drop_image = 0.2;
    double p_drop_mv = 0.1;
    double s_image = 2.5;
    double s_mv = 3.5;
    int sample_steps = 8;
  } tex;

  struct EvalCfg {
    int n_assets = 24;
    int n_conds = 100;
    std::uint64_t bench_seed = 1;
  } eval;

  std::string resolved_data_dir() const {
    if (!data_dir.empty()) return data_dir;
    if (const char* env = std::getenv("SHAPEUP_DATA_DIR")) return env;
    return ".";
  }

  void validate() const {
    auto in01 = [](double v, const char* key) {
      if (v < 0.0 || v > 1.0)
        throw std::runtime_error(std::string("config: invalid value for key '") +
                                 key + "' (expected [0,1])");
    };
    auto positive = [](double v, const char* key) {
      if (v <= 0.0)
        throw std::runtime_error(std::string("config: invalid value for key '") +
                                 key + "' (expected > 0)");
    };
    if (version != "1")
      throw std::runtime_error("config: invalid value for key 'version'");
    positive(double(data.resolution), "data.resolution");
    positive(double(data.image_size), "data.image_size");
    positive(data.dfm_weight, "data.dfm_weight");
    positive(double(codec.tokens), "codec.tokens");
    positive(double(codec.token_dim), "codec.token_dim");
    in01(codec.subset_prob, "codec.subset_prob");
    if (edit.objective != "flow" && edit.objective != "eps")
      throw std::runtime_error("config: invalid value for key 'edit.objective'");
    positive(double(edit.latent_tokens), "edit.latent_tokens");
    in01(edit.p_drop_image, "edit.p_drop_image");
    in01(edit.p_drop_shape, "edit.p_drop_shape");
    in01(tex.p_drop_image, "tex.p_drop_image");
    in01(tex.p_drop_mv, "tex.p_drop_mv");
    positive(double(eval.n_conds), "eval.n_conds");
  }
};

namespace detail {

// strict object reader: every key must be consumed, leftovers are named
class StrictObj {
 public:
  StrictObj(const nlohmann::json& j, std::string prefix)
      : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object())
      throw std::runtime_error("config: expected an object at '" +
                               (prefix_.empty() ? std::string("<root>") : prefix_) + "'");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw std::runtime_error("config: invalid value for key '" + prefix_ + key + "'");
    }
  }

  const nlohmann::json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k))
        throw std::runtime_error("config: unknown key '" + prefix_ + k + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  return nlohmann::json{
      {"version", c.version},
      {"seed", c.seed},
      {"data_dir", c.data_dir},
      {"data",
       {{"resolution", c.data.resolution},
        {"image_size", c.data.image_size},
        {"n_parts_assets", c.data.n_parts_assets},
        {"n_dfm_assets", c.data.n_dfm_assets},
        {"n_random_views", c.data.n_random_views},
        {"anim_frames", c.data.anim_frames},
        {"dfm_weight", c.data.dfm_weight}}},
      {"codec",
       {{"tokens", c.codec.tokens},
        {"token_dim", c.codec.token_dim},
        {"hidden", c.codec.hidden},
        {"beta", c.codec.beta},
        {"tau", c.codec.tau},
        {"steps", c.codec.steps},
        {"lr", c.codec.lr},
        {"n_queries", c.codec.n_queries},
        {"subset_prob", c.codec.subset_prob}}},
      {"edit",
       {{"width", c.edit.width},
        {"heads", c.edit.heads},
        {"n_double", c.edit.n_double},
        {"n_single", c.edit.n_single},
        {"lora_rank", c.edit.lora_rank},
        {"lora_alpha", c.edit.lora_alpha},
        {"objective", c.edit.objective},
        {"steps", c.edit.steps},
        {"lr", c.edit.lr},
        {"latent_tokens", c.edit.latent_tokens},
        {"p_drop_image", c.edit.p_drop_image},
        {"p_drop_shape", c.edit.p_drop_shape},
        {"s_image", c.edit.s_image},
        {"s_shape", c.edit.s_shape},
        {"sample_steps", c.edit.sample_steps}}},
      {"tex",
       {{"view_size", c.tex.view_size},
        {"base_ch", c.tex.base_ch},
        {"patch", c.tex.patch},
        {"concat_mv", c.tex.concat_mv},
        {"adapters_only", c.tex.adapters_only},
        {"steps", c.tex.steps},
        {"lr", c.tex.lr},
        {"p_drop_image", c.tex.p_drop_image},
        {"p_drop_mv", c.tex.p_drop_mv},
        {"s_image", c.tex.s_image},
        {"s_mv", c.tex.s_mv},
        {"sample_steps", c.tex.sample_steps}}},
      {"eval",
       {{"n_assets", c.eval.n_assets},
        {"n_conds", c.eval.n_conds},
        {"bench_seed", c.eval.bench_seed}}}};
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  detail::StrictObj root(j, "");
  root.get("version", c.version);
  root.get("seed", c.seed);
  root.get("data_dir", c.data_dir);
  if (const auto* s = root.sub("data")) {
    detail::StrictObj o(*s, "data.");
    o.get("resolution", c.data.resolution);
    o.get("image_size", c.data.image_size);
    o.get("n_parts_assets", c.data.n_parts_assets);
    o.get("n_dfm_assets", c.data.n_dfm_assets);
    o.get("n_random_views", c.data.n_random_views);
    o.get("anim_frames", c.data.anim_frames);
    o.get("dfm_weight", c.data.dfm_weight);
    o.finish();
  }
  if (const auto* s = root.sub("codec")) {
    detail::StrictObj o(*s, "codec.");
    o.get("tokens", c.codec.tokens);
    o.get("token_dim", c.codec.token_dim);
    o.get("hidden", c.codec.hidden);
    o.get("beta", c.codec.beta);
    o.get("tau", c.codec.tau);
    o.get("steps", c.codec.steps);
    o.get("lr", c.codec.lr);
    o.get("n_queries", c.codec.n_queries);
    o.get("subset_prob", c.codec.subset_prob);
    o.finish();
  }
  if (const auto* s = root.sub("edit")) {
    detail::StrictObj o(*s, "edit.");
    o.get("width", c.edit.width);
    o.get("heads", c.edit.heads);
    o.get("n_double", c.edit.n_double);
    o.get("n_single", c.edit.n_single);
    o.get("lora_rank", c.edit.lora_rank);
    o.get("lora_alpha", c.edit.lora_alpha);
    o.get("objective", c.edit.objective);
    o.get("steps", c.edit.steps);
    o.get("lr", c.edit.lr);
    o.get("latent_tokens", c.edit.latent_tokens);
    o.get("p_drop_image", c.edit.p_drop_image);
    o.get("p_drop_shape", c.edit.p_drop_shape);
    o.get("s_image", c.edit.s_image);
    o.get("s_shape", c.edit.s_shape);
    o.get("sample_steps", c.edit.sample_steps);
    o.finish();
  }
  if (const auto* s = root.sub("tex")) {
    detail::StrictObj o(*s, "tex.");
    o.get("view_size", c.tex.view_size);
    o.get("base_ch", c.tex.base_ch);
    o.get("patch", c.tex.patch);
    o.get("concat_mv", c.tex.concat_mv);
    o.get("adapters_only", c.tex.adapters_only);
    o.get("steps", c.tex.steps);
    o.get("lr", c.tex.lr);
    o.get("p_drop_image", c.tex.p_drop_image);
    o.get("p_drop_mv", c.tex.p_drop_mv);
    o.get("s_image", c.tex.s_image);
    o.get("s_mv", c.tex.s_mv);
    o.get("sample_steps", c.tex.sample_steps);
    o.finish();
  }
  if (const auto* s = root.sub("eval")) {
    detail::StrictObj o(*s, "eval.");
    o.get("n_assets", c.eval.n_assets);
    o.get("n_conds", c.eval.n_conds);
    o.get("bench_seed", c.eval.bench_seed);
    o.finish();
  }
  root.finish();
  c.validate();
  return c;
}

inline bool operator==(const RunConfig& a, const RunConfig& b) {
  return to_json(a) == to_json(b);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot read " + path);
  nlohmann::json j;
  f >> j;
  return config_from_json(j);
}

inline void save_config(const RunConfig& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("config: cannot write " + path);
  f << to_json(c).dump(2) << "\n";
}

}  // namespace shapeup::cli
