#pragma once

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "shapeup/eval/bench.hpp"
#include "shapeup/eval/metrics.hpp"

namespace shapeup::eval {

struct CaseMetrics {
  int index = 0;
  Category category = Category::Parts;
  bool failed = false;
  std::string error;
  double ssim = 0.0;
  double perceptual = 0.0;  // distance, lower is better
  double embed_cond = 0.0;
  double dir = 0.0;
  bool dir_degenerate = false;
  double embed_occl = 0.0;
  double iou_occl = 0.0;
};

struct MetricReport {
  std::string model_id;
  std::uint64_t seed = 0;
  std::vector<CaseMetrics> cases;
  int failures = 0;

  struct Aggregate {
    double ssim = 0.0, perceptual = 0.0, embed_cond = 0.0, dir = 0.0;
    double embed_occl = 0.0, iou_occl = 0.0;
    int n = 0;
  };

  // mean over non-failed cases; degenerate dir cases contribute their 0
  Aggregate aggregate() const {
    Aggregate a;
    for (const auto& c : cases) {
      if (c.failed) continue;
      a.ssim += c.ssim;
      a.perceptual += c.perceptual;
      a.embed_cond += c.embed_cond;
      a.dir += c.dir;
      a.embed_occl += c.embed_occl;
      a.iou_occl += c.iou_occl;
      ++a.n;
    }
    if (a.n > 0) {
      const double inv = 1.0 / double(a.n);
      a.ssim *= inv;
      a.perceptual *= inv;
      a.embed_cond *= inv;
      a.dir *= inv;
      a.embed_occl *= inv;
      a.iou_occl *= inv;
    }
    return a;
  }

  std::string to_csv() const {
    auto num = [](double v) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.6f", v);
      return std::string(buf);
    };
    std::string s =
        "case,category,failed,ssim,perceptual,embed_cond,dir_sim,"
        "dir_degenerate,embed_occl,iou_occl\n";
    for (const auto& c : cases) {
      s += std::to_string(c.index);
      s += ",";
      s += category_name(c.category);
      s += c.failed ? ",1," : ",0,";
      s += num(c.ssim) + "," + num(c.perceptual) + "," + num(c.embed_cond) + "," +
           num(c.dir) + ",";
      s += c.dir_degenerate ? "1," : "0,";
      s += num(c.embed_occl) + "," + num(c.iou_occl) + "\n";
    }
    const auto a = aggregate();
    s += "mean,all,," + num(a.ssim) + "," + num(a.perceptual) + "," +
         num(a.embed_cond) + "," + num(a.dir) + ",," + num(a.embed_occl) + "," +
         num(a.iou_occl) + "\n";
    return s;
  }

  std::string to_table() const {
    const auto a = aggregate();
    char buf[512];
    std::string s;
    s += "model: " + model_id + " (seed " + std::to_string(seed) + ", " +
         std::to_string(a.n) + " cases, " + std::to_string(failures) +
         " failures)\n";
    s += "                      | Condition Alignment                     | Occluded Region Fid.\n";
    s += "                      | SSIM     PercDist  EmbedSim  DirSim    | EmbedSim  IoU\n";
    std::snprintf(buf, sizeof(buf),
                  "%-21s | %-8.4f %-9.4f %-9.4f %-9.4f | %-9.4f %-8.4f\n",
                  model_id.c_str(), a.ssim, a.perceptual, a.embed_cond, a.dir,
                  a.embed_occl, a.iou_occl);
    s += buf;
    return s;
  }
};

// A predictor maps (case, per-case seed) to a predicted shape; the runner is
// model-agnostic so oracle/straw/trained runs share one code path.
using Predictor =
    std::function<synth::VoxelShape(const BenchCase&, std::uint64_t)>;

namespace detail {

// channel stack compared between the predicted and condition renders:
// depth, silhouette, and rgb when both renders carry color
inline std::vector<std::pair<const Image*, const Image*>> channel_pairs(
    const synth::ViewRender& a, const synth::ViewRender& b) {
  std::vector<std::pair<const Image*, const Image*>> out;
  out.push_back({&a.depth, &b.depth});
  out.push_back({&a.silhouette, &b.silhouette});
  if (a.color && b.color)
    for (int ch = 0; ch < 3; ++ch)
      out.push_back({&(*a.color)[std::size_t(ch)], &(*b.color)[std::size_t(ch)]});
  return out;
}

}  // namespace detail

template <class S>
MetricReport run_eval(const Predictor& predictor, const std::vector<BenchCase>& bench,
                      const codec::Codec<S>& c, std::uint64_t seed,
                      const std::string& model_id = "model") {
  MetricReport rep;
  rep.model_id = model_id;
  rep.seed = seed;
  for (std::size_t i = 0; i < bench.size(); ++i) {
    const auto& bc = bench[i];
    CaseMetrics cm;
    cm.index = int(i);
    cm.category = bc.category;
    try {
      const synth::VoxelShape pred =
          predictor(bc, sub_seed(seed, "case-" + std::to_string(i)));
      const auto pred_render = synth::render(pred, bc.cond_view);
      const auto src_render = synth::render(bc.source, bc.cond_view);

      double s_acc = 0.0, p_acc = 0.0;
      const auto pairs = detail::channel_pairs(pred_render, bc.condition);
      for (const auto& [pa, pb] : pairs) {
        s_acc += ssim(*pa, *pb);
        p_acc += perceptual_dist(*pa, *pb);
      }
      cm.ssim = s_acc / double(pairs.size());
      cm.perceptual = p_acc / double(pairs.size());

      const auto ep = embed_render(c, pred_render);
      const auto es = embed_render(c, src_render);
      const auto ec = embed_render(c, bc.condition);
      cm.embed_cond = cosine(ep, ec);
      const DirSim d = dir_sim(es, ep, ec);
      cm.dir = d.value;
      cm.dir_degenerate = d.degenerate;

      const auto occl = occluded_fidelity(c, pred, bc.source, bc.cond_view, bc.edit_mask);
      cm.embed_occl = occl.embed;
      cm.iou_occl = occl.iou;
    } catch (const std::exception& e) {
      cm.failed = true;
      cm.error = e.what();
      ++rep.failures;
    }
    rep.cases.push_back(std::move(cm));
  }
  return rep;
}

}  // namespace shapeup::eval
