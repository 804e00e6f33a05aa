#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icdepth/io.hpp"
#include "icdepth/metrics.hpp"
#include "icdepth/net.hpp"
#include "icdepth/scene.hpp"
#include "icdepth/slic.hpp"

namespace {

using namespace icdepth;

std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

NetConfig net_config_from(const RunConfig& rc) {
  NetConfig cfg;
  cfg.segment_count = rc.k;
  cfg.lr = rc.lr;
  cfg.steps = rc.steps;
  cfg.seed = rc.seed;
  cfg.slic_sigma = rc.sigma;
  cfg.slic_compactness = rc.compactness;
  cfg.slic_iterations = rc.iterations;
  if (rc.head == "sc") {
    cfg.head = HeadKind::kStandard;
  } else if (rc.head == "sc_mask") {
    cfg.head = HeadKind::kStandardWithMask;
  } else {
    cfg.head = HeadKind::kInstance;
  }
  return cfg;
}

int cmd_segment(const std::string& in_path, int k, double sigma,
                double compactness, int iterations,
                const std::string& out_path) {
  const RgbImage img = read_ppm(in_path);
  SlicParams params;
  params.k = k;
  params.sigma = sigma;
  params.compactness = compactness;
  params.iterations = iterations;
  const SegmentMap seg = slic(img, params);
  write_segment_map_pgm(out_path, seg);
  std::ostringstream sidecar;
  sidecar << "segments = " << seg.segment_count << "\n"
          << "k = " << k << "\n"
          << "sigma = " << sigma << "\n"
          << "compactness = " << compactness << "\n"
          << "iterations = " << iterations << "\n";
  write_text_file(out_path + ".txt", sidecar.str());
  std::cout << "segments: " << seg.segment_count << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  const RunConfig rc = read_run_config(config_path);
  std::filesystem::create_directories(out_dir);
  const Scene scene = gen_scene(rc.seed, rc.size, rc.shapes);
  const OverfitResult result = overfit(scene, net_config_from(rc));

  write_checkpoint(out_dir + "/checkpoint.bin", result.final_params);
  write_loss_csv(out_dir + "/loss.csv", result.curve);
  write_float_raster(out_dir + "/prediction.fr", result.prediction);
  double lo, hi;
  write_preview_pgm(out_dir + "/preview.pgm", result.prediction, lo, hi);
  std::ostringstream sidecar;
  sidecar << "min = " << format_g(lo) << "\nmax = " << format_g(hi) << "\n";
  write_text_file(out_dir + "/preview.pgm.txt", sidecar.str());
  write_metrics_csv(out_dir + "/metrics.csv", result.report);

  std::cout << "final loss: " << format_g(result.curve.back().total) << "\n";
  std::cout << render_metrics_table(result.report);
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             const std::string& edges_path, const std::string& planes_path,
             const std::string& config_path, const std::string& out_path) {
  RunConfig rc;
  if (!config_path.empty()) rc = read_run_config(config_path);
  const Tensor pred = read_float_raster(pred_path);
  const Tensor gt = read_float_raster(gt_path);
  if (!pred.same_shape(gt)) {
    throw std::invalid_argument("eval: prediction and GT shapes differ");
  }

  MetricsReport report = standard_metrics(pred, gt);
  const DdeResult dd = dde(pred, gt, rc.dde_plane);
  report.dde0 = dd.eps0;
  report.dde_minus = dd.eps_minus;
  report.dde_plus = dd.eps_plus;

  if (!edges_path.empty()) {
    const EdgeMap gt_edges = read_edge_map_pgm(edges_path);
    if (gt_edges.height != pred.height || gt_edges.width != pred.width) {
      throw std::invalid_argument("eval: edge map shape mismatch");
    }
    const EdgeMap pred_edges =
        canny(pred, rc.canny_low, rc.canny_high, rc.sigma);
    const ChamferResult dbe = truncated_chamfer(pred_edges, gt_edges);
    report.dbe_acc = dbe.acc;
    report.dbe_comp = dbe.comp;
  }
  if (!planes_path.empty()) {
    const std::vector<PixelMask> planes = read_plane_masks_pgm(planes_path);
    CameraIntrinsics K;
    K.fx = rc.fx;
    K.fy = rc.fy;
    K.cx = rc.cx >= 0.0 ? rc.cx : pred.width / 2.0;
    K.cy = rc.cy >= 0.0 ? rc.cy : pred.height / 2.0;
    const PlanarityResult pe = planarity_error(pred, gt, planes, K);
    report.pe_plan = pe.plan_cm;
    report.pe_orie = pe.orie_deg;
  }

  write_metrics_csv(out_path, report);
  std::cout << render_metrics_table(report);
  return 0;
}

int cmd_compare(int n_seeds, int size, int steps, int k, double lr,
                const std::string& head_lr_note, bool with_mask,
                const std::string& out_path) {
  (void)head_lr_note;
  if (n_seeds < 5) {
    throw std::invalid_argument("compare: need at least 5 seeds");
  }
  std::vector<std::uint64_t> seeds(n_seeds);
  std::iota(seeds.begin(), seeds.end(), 1);
  NetConfig cfg;
  cfg.steps = steps;
  cfg.segment_count = k;
  cfg.lr = lr;
  const CompareResult result = compare_heads(seeds, cfg, with_mask, size);

  std::ostringstream csv;
  csv << "seed,sc_absrel,sc_rmse,sc_dbe_acc,sc_dbe_comp,"
      << "ic_absrel,ic_rmse,ic_dbe_acc,ic_dbe_comp";
  if (with_mask) csv << ",scm_absrel,scm_rmse,scm_dbe_acc,scm_dbe_comp";
  csv << "\n";
  auto put_stats = [&](const HeadStats& s) {
    csv << "," << format_g(s.absrel) << "," << format_g(s.rmse) << ",";
    if (s.dbe_acc) csv << format_g(*s.dbe_acc);
    csv << ",";
    if (s.dbe_comp) csv << format_g(*s.dbe_comp);
  };
  for (const CompareRow& row : result.rows) {
    csv << row.seed;
    put_stats(row.sc);
    put_stats(row.ic);
    if (with_mask) put_stats(*row.sc_mask);
    csv << "\n";
  }
  csv << "median";
  put_stats(result.sc_median);
  put_stats(result.ic_median);
  if (with_mask) put_stats(*result.sc_mask_median);
  csv << "\n";
  write_text_file(out_path, csv.str());

  std::cout << "IC DBE_acc median "
            << (result.ic_median.dbe_acc ? format_g(*result.ic_median.dbe_acc)
                                         : "—")
            << " vs SC "
            << (result.sc_median.dbe_acc ? format_g(*result.sc_median.dbe_acc)
                                         : "—")
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary-aware depth toolkit: instance convolutions, SLIC "
               "super-pixels, depth losses and occlusion-boundary metrics"};
  app.require_subcommand(1);

  // segment
  auto* segment = app.add_subcommand("segment", "SLIC super-pixel segmentation");
  std::string seg_in, seg_out;
  int seg_k = 64, seg_iters = 10;
  double seg_sigma = 1.0, seg_compact = 10.0;
  segment->add_option("--in", seg_in, "input PPM (P6)")->required();
  segment->add_option("--out", seg_out, "output segment map PGM")->required();
  segment->add_option("--k", seg_k, "requested segment count");
  segment->add_option("--sigma", seg_sigma, "pre-smoothing Gaussian std");
  segment->add_option("--compactness", seg_compact, "SLIC compactness");
  segment->add_option("--iterations", seg_iters, "SLIC iterations");

  // train
  auto* train = app.add_subcommand("train", "overfit a toy net on a synthetic scene");
  std::string train_config, train_out;
  train->add_option("--config", train_config, "run configuration file")->required();
  train->add_option("--out", train_out, "output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "depth metrics for a prediction/GT pair");
  std::string eval_pred, eval_gt, eval_edges, eval_planes, eval_config, eval_out;
  eval->add_option("--pred", eval_pred, "predicted depth FloatRaster")->required();
  eval->add_option("--gt", eval_gt, "ground-truth depth FloatRaster")->required();
  eval->add_option("--gt-edges", eval_edges, "GT occlusion boundary PGM");
  eval->add_option("--planes", eval_planes, "plane mask PGM (ids >= 1)");
  eval->add_option("--config", eval_config, "config for thresholds/intrinsics");
  eval->add_option("--out", eval_out, "output CSV")->required();

  // compare
  auto* compare = app.add_subcommand("compare", "SC vs IC overfitting comparison");
  int cmp_seeds = 5, cmp_size = 64, cmp_steps = 3000, cmp_k = 64;
  double cmp_lr = NetConfig().lr;
  bool cmp_mask = false;
  std::string cmp_out;
  compare->add_option("--seeds", cmp_seeds, "number of seeds (>= 5)");
  compare->add_option("--size", cmp_size, "scene size");
  compare->add_option("--steps", cmp_steps, "training steps per run");
  compare->add_option("--k", cmp_k, "SLIC segment count");
  compare->add_option("--lr", cmp_lr, "learning rate");
  compare->add_flag("--with-mask", cmp_mask, "include the SC+mask ablation");
  compare->add_option("--out", cmp_out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*segment) {
      return cmd_segment(seg_in, seg_k, seg_sigma, seg_compact, seg_iters,
                         seg_out);
    }
    if (*train) return cmd_train(train_config, train_out);
    if (*eval) {
      return cmd_eval(eval_pred, eval_gt, eval_edges, eval_planes, eval_config,
                      eval_out);
    }
    if (*compare) {
      return cmd_compare(cmp_seeds, cmp_size, cmp_steps, cmp_k, cmp_lr, "",
                         cmp_mask, cmp_out);
    }
  } catch (const icdepth::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const icdepth::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
