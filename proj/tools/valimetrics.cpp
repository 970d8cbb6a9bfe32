// valimetrics command line: pair, modify, quality, perf, correlate, report, run, demo.
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "valimetrics/demo.hpp"
#include "valimetrics/error.hpp"
#include "valimetrics/manifest.hpp"
#include "valimetrics/modification.hpp"
#include "valimetrics/pipeline.hpp"
#include "valimetrics/tables.hpp"

namespace fs = std::filesystem;
using namespace valimetrics;

namespace {

std::string slurp(const fs::path& p) {
  const auto b = read_file(p);
  return {b.begin(), b.end()};
}

int finish(const StageNotes& notes) { return notes.partial ? 1 : 0; }

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("valimetrics");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("VALIMETRICS_LOG")) {
    spdlog::set_level(spdlog::level::from_str(lvl));
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Image-modification quality vs. model-agreement toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kToolVersion));

  std::string config_path;
  int jobs = 1;
  std::uint64_t seed = 0;
  auto* config_opt = app.add_option("--config", config_path, "run.toml");
  auto* jobs_opt = app.add_option("--jobs,-j", jobs, "worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "seed for demo sampling");

  // pair
  auto* pair = app.add_subcommand("pair", "pair reference and modified images by stem");
  fs::path pair_ref, pair_mod, pair_out;
  std::string pair_tag = "other:modified";
  double nominal = 0;
  pair->add_option("--ref", pair_ref)->required()->check(CLI::ExistingDirectory);
  pair->add_option("--mod", pair_mod)->required()->check(CLI::ExistingDirectory);
  pair->add_option("--modification", pair_tag, "e.g. jpeg:15, vkitti1");
  auto* nominal_opt = pair->add_option("--nominal-factor", nominal);
  pair->add_option("--out", pair_out, "manifest.json")->required();

  // modify jpeg
  auto* modify = app.add_subcommand("modify", "apply a modification");
  modify->require_subcommand(1);
  auto* mjpeg = modify->add_subcommand("jpeg", "JPEG compression");
  fs::path mj_in, mj_out, mj_stats;
  int mj_quality = 0;
  std::vector<int> mj_sweep;
  mjpeg->add_option("--in", mj_in)->required()->check(CLI::ExistingDirectory);
  mjpeg->add_option("--out", mj_out);
  auto* q_opt = mjpeg->add_option("--quality", mj_quality)->check(CLI::Range(1, 100));
  auto* sweep_opt = mjpeg->add_option("--sweep", mj_sweep)->delimiter(',')->check(CLI::Range(1, 100));
  mjpeg->add_option("--stats-out", mj_stats);
  q_opt->excludes(sweep_opt);

  // quality
  auto* quality = app.add_subcommand("quality", "image-quality metrics per pair");
  fs::path q_manifest, q_out;
  QualityOptions qopts;
  quality->add_option("--manifest", q_manifest)->required()->check(CLI::ExistingFile);
  quality->add_option("--out", q_out)->required();
  auto* q_fdir = quality->add_option("--features-dir", qopts.features_dir);
  quality->add_option("--lpips-weights", qopts.lpips_weights)->check(CLI::ExistingFile)->needs(q_fdir);
  quality->add_option("--fid-layer", qopts.fid_layer);

  // perf det / seg
  auto* perf = app.add_subcommand("perf", "model agreement between reference and modified inputs");
  perf->require_subcommand(1);
  auto* pdet = perf->add_subcommand("det", "object detection");
  auto* pseg = perf->add_subcommand("seg", "semantic segmentation");
  fs::path p_ref, p_mod, p_out, p_manifest;
  std::string p_model = "default", p_tag = "other:modified";
  double p_eps = 0;
  DetectionOptions dopts;
  pdet->add_option("--ref-pred", p_ref)->required()->check(CLI::ExistingFile);
  pdet->add_option("--mod-pred", p_mod)->required()->check(CLI::ExistingFile);
  pdet->add_option("--model-id", p_model, "model id when the files do not name one");
  pdet->add_option("--ref-min-score", dopts.ref_min_score)->check(CLI::Range(0.0, 1.0));
  pdet->add_option("--iou-thresh", dopts.iou_thresh)->check(CLI::Range(0.0, 1.0));
  pseg->add_option("--ref-masks", p_ref)->required()->check(CLI::ExistingDirectory);
  pseg->add_option("--mod-masks", p_mod)->required()->check(CLI::ExistingDirectory);
  pseg->add_option("--modification", p_tag);
  for (auto* sub : {pdet, pseg}) {
    sub->add_option("--out", p_out)->required();
    sub->add_option("--eps", p_eps)->check(CLI::Range(0.0, 1.0));
    sub->add_option("--manifest", p_manifest, "restrict to manifest pairs")->check(CLI::ExistingFile);
  }

  // correlate / report
  auto* correlate = app.add_subcommand("correlate", "correlation matrix and box statistics");
  auto* report = app.add_subcommand("report", "box statistics and plots only");
  fs::path c_quality, c_perf, c_out = "reports";
  std::string c_method = "pearson";
  bool c_plots = false, c_per_mod = false;
  for (auto* sub : {correlate, report}) {
    sub->add_option("--quality", c_quality)->required()->check(CLI::ExistingFile);
    sub->add_option("--perf", c_perf)->required()->check(CLI::ExistingFile);
    sub->add_option("--out-dir", c_out);
    sub->add_flag("--plots", c_plots, "write plots/*.svg");
  }
  correlate->add_option("--method", c_method)->check(CLI::IsMember({"pearson", "spearman"}));
  correlate->add_flag("--per-modification", c_per_mod);

  // run: every config key has a flag, and the flag wins.
  auto* run = app.add_subcommand("run", "all stages: pair, quality, perf, correlate");
  RunConfig flags;
  std::string r_method;
  auto* r_manifest = run->add_option("--manifest", flags.manifest);
  auto* r_ref = run->add_option("--ref-dir", flags.ref_dir);
  auto* r_mod = run->add_option("--mod-dir", flags.mod_dir);
  auto* r_tag = run->add_option("--modification", flags.modification);
  auto* r_sweep = run->add_option("--jpeg-sweep", flags.jpeg_sweep)->delimiter(',');
  auto* r_fdir = run->add_option("--features-dir", flags.features_dir);
  auto* r_weights = run->add_option("--lpips-weights", flags.lpips_weights);
  auto* r_fid = run->add_option("--fid-layer", flags.fid_layer);
  auto* r_dref = run->add_option("--det-ref-pred", flags.det_ref_pred);
  auto* r_dmod = run->add_option("--det-mod-pred", flags.det_mod_pred);
  auto* r_model = run->add_option("--model-id", flags.model_id);
  auto* r_minscore = run->add_option("--ref-min-score", flags.ref_min_score);
  auto* r_iou = run->add_option("--iou-thresh", flags.iou_thresh);
  auto* r_sref = run->add_option("--seg-ref-masks", flags.seg_ref_masks);
  auto* r_smod = run->add_option("--seg-mod-masks", flags.seg_mod_masks);
  auto* r_eps = run->add_option("--eps", flags.eps);
  auto* r_meth = run->add_option("--method", r_method)->check(CLI::IsMember({"pearson", "spearman"}));
  auto* r_plots = run->add_flag("--plots,!--no-plots", flags.plots);
  auto* r_permod = run->add_flag("--per-modification", flags.per_modification);
  auto* r_out = run->add_option("--out-dir", flags.out_dir);

  // demo
  auto* demo = app.add_subcommand("demo", "write the synthetic demo corpus");
  DemoOptions demo_opts;
  bool demo_run = false;
  demo->add_option("--out", demo_opts.out_dir)->required();
  demo->add_option("--scenes", demo_opts.scenes)->check(CLI::PositiveNumber);
  demo->add_option("--references", demo_opts.reference_dir, "use these images instead of procedural scenes")
      ->check(CLI::ExistingDirectory);
  demo->add_flag("--run", demo_run, "run the pipeline on it afterwards");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*pair) {
      PairingOptions o;
      o.jobs = jobs;
      if (*nominal_opt) o.nominal_factor = nominal;
      PairingResult r = pair_by_stem(pair_ref, pair_mod, Modification::parse(pair_tag), o);
      StageNotes notes;
      for (const auto& s : r.report.unmatched_ref) notes.warn("unmatched reference " + s);
      for (const auto& s : r.report.unmatched_mod) notes.warn("unmatched modified " + s);
      for (const auto& s : r.report.decode_errors) notes.warn(s);
      for (const auto& s : r.report.duplicates) notes.warn("duplicate stem " + s);
      for (const auto& [id, v] : r.report.excluded) {
        notes.warn(fmt::format("excluded {} ({})", id, fmt::join(v.messages, "; ")));
      }
      save_manifest(pair_out, r.manifest);
      spdlog::info("{} pairs -> {}", r.manifest.pairs.size(), pair_out.string());
      return finish(notes);
    }

    if (*mjpeg) {
      if (!*q_opt && !*sweep_opt) throw Error(Errc::ConfigError, "need --quality or --sweep");
      if (*q_opt) {
        if (mj_out.empty()) throw Error(Errc::ConfigError, "--quality needs --out");
        std::vector<double> factors;
        const auto written = jpeg_directory(mj_in, mj_out, mj_quality, jobs, &factors);
        if (!mj_stats.empty()) {
          write_text_file(mj_stats, compression_stats_csv({summarize_factors(mj_quality, factors)}));
        }
        spdlog::info("{} images -> {}", written.size(), mj_out.string());
        return 0;
      }
      std::vector<CompressionStats> stats;
      if (mj_out.empty()) {
        stats = sweep(mj_in, mj_sweep, jobs);
      } else {
        if (mj_sweep.empty()) throw Error(Errc::EmptySweep, "no qualities");
        for (int q : mj_sweep) {
          std::vector<double> factors;
          jpeg_directory(mj_in, mj_out / modification_dirname(Modification::jpeg(q).tag()), q, jobs, &factors);
          stats.push_back(summarize_factors(q, factors));
        }
      }
      const std::string csv = compression_stats_csv(stats);
      if (mj_stats.empty()) {
        std::cout << csv;
      } else {
        write_text_file(mj_stats, csv);
      }
      return 0;
    }

    if (*quality) {
      StageNotes notes;
      const Manifest m = load_manifest(q_manifest);
      write_text_file(q_out, quality_csv(compute_quality_table(m, qopts, jobs, notes)));
      return finish(notes);
    }

    if (*pdet) {
      StageNotes notes;
      const PredictionFile ref = load_predictions(p_ref, p_model);
      const PredictionFile mod = load_predictions(p_mod, p_model);
      std::optional<Manifest> m;
      if (!p_manifest.empty()) m = load_manifest(p_manifest);
      write_text_file(p_out, perf_csv(compute_detection_table(m ? &*m : nullptr, ref, mod, dopts, p_eps, notes)));
      return finish(notes);
    }

    if (*pseg) {
      StageNotes notes;
      std::vector<PerformanceDelta> rows;
      if (!p_manifest.empty()) {
        rows = compute_segmentation_table(load_manifest(p_manifest), p_ref, p_mod, p_eps, jobs, notes);
      } else {
        rows = compute_segmentation_from_dirs(p_ref, p_mod, Modification::parse(p_tag).tag(), p_eps, jobs, notes);
      }
      write_text_file(p_out, perf_csv(rows));
      return finish(notes);
    }

    if (*correlate || *report) {
      const auto q = parse_quality_csv(slurp(c_quality));
      const auto p = parse_perf_csv(slurp(c_perf));
      if (*correlate) {
        correlate_tables(q, p, c_out, {parse_correlation_method(c_method), c_plots, c_per_mod});
      } else {
        report_tables(q, p, c_out, c_plots);
      }
      return 0;
    }

    if (*run || (*demo && demo_run)) {
      RunConfig cfg;
      if (*demo) {
        demo_opts.seed = seed;
        cfg = load_run_config(build_demo(demo_opts).config);
      } else if (*config_opt) {
        cfg = load_run_config(config_path);
      }
      if (*r_manifest) cfg.manifest = flags.manifest;
      if (*r_ref) cfg.ref_dir = flags.ref_dir;
      if (*r_mod) cfg.mod_dir = flags.mod_dir;
      if (*r_tag) cfg.modification = flags.modification;
      if (*r_sweep) cfg.jpeg_sweep = flags.jpeg_sweep;
      if (*r_fdir) cfg.features_dir = flags.features_dir;
      if (*r_weights) cfg.lpips_weights = flags.lpips_weights;
      if (*r_fid) cfg.fid_layer = flags.fid_layer;
      if (*r_dref) cfg.det_ref_pred = flags.det_ref_pred;
      if (*r_dmod) cfg.det_mod_pred = flags.det_mod_pred;
      if (*r_model) cfg.model_id = flags.model_id;
      if (*r_minscore) cfg.ref_min_score = flags.ref_min_score;
      if (*r_iou) cfg.iou_thresh = flags.iou_thresh;
      if (*r_sref) cfg.seg_ref_masks = flags.seg_ref_masks;
      if (*r_smod) cfg.seg_mod_masks = flags.seg_mod_masks;
      if (*r_eps) cfg.eps = flags.eps;
      if (*r_meth) cfg.method = parse_correlation_method(r_method);
      if (*r_plots) cfg.plots = flags.plots;
      if (*r_permod) cfg.per_modification = flags.per_modification;
      if (*r_out) cfg.out_dir = flags.out_dir;
      if (*jobs_opt) cfg.jobs = jobs;
      if (*seed_opt) cfg.seed = seed;
      const RunResult r = run_pipeline(cfg);
      for (const auto& s : r.stages) {
        spdlog::info("{:<10} {}{}", s.name, s.skipped ? "cached" : "done",
                     s.notes.partial ? fmt::format(" ({} warnings)", s.notes.warnings.size()) : "");
      }
      return r.exit_code;
    }

    if (*demo) {
      demo_opts.seed = seed;
      const DemoCorpus c = build_demo(demo_opts);
      std::cout << c.config.string() << "\n";
      return 0;
    }
  } catch (const Error& e) {
    spdlog::error("{}: {}", to_string(e.code()), e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
