// weakbox-kit: dataset synthesis, box transforms, two-phase training,
// inference, evaluation and gradient checking.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wbk/checkpoint.hpp"
#include "wbk/config.hpp"
#include "wbk/error.hpp"
#include "wbk/gradcheck.hpp"
#include "wbk/metrics.hpp"
#include "wbk/pgm.hpp"
#include "wbk/report.hpp"
#include "wbk/synth.hpp"
#include "wbk/train.hpp"
#include "wbk/weakbox.hpp"

namespace fs = std::filesystem;
using namespace wbk;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Usage: return 1;
    case ErrorKind::Data: return 2;
    case ErrorKind::Numeric: return 3;
  }
  return 2;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load_config(const Common& c, const std::string& phase) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (!cfg.phase.empty() && cfg.phase != phase) {
    throw Error(ErrorKind::Usage, "config is for phase '" + cfg.phase + "', command runs '" + phase + "'");
  }
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw Error(ErrorKind::Usage, std::string("no ") + what + " given");
  if (!fs::exists(p)) throw Error(ErrorKind::Usage, std::string(what) + " not found: " + p.string());
}

fs::path output_dir(const Common& c) {
  if (c.out.empty()) throw Error(ErrorKind::Usage, "--out is required");
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw Error(ErrorKind::Data, "cannot create output directory " + c.out);
  return c.out;
}

fs::path checkpoint_target(const RunConfig& cfg, const Common& c, const char* name) {
  if (!c.out.empty()) return output_dir(c) / name;
  if (!cfg.checkpoint.empty()) return cfg.checkpoint;
  throw Error(ErrorKind::Usage, "set 'checkpoint' in the config or pass --out");
}

void write_loss_log(const fs::path& path, const std::vector<double>& losses) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Data, "cannot write " + path.string());
  f << "epoch,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f\n", i + 1, losses[i]);
    f << buf;
  }
}

EpochHook printer(int epochs) {
  return [epochs](int epoch, double loss) { std::printf("epoch %d/%d loss=%.6f\n", epoch + 1, epochs, loss); };
}

std::string fmt_box(const BoxCoords& b) {
  return std::to_string(b.row_min) + " " + std::to_string(b.col_min) + " " + std::to_string(b.row_max) + " " +
         std::to_string(b.col_max);
}

void print_mean(const char* label, const std::vector<MetricsRow>& rows) {
  const MetricsRow m = mean_row(rows);
  std::printf("%s n=%zu dsc=%.6f iou_fg=%.6f miou=%.6f acc=%.6f sen=%.6f spe=%.6f hd95=%.6f\n", label, rows.size(),
              m.dsc, m.iou_fg, m.miou, m.acc, m.sen, m.spe, m.hd95);
}

int cmd_synth(const Common& c, DatasetSpec spec) {
  if (c.seed) spec.seed = *c.seed;
  spec.validate();
  const fs::path dir = output_dir(c);
  const std::vector<Sample> samples = generate_dataset(spec);
  write_dataset(dir, spec, samples);
  std::printf("wrote %zu samples to %s\n", samples.size(), dir.string().c_str());
  return 0;
}

int cmd_mm2b(const std::string& in, const std::string& out, const std::string& coords) {
  require_file(in, "input mask");
  const Grid mask = read_pgm(in);
  const Mm2bResult r = mm2b(mask);
  std::printf("centre=%s row=%d col=%d\n", r.status.status == CenterKind::Foreground ? "foreground" : "background",
              r.status.row, r.status.col);
  if (!out.empty()) write_pgm(out, r.box.grid);
  if (has_foreground(r.box.grid)) {
    const BoxCoords b = mask_to_box_coords(r.box);
    std::printf("box=%s\n", fmt_box(b).c_str());
    if (!coords.empty()) {
      std::ofstream f(coords, std::ios::binary | std::ios::trunc);
      if (!f) throw Error(ErrorKind::Data, "cannot write " + coords);
      char buf[128];
      std::snprintf(buf, sizeof buf, "{\"row_min\":%d,\"col_min\":%d,\"row_max\":%d,\"col_max\":%d}\n", b.row_min,
                    b.col_min, b.row_max, b.col_max);
      f << buf;
    }
  } else {
    std::printf("box=empty\n");
  }
  return 0;
}

int cmd_train_refine(const Common& c) {
  const RunConfig cfg = load_config(c, "refine");
  require_file(cfg.dataset, "dataset");
  const fs::path target = checkpoint_target(cfg, c, "refine.ckpt");
  const LoadedDataset ds = read_dataset(cfg.dataset);
  const Checkpoint ck = train_refine(cfg, ds.samples, printer(cfg.refine_epochs));
  save_checkpoint(target, ck);
  if (!c.out.empty()) write_loss_log(fs::path(c.out) / "refine_log.csv", ck.epoch_losses);
  std::printf("checkpoint %s\n", target.string().c_str());
  return 0;
}

int cmd_train_weak(const Common& c, const std::string& refine_override, const std::string& resume_override) {
  RunConfig cfg = load_config(c, "weak");
  if (!refine_override.empty()) cfg.refine_checkpoint = refine_override;
  if (!resume_override.empty()) cfg.resume = resume_override;
  require_file(cfg.dataset, "dataset");
  const fs::path target = checkpoint_target(cfg, c, "weak.ckpt");
  const LoadedDataset ds = read_dataset(cfg.dataset);
  std::optional<Checkpoint> refine, resume;
  WeakOptions opt;
  if (!cfg.refine_checkpoint.empty()) {
    require_file(cfg.refine_checkpoint, "refine checkpoint");
    refine = load_checkpoint(cfg.refine_checkpoint);
    if (!refine->params.has_prefix("refine.")) throw Error(ErrorKind::Data, "refine checkpoint holds no refine.* tensors");
    opt.refine = &refine->params;
  }
  if (!cfg.resume.empty()) {
    require_file(cfg.resume, "resume checkpoint");
    resume = load_checkpoint(cfg.resume);
    opt.resume = &*resume;
  }
  const Checkpoint ck = train_weak(cfg, ds.samples, opt, printer(cfg.epochs));
  save_checkpoint(target, ck);
  if (!c.out.empty()) write_loss_log(fs::path(c.out) / "weak_log.csv", ck.epoch_losses);
  std::printf("checkpoint %s\n", target.string().c_str());
  return 0;
}

Checkpoint model_checkpoint(const RunConfig& cfg, const std::string& override_path) {
  const fs::path p = override_path.empty() ? cfg.checkpoint : fs::path(override_path);
  require_file(p, "checkpoint");
  Checkpoint ck = load_checkpoint(p);
  if (!ck.params.contains("head.out.weight")) throw Error(ErrorKind::Data, "checkpoint holds no segmentation head");
  return ck;
}

int cmd_infer(const Common& c, const std::string& ckpt_path, const std::vector<std::string>& images) {
  const RunConfig cfg = load_config(c, "infer");
  Checkpoint ck = model_checkpoint(cfg, ckpt_path);
  const NetConfig net = net_from_meta(ck.meta);
  if (images.empty()) throw Error(ErrorKind::Usage, "no input images");
  std::vector<Grid> grids;
  for (const std::string& p : images) grids.push_back(read_pgm(p));
  const fs::path dir = output_dir(c);
  const std::vector<Prediction> preds = infer(ck.params, net, grids, cfg.batch_size);
  std::ofstream prompts(dir / "prompts.txt", std::ios::binary | std::ios::trunc);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string stem = fs::path(images[i]).stem().string();
    write_pgm(dir / (stem + "_coarse.pgm"), threshold_grid(preds[i].coarse_prob, kMaskThreshold));
    if (preds[i].refined_prob) {
      write_pgm(dir / (stem + "_refined.pgm"), threshold_grid(*preds[i].refined_prob, kMaskThreshold));
    }
    prompts << stem << " " << fmt_box(preds[i].prompt) << "\n";
  }
  if (!prompts) throw Error(ErrorKind::Data, "cannot write prompts.txt");
  std::printf("wrote predictions for %zu images to %s\n", images.size(), dir.string().c_str());
  return 0;
}

int cmd_eval(const Common& c, const std::string& ckpt_path, const std::string& dataset_override) {
  RunConfig cfg = load_config(c, "eval");
  if (!dataset_override.empty()) cfg.eval_dataset = dataset_override;
  if (cfg.eval_dataset.empty()) cfg.eval_dataset = cfg.dataset;
  require_file(cfg.eval_dataset, "evaluation dataset");
  Checkpoint ck = model_checkpoint(cfg, ckpt_path);
  const NetConfig net = net_from_meta(ck.meta);
  const LoadedDataset ds = read_dataset(cfg.eval_dataset);
  const fs::path dir = output_dir(c);
  const ReportFormat fmt = parse_report_format(cfg.report_format);
  const std::string ext = "." + cfg.report_format;
  const Evaluation ev = evaluate(ck.params, net, ds.samples, cfg.batch_size);
  write_metrics_report(ev.coarse, dir / ("metrics" + ext), fmt);
  print_mean("coarse", ev.coarse);
  if (!ev.refined.empty()) {
    write_metrics_report(ev.refined, dir / ("metrics_refined" + ext), fmt);
    print_mean("refined", ev.refined);
  }
  return 0;
}

int cmd_gradcheck(const Common& c, int instances, const std::string& corrupt) {
  GradcheckOptions opt;
  if (c.seed) opt.seed = *c.seed;
  opt.instances = instances;
  opt.corrupt = corrupt;
  const GradcheckReport report = run_gradcheck(opt);
  const std::string text = report.format();
  std::fputs(text.c_str(), stdout);
  if (!c.out.empty()) {
    std::ofstream f(output_dir(c) / "gradcheck.txt", std::ios::binary | std::ios::trunc);
    f << text;
  }
  return report.all_passed() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakbox-kit: box-supervised segmentation toolkit"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "key = value configuration file");
    sub->add_option("--seed", common.seed, "override the configured seed");
    sub->add_option("--out", common.out, "output directory");
  };

  DatasetSpec spec;
  std::string spec_file;
  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic dataset");
  synth->add_option("--config", spec_file, "dataset spec file (spec.cfg format)");
  synth->add_option("--seed", common.seed, "dataset seed");
  synth->add_option("--out", common.out, "dataset directory")->required();
  std::optional<int> count, size, first, min_obj, max_obj;
  std::optional<float> noise;
  std::optional<std::string> family;
  synth->add_option("--count", count, "number of samples");
  synth->add_option("--first", first, "index of the first sample");
  synth->add_option("--size", size, "image side length");
  synth->add_option("--min-objects", min_obj, "fewest objects per sample");
  synth->add_option("--max-objects", max_obj, "most objects per sample");
  synth->add_option("--noise", noise, "noise amplitude in [0, 0.5]");
  synth->add_option("--family", family, "ellipse | fused-ellipses | annulus");

  std::string mm2b_in, mm2b_out, mm2b_coords;
  auto* mm = app.add_subcommand("mm2b", "apply the mask-to-box transform to a PGM mask");
  mm->add_option("--config", common.config, "unused; accepted for symmetry");
  mm->add_option("--in", mm2b_in, "input mask (P5 PGM)")->required();
  mm->add_option("--out", mm2b_out, "output box mask (P5 PGM)");
  mm->add_option("--coords", mm2b_coords, "write the box as a JSON object");

  auto* refine = app.add_subcommand("train-refine", "train the refinement network on the labeled subset");
  add_common(refine);

  std::string refine_ckpt, resume_ckpt;
  auto* weak = app.add_subcommand("train-weak", "box-supervised training of the segmenter");
  add_common(weak);
  weak->add_option("--refine", refine_ckpt, "frozen refinement checkpoint to attach");
  weak->add_option("--resume", resume_ckpt, "continue from a weak-phase checkpoint");

  std::string ckpt;
  std::vector<std::string> images;
  auto* inf = app.add_subcommand("infer", "predict masks for PGM images");
  add_common(inf);
  inf->add_option("--checkpoint", ckpt, "model checkpoint");
  inf->add_option("images", images, "input images (P5 PGM)");

  std::string eval_dataset;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(ev);
  ev->add_option("--checkpoint", ckpt, "model checkpoint");
  ev->add_option("--dataset", eval_dataset, "dataset directory");

  int instances = 20;
  std::string corrupt;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every primitive and loss");
  add_common(gc);
  gc->add_option("--instances", instances, "random instances per case");
  gc->add_option("--corrupt", corrupt, "perturb the analytic gradient of this case (fault injection)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      if (!spec_file.empty()) {
        std::ifstream f(spec_file, std::ios::binary);
        if (!f) throw Error(ErrorKind::Usage, "cannot read " + spec_file);
        std::stringstream ss;
        ss << f.rdbuf();
        spec = parse_spec(ss.str());
      }
      if (count) spec.count = *count;
      if (first) spec.first = *first;
      if (size) spec.size = *size;
      if (min_obj) spec.min_objects = *min_obj;
      if (max_obj) spec.max_objects = *max_obj;
      if (noise) spec.noise = *noise;
      if (family) spec.family = parse_shape_family(*family);
      return cmd_synth(common, spec);
    }
    if (*mm) return cmd_mm2b(mm2b_in, mm2b_out, mm2b_coords);
    if (*refine) return cmd_train_refine(common);
    if (*weak) return cmd_train_weak(common, refine_ckpt, resume_ckpt);
    if (*inf) return cmd_infer(common, ckpt, images);
    if (*ev) return cmd_eval(common, ckpt, eval_dataset);
    if (*gc) return cmd_gradcheck(common, instances, corrupt);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
