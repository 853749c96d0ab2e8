#include "wbk/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "wbk/error.hpp"
#include "wbk/losses.hpp"
#include "wbk/weakbox.hpp"

namespace wbk {

Grid apply_dihedral(const Grid& g, Dihedral d) {
  if (g.height != g.width) throw ShapeError("apply_dihedral: grid must be square");
  const int n = g.height;
  Grid cur = g;
  if (d.flip) {
    for (int i = 0; i < n; ++i) std::reverse(cur.data.begin() + i * n, cur.data.begin() + (i + 1) * n);
  }
  const int turns = ((d.quarter_turns % 4) + 4) % 4;
  for (int t = 0; t < turns; ++t) {
    Grid next(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) next.at(i, j) = cur.at(j, n - 1 - i);
    }
    cur = std::move(next);
  }
  return cur;
}

Dihedral random_dihedral(CounterRng& rng) {
  Dihedral d;
  d.flip = rng.below(2) == 1;
  d.quarter_turns = static_cast<int>(rng.below(4));
  return d;
}

namespace {

Grid morph(const Grid& g, int r, bool grow) {
  Grid out(g.height, g.width);
  for (int i = 0; i < g.height; ++i) {
    for (int j = 0; j < g.width; ++j) {
      bool any = false, all = true;
      for (int di = -r; di <= r; ++di) {
        for (int dj = -r; dj <= r; ++dj) {
          if (di * di + dj * dj > r * r) continue;
          const int y = i + di, x = j + dj;
          const bool v = y >= 0 && y < g.height && x >= 0 && x < g.width && g.at(y, x) >= 0.5f;
          any = any || v;
          all = all && v;
        }
      }
      out.at(i, j) = (grow ? any : all) ? 1.0f : 0.0f;
    }
  }
  return out;
}

void paint_disc(Grid& g, double cy, double cx, double r, float value) {
  for (int i = 0; i < g.height; ++i) {
    for (int j = 0; j < g.width; ++j) {
      if ((i - cy) * (i - cy) + (j - cx) * (j - cx) <= r * r) g.at(i, j) = value;
    }
  }
}

Grid box_blur(const Grid& g) {
  Grid out(g.height, g.width);
  for (int i = 0; i < g.height; ++i) {
    for (int j = 0; j < g.width; ++j) {
      double s = 0.0;
      int n = 0;
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          const int y = i + di, x = j + dj;
          if (y < 0 || y >= g.height || x < 0 || x >= g.width) continue;
          s += g.at(y, x);
          ++n;
        }
      }
      out.at(i, j) = static_cast<float>(s / n);
    }
  }
  return out;
}

}  // namespace

Grid degrade_mask(const Grid& gt, CounterRng& rng) {
  Grid d = threshold_grid(gt, 0.5f);
  const float u = rng.uniform();
  if (u < 0.4f) d = morph(d, 1 + static_cast<int>(rng.below(3)), true);
  else if (u < 0.7f) d = morph(d, 1 + static_cast<int>(rng.below(2)), false);

  if (rng.uniform() < 0.5f && has_foreground(gt)) {
    // Fill a random part of the bounding box, as box-shaped supervision tends to.
    const BoxCoords b = mask_to_box_coords(gt);
    const int r0 = b.row_min + static_cast<int>(rng.below(static_cast<std::uint32_t>(b.height())));
    const int c0 = b.col_min + static_cast<int>(rng.below(static_cast<std::uint32_t>(b.width())));
    const int r1 = r0 + static_cast<int>(rng.below(static_cast<std::uint32_t>(b.row_max - r0 + 1)));
    const int c1 = c0 + static_cast<int>(rng.below(static_cast<std::uint32_t>(b.col_max - c0 + 1)));
    for (int i = r0; i <= r1; ++i) {
      for (int j = c0; j <= c1; ++j) d.at(i, j) = 1.0f;
    }
  }
  if (rng.uniform() < 0.5f) {
    const int blobs = 1 + static_cast<int>(rng.below(3));
    for (int k = 0; k < blobs; ++k) {
      paint_disc(d, rng.uniform(0.0f, static_cast<float>(d.height)), rng.uniform(0.0f, static_cast<float>(d.width)),
                 rng.uniform(1.0f, 4.0f), 1.0f);
    }
  }
  if (rng.uniform() < 0.3f && has_foreground(gt)) {
    const BoxCoords b = mask_to_box_coords(gt);
    paint_disc(d, rng.uniform(static_cast<float>(b.row_min), static_cast<float>(b.row_max + 1)),
               rng.uniform(static_cast<float>(b.col_min), static_cast<float>(b.col_max + 1)), rng.uniform(1.0f, 3.0f),
               0.0f);
  }
  const int blurs = static_cast<int>(rng.below(3));
  for (int k = 0; k < blurs; ++k) d = box_blur(d);
  const float noise = rng.uniform(0.0f, 0.15f);
  for (float& v : d.data) v = std::clamp(v + rng.uniform(-noise, noise), 0.0f, 1.0f);
  return d;
}

std::vector<int> labeled_subset(int n, float fraction, std::uint64_t seed) {
  if (n <= 0) throw Error(ErrorKind::Data, "empty labeled subset: dataset has no samples");
  const int m = std::clamp(static_cast<int>(std::ceil(static_cast<double>(fraction) * n - 1e-9)), 1, n);
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  CounterRng rng = CounterRng::split(seed, 0, stream::kLabelSubset);
  for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(static_cast<std::uint32_t>(i + 1))]);
  idx.resize(static_cast<std::size_t>(m));
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

std::vector<int> shuffled(int n, std::uint64_t seed, std::uint64_t epoch_key) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng = CounterRng::split(seed, epoch_key, stream::kShuffle);
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(static_cast<std::uint32_t>(i + 1))]);
  return order;
}

int scaled_size(int size, float factor) {
  return std::max(8, 4 * static_cast<int>(std::lround(static_cast<double>(size) * factor / 4.0)));
}

Tensor to_size(const Tensor& x, int h, int w) {
  const Shape& s = x.shape();
  return s.h == h && s.w == w ? x : bilinear_resize(x, h, w);
}

}  // namespace

Tensor network_input(std::span<const Grid> images) {
  std::vector<Grid> planes;
  planes.reserve(images.size());
  for (const Grid& g : images) {
    double mean = 0.0, sq = 0.0;
    for (float v : g.data) mean += v;
    mean /= static_cast<double>(g.size());
    for (float v : g.data) sq += (v - mean) * (v - mean);
    const double inv = 1.0 / (std::sqrt(sq / static_cast<double>(g.size())) + 1e-3);
    Grid out(g.height, g.width);
    for (std::size_t k = 0; k < g.size(); ++k) out.data[k] = static_cast<float>((g.data[k] - mean) * inv);
    planes.push_back(std::move(out));
  }
  return Tensor::stack(planes);
}

namespace {

void watch_trainable(Tape& tape, ModelParams& params) {
  for (auto& [name, p] : params.params()) {
    if (!p.frozen) tape.watch(p.value);
  }
}

void require_finite(double loss, const char* phase, int epoch, int step) {
  if (std::isfinite(loss)) return;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s: non-finite loss (%g) at epoch %d, step %d", phase, loss, epoch + 1, step);
  throw Error(ErrorKind::Numeric, buf);
}

BoxCoords prompt_from(const Grid& prob) {
  if (!has_foreground(prob)) return full_box(prob.height, prob.width);
  const Mm2bResult m = mm2b(prob);
  if (!has_foreground(m.box.grid)) return full_box(prob.height, prob.width);
  return mask_to_box_coords(m.box);
}

// Box prompts from a head pass with whole-image prompts.
std::vector<BoxCoords> auto_prompts(const Tensor& fused, const Tensor& image, const ModelParams& params) {
  const Shape& is = image.shape();
  const Shape& fs = fused.shape();
  const std::vector<BoxCoords> whole(static_cast<std::size_t>(is.n), full_box(is.h, is.w));
  const HeadOutput first = seg_head_forward(fused, prompt_channel(whole, is.h, is.w, fs.h, fs.w), image, params);
  std::vector<BoxCoords> prompts;
  for (int i = 0; i < is.n; ++i) prompts.push_back(prompt_from(first.prob.to_grid(i)));
  return prompts;
}

Tensor box_term(const Tensor& prob, const BoxMask& weak, const LossConfig& lc) {
  const Grid g = prob.to_grid();
  if (has_foreground(g)) {
    const CenterStatus st = center_status(g);
    return mm2b_loss(mm2b_branch(prob, st.status, st), weak, st, lc);
  }
  // Nothing predicted yet: the single-box path still gives every row and
  // column a gradient.
  const CenterStatus st{CenterKind::Foreground, 0, 0, 0.0, 0.0};
  return mm2b_loss(mm2b_branch(prob, st.status, st), weak, st, lc);
}

Checkpoint make_checkpoint(const RunConfig& cfg, const std::string& phase, int epoch, const ModelParams& params,
                           const Optimizer& opt, const std::vector<double>& losses) {
  Checkpoint ck;
  ck.epoch = static_cast<std::uint32_t>(epoch);
  ck.rng = CounterRng(CounterRng::derive(cfg.seed, 0, stream::kShuffle), static_cast<std::uint64_t>(epoch));
  ck.params = params.clone();
  ck.optimizer = opt;
  ck.epoch_losses = losses;
  ck.meta = checkpoint_meta(cfg, phase);
  return ck;
}

}  // namespace

Checkpoint train_refine(const RunConfig& cfg, std::span<const Sample> data, const EpochHook& hook) {
  cfg.validate();
  if (data.empty()) throw Error(ErrorKind::Data, "train_refine: empty labeled subset");
  const std::vector<int> subset = labeled_subset(static_cast<int>(data.size()), cfg.refine_label_fraction, cfg.seed);
  ModelParams params = init_refiner(cfg.net, cfg.seed);
  Optimizer opt(cfg.optimizer, cfg.refine_learning_rate, cfg.weight_decay);
  std::vector<double> losses;
  const int m = static_cast<int>(subset.size());
  for (int epoch = 0; epoch < cfg.refine_epochs; ++epoch) {
    const std::vector<int> order = shuffled(m, cfg.seed, 1'000'000 + static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start < m; start += cfg.batch_size) {
      const int end = std::min(m, start + cfg.batch_size);
      std::vector<Grid> images, coarse, gts;
      for (int k = start; k < end; ++k) {
        const int idx = subset[static_cast<std::size_t>(order[k])];
        CounterRng rng = CounterRng::split(cfg.seed, static_cast<std::uint64_t>(epoch) * data.size() + idx,
                                           stream::kDegrade);
        const Dihedral d = random_dihedral(rng);
        const Sample& s = data[static_cast<std::size_t>(idx)];
        Grid gt = apply_dihedral(s.gt_mask, d);
        Grid logit = degrade_mask(gt, rng);
        // Trained segmenters emit background logits near -10; a narrower range
        // leaves the refiner guessing at those and it paints specks.
        const float temperature = rng.uniform(2.0f, 12.0f);
        for (float& v : logit.data) v = temperature * (2.0f * v - 1.0f);
        images.push_back(apply_dihedral(s.image, d));
        coarse.push_back(std::move(logit));
        gts.push_back(std::move(gt));
      }
      Tape tape;
      watch_trainable(tape, params);
      const RefineIO io = detail_refine_forward(Tensor::stack(coarse), network_input(images), params, true);
      const Tensor prob = sigmoid(io.s_refined);
      std::vector<Tensor> per_sample;
      for (int i = 0; i < end - start; ++i) {
        per_sample.push_back(detail_refine_loss(slice_batch(prob, i), gts[static_cast<std::size_t>(i)], cfg.loss));
      }
      LossComponents parts;
      parts.refine = batch_mean(per_sample);
      const Tensor loss = total_loss(parts, Phase::RefineTraining);
      require_finite(loss.item(), "train-refine", epoch, batches);
      tape.backward(loss);
      opt.step(params);
      opt.zero_grad(params);
      loss_sum += loss.item();
      ++batches;
    }
    losses.push_back(loss_sum / batches);
    if (hook) hook(epoch, losses.back());
  }
  params.set_frozen("refine.", true);
  return make_checkpoint(cfg, "refine", cfg.refine_epochs, params, opt, losses);
}

Checkpoint train_weak(const RunConfig& cfg, std::span<const Sample> data, const WeakOptions& wopt,
                      const EpochHook& hook) {
  cfg.validate();
  if (data.empty()) throw Error(ErrorKind::Data, "train_weak: empty dataset");
  ModelParams params;
  Optimizer opt(cfg.optimizer, cfg.learning_rate, cfg.weight_decay);
  std::vector<double> losses;
  int start_epoch = 0;
  if (wopt.resume != nullptr) {
    const NetConfig saved = net_from_meta(wopt.resume->meta);
    if (saved.use_cnn != cfg.net.use_cnn || saved.features != cfg.net.features ||
        saved.cnn_width != cfg.net.cnn_width || saved.head_width != cfg.net.head_width) {
      throw Error(ErrorKind::Usage, "resume checkpoint was written for a different architecture");
    }
    params = wopt.resume->params.clone();
    opt = wopt.resume->optimizer;
    losses = wopt.resume->epoch_losses;
    start_epoch = static_cast<int>(wopt.resume->epoch);
  } else {
    params = init_segmenter(cfg.net, cfg.seed);
    if (wopt.refine != nullptr) params.merge_from(*wopt.refine, "refine.", true);
  }
  const int stop = wopt.stop_after >= 0 ? std::min(wopt.stop_after, cfg.epochs) : cfg.epochs;
  const int n = static_cast<int>(data.size());
  const int size = data[0].image.height;
  const int h1 = scaled_size(size, cfg.scale1);
  const int h2 = scaled_size(size, cfg.scale2);

  for (int epoch = start_epoch; epoch < stop; ++epoch) {
    const std::vector<int> order = shuffled(n, cfg.seed, static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int end = std::min(n, start + cfg.batch_size);
      std::vector<Grid> images;
      std::vector<BoxMask> weak;
      for (int k = start; k < end; ++k) {
        const int idx = order[static_cast<std::size_t>(k)];
        const Sample& s = data[static_cast<std::size_t>(idx)];
        Dihedral d;
        if (cfg.augment) {
          CounterRng rng = CounterRng::split(cfg.seed, static_cast<std::uint64_t>(epoch) * n + idx, stream::kAugment);
          d = random_dihedral(rng);
        }
        images.push_back(apply_dihedral(s.image, d));
        // Only the box of the mask is used from here on.
        weak.push_back(BoxMask{apply_dihedral(s.weak_box.grid, d)});
      }
      const Tensor image = network_input(images);
      const Tensor image1 = to_size(image, h1, h1);
      const Tensor image2 = to_size(image, h2, h2);

      std::vector<BoxCoords> prompts;
      {
        const Tensor fused = fused_features(image1, params, cfg.net, true);
        prompts = auto_prompts(fused, image1, params);
      }

      Tape tape;
      watch_trainable(tape, params);
      const ScalePair pair = seg_two_scales(image1, image2, prompts, params, cfg.net, true);
      const Tensor prob_primary = to_size(pair.primary.prob, size, size);
      const Tensor prob_secondary = to_size(pair.secondary.prob, size, size);
      std::vector<Tensor> box_losses, sc_losses;
      for (int i = 0; i < end - start; ++i) {
        const Tensor q1 = slice_batch(prob_primary, i);
        const Tensor q2 = slice_batch(prob_secondary, i);
        const BoxMask& b = weak[static_cast<std::size_t>(i)];
        if (cfg.supervision == Supervision::Box) {
          box_losses.push_back(affine(add(branch_loss(q1, b, cfg.loss), branch_loss(q2, b, cfg.loss)), 0.5f, 0.0f));
        } else {
          box_losses.push_back(affine(add(box_term(q1, b, cfg.loss), box_term(q2, b, cfg.loss)), 0.5f, 0.0f));
        }
        sc_losses.push_back(sc_loss(q1, q2, b));
      }
      LossComponents parts;
      parts.mm2b = batch_mean(box_losses);
      parts.sc = affine(batch_mean(sc_losses), cfg.sc_weight, 0.0f);
      const Tensor loss = total_loss(parts, Phase::WeakTraining);
      require_finite(loss.item(), "train-weak", epoch, batches);
      tape.backward(loss);
      opt.step(params);
      opt.zero_grad(params);
      loss_sum += loss.item();
      ++batches;
    }
    losses.push_back(loss_sum / batches);
    if (hook) hook(epoch, losses.back());
  }
  return make_checkpoint(cfg, "weak", stop, params, opt, losses);
}

std::vector<Prediction> infer(ModelParams& params, const NetConfig& net, std::span<const Grid> images,
                              int batch_size) {
  const bool refine = params.has_prefix("refine.");
  std::vector<Prediction> out;
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(images.size(), start + static_cast<std::size_t>(batch_size));
    const Tensor image = network_input(images.subspan(start, end - start));
    const Shape& is = image.shape();
    const Tensor fused = fused_features(image, params, net, false);
    const std::vector<BoxCoords> prompts = auto_prompts(fused, image, params);
    const HeadOutput head =
        seg_head_forward(fused, prompt_channel(prompts, is.h, is.w, fused.shape().h, fused.shape().w), image, params);
    Tensor refined;
    if (refine) refined = sigmoid(detail_refine_forward(head.logits, image, params, false).s_refined);
    for (int i = 0; i < is.n; ++i) {
      Prediction p;
      p.coarse_prob = head.prob.to_grid(i);
      if (refine) p.refined_prob = refined.to_grid(i);
      p.prompt = prompts[static_cast<std::size_t>(i)];
      out.push_back(std::move(p));
    }
  }
  return out;
}

Evaluation evaluate(ModelParams& params, const NetConfig& net, std::span<const Sample> data, int batch_size) {
  if (data.empty()) throw Error(ErrorKind::Data, "evaluate: empty dataset");
  std::vector<Grid> images;
  for (const Sample& s : data) images.push_back(s.image);
  const std::vector<Prediction> preds = infer(params, net, images, batch_size);
  Evaluation ev;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int id = static_cast<int>(i);
    ev.coarse.push_back(evaluate_pair(id, preds[i].coarse_prob, data[i].gt_mask));
    if (preds[i].refined_prob) ev.refined.push_back(evaluate_pair(id, *preds[i].refined_prob, data[i].gt_mask));
  }
  return ev;
}

double scale_gap(ModelParams& params, const RunConfig& cfg, std::span<const Sample> data) {
  if (data.empty()) throw Error(ErrorKind::Data, "scale_gap: empty dataset");
  const int size = data[0].image.height;
  const int h1 = scaled_size(size, cfg.scale1);
  const int h2 = scaled_size(size, cfg.scale2);
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(cfg.batch_size));
    std::vector<Grid> images;
    for (std::size_t i = start; i < end; ++i) images.push_back(data[i].image);
    const Tensor image = network_input(images);
    const Tensor image1 = to_size(image, h1, h1);
    const Tensor image2 = to_size(image, h2, h2);
    const std::vector<BoxCoords> prompts =
        auto_prompts(fused_features(image1, params, cfg.net, false), image1, params);
    const ScalePair pair = seg_two_scales(image1, image2, prompts, params, cfg.net, false);
    const Tensor prob_primary = to_size(pair.primary.prob, size, size);
    const Tensor prob_secondary = to_size(pair.secondary.prob, size, size);
    for (std::size_t i = start; i < end; ++i) {
      const int k = static_cast<int>(i - start);
      total += sc_loss(slice_batch(prob_primary, k), slice_batch(prob_secondary, k), data[i].weak_box).item();
    }
  }
  return total / static_cast<double>(data.size());
}

std::string checkpoint_meta(const RunConfig& cfg, const std::string& phase) {
  const NetConfig& n = cfg.net;
  return "phase = " + phase + "\nseed = " + std::to_string(cfg.seed) + "\nuse_cnn = " + (n.use_cnn ? "true" : "false") +
         "\nfeatures = " + std::to_string(n.features) + "\ncnn_width = " + std::to_string(n.cnn_width) +
         "\nhead_width = " + std::to_string(n.head_width) + "\nrefine_channels = " +
         std::to_string(n.refine_channels[0]) + " " + std::to_string(n.refine_channels[1]) + " " +
         std::to_string(n.refine_channels[2]) + "\n";
}

NetConfig net_from_meta(const std::string& meta) {
  NetConfig n;
  for (const auto& [key, value] : parse_key_values(meta)) {
    if (key == "use_cnn") n.use_cnn = parse_bool(key, value);
    else if (key == "features") n.features = parse_int(key, value);
    else if (key == "cnn_width") n.cnn_width = parse_int(key, value);
    else if (key == "head_width") n.head_width = parse_int(key, value);
    else if (key == "refine_channels") {
      std::sscanf(value.c_str(), "%d %d %d", &n.refine_channels[0], &n.refine_channels[1], &n.refine_channels[2]);
    }
  }
  return n;
}

}  // namespace wbk
