#include "wbk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wbk/error.hpp"

namespace wbk {

ConfusionCounts confusion_counts(const Grid& pred, const Grid& gt, float threshold) {
  if (!pred.same_shape(gt)) throw ShapeError("confusion_counts: prediction and ground truth differ in shape");
  ConfusionCounts c;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const bool p = pred.data[k] >= threshold;
    const bool g = gt.data[k] >= threshold;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

OverlapScores dsc_miou(const ConfusionCounts& c) {
  OverlapScores s;
  s.dsc = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  s.iou_fg = ratio(c.tp, c.tp + c.fp + c.fn);
  s.miou = 0.5 * (s.iou_fg + ratio(c.tn, c.tn + c.fp + c.fn));
  return s;
}

RateScores acc_sen_spe(const ConfusionCounts& c) {
  return RateScores{ratio(c.tp + c.tn, c.total()), ratio(c.tp, c.tp + c.fn), ratio(c.tn, c.tn + c.fp)};
}

double percentile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::Data, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

namespace {

// One pass of the lower-envelope squared distance transform over f.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    while (k >= 0) {
      const int p = v[k];
      const double s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -inf : ((f[q] + q * q) - (f[v[k - 1]] + v[k - 1] * v[k - 1])) / (2.0 * (q - v[k - 1]));
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double diff = q - v[j];
    d[q] = diff * diff + f[v[j]];
  }
}

}  // namespace

std::vector<double> distance_to_set(const Grid& mask, float threshold) {
  const int h = mask.height;
  const int w = mask.width;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> sq(static_cast<std::size_t>(h) * w);
  for (std::size_t k = 0; k < sq.size(); ++k) sq[k] = mask.data[k] >= threshold ? 0.0 : inf;
  const int n = std::max(h, w);
  std::vector<double> f, d;
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);
  f.resize(static_cast<std::size_t>(h));
  d.resize(static_cast<std::size_t>(h));
  for (int j = 0; j < w; ++j) {
    for (int i = 0; i < h; ++i) f[i] = sq[static_cast<std::size_t>(i) * w + j];
    edt_1d(f, d, v, z);
    for (int i = 0; i < h; ++i) sq[static_cast<std::size_t>(i) * w + j] = d[i];
  }
  f.resize(static_cast<std::size_t>(w));
  d.resize(static_cast<std::size_t>(w));
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) f[j] = sq[static_cast<std::size_t>(i) * w + j];
    edt_1d(f, d, v, z);
    for (int j = 0; j < w; ++j) sq[static_cast<std::size_t>(i) * w + j] = d[j];
  }
  for (double& x : sq) x = std::sqrt(x);
  return sq;
}

namespace {

std::vector<double> directed_distances(const Grid& from, const Grid& to, float threshold) {
  const std::vector<double> dist = distance_to_set(to, threshold);
  std::vector<double> out;
  for (std::size_t k = 0; k < from.size(); ++k) {
    if (from.data[k] >= threshold) out.push_back(dist[k]);
  }
  return out;
}

}  // namespace

double hd95(const Grid& pred, const Grid& gt, float threshold) {
  if (!pred.same_shape(gt)) throw ShapeError("hd95: prediction and ground truth differ in shape");
  const auto a = directed_distances(pred, gt, threshold);
  const auto b = directed_distances(gt, pred, threshold);
  if (a.empty() || b.empty()) throw Error(ErrorKind::Data, "undefined HD95: empty mask");
  return std::max(percentile_linear(a, 95.0), percentile_linear(b, 95.0));
}

MetricsRow evaluate_pair(int sample_id, const Grid& pred, const Grid& gt, float threshold) {
  const ConfusionCounts c = confusion_counts(pred, gt, threshold);
  const OverlapScores o = dsc_miou(c);
  const RateScores r = acc_sen_spe(c);
  MetricsRow row{sample_id, o.dsc, o.iou_fg, o.miou, r.acc, r.sen, r.spe, 0.0};
  const bool pred_any = c.tp + c.fp > 0;
  const bool gt_any = c.tp + c.fn > 0;
  if (pred_any && gt_any) {
    row.hd95 = hd95(pred, gt, threshold);
  } else if (pred_any != gt_any) {
    row.hd95 = std::hypot(static_cast<double>(pred.height), static_cast<double>(pred.width));
  }
  return row;
}

MetricsRow mean_row(const std::vector<MetricsRow>& rows) {
  MetricsRow m;
  m.sample_id = -1;
  if (rows.empty()) return m;
  for (const MetricsRow& r : rows) {
    m.dsc += r.dsc;
    m.iou_fg += r.iou_fg;
    m.miou += r.miou;
    m.acc += r.acc;
    m.sen += r.sen;
    m.spe += r.spe;
    m.hd95 += r.hd95;
  }
  const double n = static_cast<double>(rows.size());
  m.dsc /= n;
  m.iou_fg /= n;
  m.miou /= n;
  m.acc /= n;
  m.sen /= n;
  m.spe /= n;
  m.hd95 /= n;
  return m;
}

}  // namespace wbk
