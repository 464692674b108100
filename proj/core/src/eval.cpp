#include "depthflow/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace depthflow {

namespace {

double lower_median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  const size_t k = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + k, v.end());
  return v[k];
}

}  // namespace

DepthMap median_scale(const DepthMap& pred, const DepthMap& gt,
                      const std::vector<std::uint8_t>& mask) {
  if (pred.size() != gt.size() || mask.size() != pred.size())
    throw std::invalid_argument("median_scale: size mismatch");
  std::vector<double> pv, gv;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    pv.push_back(pred.values[i]);
    gv.push_back(gt.values[i]);
  }
  if (pv.empty()) throw std::invalid_argument("median_scale: empty mask");
  const double mp = lower_median(std::move(pv));
  if (mp == 0) throw std::invalid_argument("median_scale: prediction median is zero");
  const double scale = lower_median(std::move(gv)) / mp;
  DepthMap out = pred;
  for (double& v : out.values) v *= scale;
  return out;
}

EvalReport compute_metrics(const DepthMap& pred, const DepthMap& gt,
                           const std::vector<std::uint8_t>& mask, double min_depth,
                           double max_depth) {
  if (pred.size() != gt.size() || mask.size() != pred.size())
    throw std::invalid_argument("compute_metrics: size mismatch");
  EvalReport r;
  double sum_rel = 0, sum_sq = 0, sum_log = 0;
  std::size_t n = 0, d1 = 0, d2 = 0, d3 = 0;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double d = pred.values[i], g = gt.values[i];
    if (!(d > 0) || !(g > 0)) continue;
    if (min_depth > 0 && g < min_depth) continue;
    if (max_depth > 0 && g > max_depth) continue;
    sum_rel += std::abs(d - g) / g;
    sum_sq += (d - g) * (d - g);
    sum_log += std::abs(std::log10(d) - std::log10(g));
    const double ratio = std::max(d / g, g / d);
    if (ratio < 1.25) ++d1;
    if (ratio < 1.25 * 1.25) ++d2;
    if (ratio < 1.25 * 1.25 * 1.25) ++d3;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("compute_metrics: no valid pixels");
  r.abs_rel = sum_rel / n;
  r.rms = std::sqrt(sum_sq / n);
  r.mean_log10 = sum_log / n;
  r.delta1 = static_cast<double>(d1) / n;
  r.delta2 = static_cast<double>(d2) / n;
  r.delta3 = static_cast<double>(d3) / n;
  r.n_pixels = n;
  return r;
}

}  // namespace depthflow
