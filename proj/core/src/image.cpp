#include "depthflow/image.hpp"

#include <algorithm>
#include <cmath>

namespace depthflow {

ImagePlane to_gray(const ImagePlane& img) {
  if (img.channels == 1) return img;
  ImagePlane out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double s = 0;
      for (int c = 0; c < img.channels; ++c) s += img.at(x, y, c);
      out.at(x, y) = s / img.channels;
    }
  return out;
}

SampleResult bilinear_sample(const ImagePlane& img, double qx, double qy) {
  SampleResult r;
  r.value.assign(img.channels, 0.0);
  int x0 = static_cast<int>(std::floor(qx));
  int y0 = static_cast<int>(std::floor(qy));
  // the last row/column is still inside the image domain when hit exactly
  if (x0 == img.width - 1 && qx == x0) --x0;
  if (y0 == img.height - 1 && qy == y0) --y0;
  if (x0 < 0 || y0 < 0 || x0 + 1 >= img.width || y0 + 1 >= img.height) return r;
  const double ax = qx - x0, ay = qy - y0;
  for (int c = 0; c < img.channels; ++c) {
    const double v00 = img.at(x0, y0, c), v10 = img.at(x0 + 1, y0, c);
    const double v01 = img.at(x0, y0 + 1, c), v11 = img.at(x0 + 1, y0 + 1, c);
    r.value[c] = (1 - ay) * ((1 - ax) * v00 + ax * v10) + ay * ((1 - ax) * v01 + ax * v11);
  }
  r.valid = true;
  return r;
}

SampleGrad bilinear_sample_grad(const ImagePlane& img, int channel, double qx, double qy) {
  SampleGrad r;
  int x0 = static_cast<int>(std::floor(qx));
  int y0 = static_cast<int>(std::floor(qy));
  if (x0 == img.width - 1 && qx == x0) --x0;
  if (y0 == img.height - 1 && qy == y0) --y0;
  if (x0 < 0 || y0 < 0 || x0 + 1 >= img.width || y0 + 1 >= img.height) return r;
  const double ax = qx - x0, ay = qy - y0;
  const double v00 = img.at(x0, y0, channel), v10 = img.at(x0 + 1, y0, channel);
  const double v01 = img.at(x0, y0 + 1, channel), v11 = img.at(x0 + 1, y0 + 1, channel);
  r.value = (1 - ay) * ((1 - ax) * v00 + ax * v10) + ay * ((1 - ax) * v01 + ax * v11);
  r.dx = (1 - ay) * (v10 - v00) + ay * (v11 - v01);
  r.dy = (1 - ax) * (v01 - v00) + ax * (v11 - v10);
  r.valid = true;
  return r;
}

WarpResult inverse_warp(const ImagePlane& img, const FlowField& flow) {
  if (flow.width != img.width || flow.height != img.height)
    throw std::invalid_argument("inverse_warp: flow/image dimension mismatch");
  WarpResult out;
  out.image = ImagePlane(img.width, img.height, img.channels);
  out.valid.assign(static_cast<size_t>(img.width) * img.height, 0);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const size_t i = flow.idx(x, y);
      if (!flow.valid[i]) continue;
      const SampleResult s = bilinear_sample(img, x - flow.u[i], y - flow.v[i]);
      if (!s.valid) continue;
      for (int c = 0; c < img.channels; ++c) out.image.at(x, y, c) = s.value[c];
      out.valid[i] = 1;
    }
  return out;
}

ImagePlane downsample_image(const ImagePlane& img) {
  // floor division: a trailing odd row/column does not contribute
  const int w = std::max(1, img.width / 2);
  const int h = std::max(1, img.height / 2);
  ImagePlane out(w, h, img.channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const double s = img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) +
                         img.at(2 * x, 2 * y + 1, c) + img.at(2 * x + 1, 2 * y + 1, c);
        out.at(x, y, c) = 0.25 * s;
      }
  return out;
}

namespace {

FlowField downsample_flow_once(const FlowField& f) {
  const int w = std::max(1, f.width / 2);
  const int h = std::max(1, f.height / 2);
  FlowField out(w, h, false);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double su = 0, sv = 0;
      bool ok = true;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const size_t i = f.idx(2 * x + dx, 2 * y + dy);
          if (!f.valid[i]) ok = false;
          su += f.u[i];
          sv += f.v[i];
        }
      const size_t o = out.idx(x, y);
      out.u[o] = 0.5 * 0.25 * su;  // displacement scales with resolution
      out.v[o] = 0.5 * 0.25 * sv;
      out.valid[o] = ok ? 1 : 0;
    }
  return out;
}

}  // namespace

std::vector<FlowField> downsample_flow(const FlowField& flow, int levels) {
  if (levels < 1) throw std::invalid_argument("downsample_flow: levels must be >= 1");
  std::vector<FlowField> out;
  out.reserve(levels);
  out.push_back(flow);
  for (int l = 1; l < levels; ++l) out.push_back(downsample_flow_once(out.back()));
  return out;
}

void downsample_flow_transpose(const FlowField& coarse_grad, const FlowField& fine_shape,
                               FlowField& fine_grad) {
  if (fine_grad.width != fine_shape.width || fine_grad.height != fine_shape.height)
    throw std::invalid_argument("downsample_flow_transpose: gradient shape mismatch");
  for (int y = 0; y < coarse_grad.height; ++y)
    for (int x = 0; x < coarse_grad.width; ++x) {
      const size_t ci = coarse_grad.idx(x, y);
      const double gu = 0.5 * 0.25 * coarse_grad.u[ci];
      const double gv = 0.5 * 0.25 * coarse_grad.v[ci];
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const size_t fi = fine_grad.idx(2 * x + dx, 2 * y + dy);
          fine_grad.u[fi] += gu;
          fine_grad.v[fi] += gv;
        }
    }
}

Gradients image_gradients(const ImagePlane& img) {
  if (img.width < 2 || img.height < 2)
    throw std::invalid_argument("image_gradients: image too small");
  Gradients g{ImagePlane(img.width, img.height, img.channels),
              ImagePlane(img.width, img.height, img.channels)};
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        if (x + 1 < img.width) g.dx.at(x, y, c) = img.at(x + 1, y, c) - img.at(x, y, c);
        if (y + 1 < img.height) g.dy.at(x, y, c) = img.at(x, y + 1, c) - img.at(x, y, c);
      }
  return g;
}

}  // namespace depthflow
