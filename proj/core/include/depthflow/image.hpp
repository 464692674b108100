#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "depthflow/geometry.hpp"

namespace depthflow {

/// Multi-channel raster, channel-interleaved row-major. Intensities are
/// normalized reals (8-bit files map to [0,1] at I/O).
struct ImagePlane {
  int width = 0, height = 0, channels = 0;
  std::vector<double> data;  // H*W*C

  ImagePlane() = default;
  ImagePlane(int w, int h, int c, double init = 0.0)
      : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, init) {
    if (w <= 0 || h <= 0 || c <= 0) throw std::invalid_argument("ImagePlane: non-positive dimensions");
  }

  size_t idx(int x, int y, int c) const {
    return (static_cast<size_t>(y) * width + x) * channels + c;
  }
  double& at(int x, int y, int c = 0) { return data[idx(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data[idx(x, y, c)]; }
};

/// Collapse to single channel (channel mean); identity on 1-channel input.
ImagePlane to_gray(const ImagePlane& img);

struct SampleResult {
  std::vector<double> value;  // one entry per channel
  bool valid = false;
};

/// Bilinear interpolation of the four lattice neighbors of q. Invalid when any
/// neighbor falls outside the image (no clamping).
SampleResult bilinear_sample(const ImagePlane& img, double qx, double qy);

/// Single-channel sample with spatial derivative of the interpolant; used by
/// the warping gradients. valid=false outside the lattice hull.
struct SampleGrad {
  double value = 0, dx = 0, dy = 0;
  bool valid = false;
};
SampleGrad bilinear_sample_grad(const ImagePlane& img, int channel, double qx, double qy);

struct WarpResult {
  ImagePlane image;
  std::vector<std::uint8_t> valid;  // H*W
};

/// output(p) = bilinear_sample(img, p - flow(p)); mask false where the sample
/// is invalid or flow(p) is masked.
WarpResult inverse_warp(const ImagePlane& img, const FlowField& flow);

/// 2x2 area average over full blocks; a trailing odd row/column is dropped.
ImagePlane downsample_image(const ImagePlane& img);

/// Pyramid of flows: level 0 is the input; level l is area-downsampled from
/// level l-1 with displacements halved. Returns `levels` entries.
std::vector<FlowField> downsample_flow(const FlowField& flow, int levels);

/// Transpose of one downsample_flow step: scatter a gradient w.r.t. the coarse
/// flow back onto the fine grid. Accumulates into fine_grad.
void downsample_flow_transpose(const FlowField& coarse_grad, const FlowField& fine_shape,
                               FlowField& fine_grad);

/// Forward differences, last column/row zero.
struct Gradients {
  ImagePlane dx, dy;
};
Gradients image_gradients(const ImagePlane& img);

/// Per-level feature maps; level l of a pyramid rooted at start_level has
/// dimensions (H >> (start_level + l), W >> (start_level + l)).
struct FeaturePyramid {
  int start_level = 0;
  std::vector<ImagePlane> levels;
};

}  // namespace depthflow
