#include "depthflow/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace depthflow {

std::array<std::pair<int, int>, 8> census_neighbors() {
  return {{{-1, -1}, {0, -1}, {1, -1}, {-1, 0}, {1, 0}, {-1, 1}, {0, 1}, {1, 1}}};
}

PatchSet extract_keypoints(const ImagePlane& img, int max_points, const KeypointConfig& config) {
  if (max_points < 1) throw std::invalid_argument("extract_keypoints: max_points must be >= 1");
  if (img.channels != 1) throw std::invalid_argument("extract_keypoints: grayscale input required");

  const Gradients g = image_gradients(img);
  const int w = img.width, h = img.height;
  std::vector<double> mag(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = g.dx.at(x, y), gy = g.dy.at(x, y);
      mag[static_cast<size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy);
    }

  struct Candidate {
    int x, y;
    double m;
  };
  std::vector<Candidate> cands;
  const int d = config.block_size;
  std::vector<double> block;
  for (int by = 0; by < h; by += d)
    for (int bx = 0; bx < w; bx += d) {
      block.clear();
      int best_x = -1, best_y = -1;
      double best = -1;
      for (int y = by; y < std::min(by + d, h); ++y)
        for (int x = bx; x < std::min(bx + d, w); ++x) {
          const double m = mag[static_cast<size_t>(y) * w + x];
          block.push_back(m);
          if (m > best) {
            best = m;
            best_x = x;
            best_y = y;
          }
        }
      // region-adaptive threshold: lower median + offset
      std::nth_element(block.begin(), block.begin() + (block.size() - 1) / 2, block.end());
      const double thresh = block[(block.size() - 1) / 2] + config.grad_offset;
      if (best > thresh) cands.push_back({best_x, best_y, best});
    }

  const int n = config.radius;
  std::erase_if(cands, [&](const Candidate& c) {
    return c.x - n < 0 || c.x + n >= w || c.y - n < 0 || c.y + n >= h;
  });
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.m != b.m) return a.m > b.m;
    return std::tie(a.y, a.x) < std::tie(b.y, b.x);
  });
  if (static_cast<int>(cands.size()) > max_points) cands.resize(max_points);

  PatchSet out;
  out.radius = n;
  out.keypoints.reserve(cands.size());
  for (const auto& c : cands) out.keypoints.emplace_back(c.x, c.y);
  return out;
}

CensusMap census_transform(const ImagePlane& img, double eps) {
  if (img.channels != 1) throw std::invalid_argument("census_transform: grayscale input required");
  if (eps <= 0) throw std::invalid_argument("census_transform: eps must be positive");
  CensusMap out;
  out.width = img.width;
  out.height = img.height;
  out.eps = eps;
  out.codes.assign(static_cast<size_t>(img.width) * img.height * 8, 0);
  out.valid.assign(static_cast<size_t>(img.width) * img.height, 0);
  const auto nb = census_neighbors();
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double center = img.at(x, y);
      const size_t base = out.idx(x, y) * 8;
      for (int j = 0; j < 8; ++j) {
        const int nx = std::clamp(x + nb[j].first, 0, img.width - 1);
        const int ny = std::clamp(y + nb[j].second, 0, img.height - 1);
        const double diff = img.at(nx, ny) - center;
        out.codes[base + j] = diff > eps ? 1 : (diff < -eps ? -1 : 0);
      }
      const bool interior = x > 0 && y > 0 && x + 1 < img.width && y + 1 < img.height;
      out.valid[out.idx(x, y)] = interior ? 1 : 0;
    }
  return out;
}

double census_distance(const std::int8_t* a, const std::int8_t* b) {
  double s = 0;
  for (int j = 0; j < 8; ++j) {
    const double d = static_cast<double>(a[j]) - b[j];
    s += d * d / (d * d + kCensusDistanceScale);
  }
  return s;
}

double census_distance(const double* a, const double* b) {
  double s = 0;
  for (int j = 0; j < 8; ++j) {
    const double d = a[j] - b[j];
    s += d * d / (d * d + kCensusDistanceScale);
  }
  return s;
}

namespace {

ImagePlane convolve_same(const ImagePlane& img, const ImagePlane& kernel) {
  const int kr = kernel.width / 2;
  ImagePlane out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      // the bank is zero-mean, so filtering the residual against the center
      // pixel is the same convolution but exactly DC-free in floating point
      const double center = img.at(x, y);
      double s = 0;
      for (int ky = -kr; ky <= kr; ++ky)
        for (int kx = -kr; kx <= kr; ++kx) {
          const int sx = std::clamp(x + kx, 0, img.width - 1);
          const int sy = std::clamp(y + ky, 0, img.height - 1);
          s += (img.at(sx, sy) - center) * kernel.at(kx + kr, ky + kr);
        }
      out.at(x, y) = s;
    }
  return out;
}

}  // namespace

std::vector<ImagePlane> feature_filter_bank(int channels, int kernel_size) {
  if (channels < 1 || channels > 512)
    throw std::invalid_argument("feature_filter_bank: channel count not realizable");
  if (kernel_size < 3 || kernel_size % 2 == 0)
    throw std::invalid_argument("feature_filter_bank: kernel size must be odd and >= 3");
  const int kr = kernel_size / 2;
  const double scales[3] = {1.4, 2.0, 2.8};

  std::vector<ImagePlane> bank;
  bank.reserve(channels);
  const int n_dog = channels / 4;  // trailing quarter: center-surround
  const int n_deriv = channels - n_dog;
  for (int k = 0; k < channels; ++k) {
    ImagePlane ker(kernel_size, kernel_size, 1);
    const double sigma = scales[k % 3];
    if (k < n_deriv) {
      const double theta = M_PI * k / n_deriv;
      const double ct = std::cos(theta), st = std::sin(theta);
      for (int y = -kr; y <= kr; ++y)
        for (int x = -kr; x <= kr; ++x) {
          const double u = ct * x + st * y;
          const double gauss = std::exp(-(x * x + y * y) / (2 * sigma * sigma));
          ker.at(x + kr, y + kr) = -(u / (sigma * sigma)) * gauss;
        }
    } else {
      const double s2 = 1.6 * sigma;
      for (int y = -kr; y <= kr; ++y)
        for (int x = -kr; x <= kr; ++x) {
          const double r2 = x * x + y * y;
          ker.at(x + kr, y + kr) = std::exp(-r2 / (2 * sigma * sigma)) / (sigma * sigma) -
                                   std::exp(-r2 / (2 * s2 * s2)) / (s2 * s2);
        }
    }
    // exact zero mean, then L1 normalization
    double mean = 0;
    for (double v : ker.data) mean += v;
    mean /= ker.data.size();
    double l1 = 0;
    for (double& v : ker.data) {
      v -= mean;
      l1 += std::abs(v);
    }
    if (l1 > 0)
      for (double& v : ker.data) v /= l1;
    bank.push_back(std::move(ker));
  }
  return bank;
}

namespace {

// 3x3 binomial blur (clamped borders); anti-aliases the pyramid reduction so
// warped coarse-level features stay comparable across views
ImagePlane binomial_blur(const ImagePlane& img) {
  static const double k[3] = {0.25, 0.5, 0.25};
  ImagePlane tmp(img.width, img.height, 1), out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double s = 0;
      for (int d = -1; d <= 1; ++d) s += k[d + 1] * img.at(std::clamp(x + d, 0, img.width - 1), y);
      tmp.at(x, y) = s;
    }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double s = 0;
      for (int d = -1; d <= 1; ++d) s += k[d + 1] * tmp.at(x, std::clamp(y + d, 0, img.height - 1));
      out.at(x, y) = s;
    }
  return out;
}

ImagePlane reduce(const ImagePlane& img) { return downsample_image(binomial_blur(img)); }

}  // namespace

FeaturePyramid build_feature_pyramid(const ImagePlane& img, const FeatureBankConfig& config) {
  if (config.channels_per_level.empty())
    throw std::invalid_argument("build_feature_pyramid: empty channel list");
  ImagePlane gray = to_gray(img);
  for (int l = 0; l < config.start_level; ++l) gray = reduce(gray);

  FeaturePyramid pyr;
  pyr.start_level = config.start_level;
  for (size_t l = 0; l < config.channels_per_level.size(); ++l) {
    if (l > 0) gray = reduce(gray);
    const int channels = config.channels_per_level[l];
    const auto bank = feature_filter_bank(channels, config.kernel_size);
    ImagePlane level(gray.width, gray.height, channels);
    for (int c = 0; c < channels; ++c) {
      const ImagePlane resp = convolve_same(gray, bank[c]);
      for (int y = 0; y < gray.height; ++y)
        for (int x = 0; x < gray.width; ++x) level.at(x, y, c) = resp.at(x, y);
    }
    pyr.levels.push_back(std::move(level));
  }
  return pyr;
}

}  // namespace depthflow
