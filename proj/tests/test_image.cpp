#include <doctest.h>

#include <random>

#include "depthflow/image.hpp"

using namespace depthflow;

namespace {

ImagePlane random_image(int w, int h, int c, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> uni(0, 1);
  ImagePlane img(w, h, c);
  for (double& v : img.data) v = uni(rng);
  return img;
}

ImagePlane ramp_image(int w, int h, double a, double b, double c) {
  ImagePlane img(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = a * x + b * y + c;
  return img;
}

}  // namespace

TEST_CASE("bilinear sample reproduces lattice values") {
  const ImagePlane img = random_image(8, 6, 2, 1);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x) {
      const SampleResult s = bilinear_sample(img, x, y);
      if (x + 1 >= img.width || y + 1 >= img.height) continue;  // needs the full cell
      REQUIRE(s.valid);
      CHECK(s.value[0] == doctest::Approx(img.at(x, y, 0)));
      CHECK(s.value[1] == doctest::Approx(img.at(x, y, 1)));
    }
}

TEST_CASE("bilinear sample at a 2x2 block center averages") {
  ImagePlane img(2, 2, 1);
  img.at(0, 0) = 0;
  img.at(1, 0) = 0;
  img.at(0, 1) = 1;
  img.at(1, 1) = 1;
  const SampleResult s = bilinear_sample(img, 0.5, 0.5);
  REQUIRE(s.valid);
  CHECK(s.value[0] == doctest::Approx(0.5));
}

TEST_CASE("bilinear sample is exact on ramps") {
  const ImagePlane img = ramp_image(16, 12, 0.3, -0.2, 0.5);
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> ux(0, 14.9), uy(0, 10.9);
  for (int i = 0; i < 200; ++i) {
    const double qx = ux(rng), qy = uy(rng);
    const SampleResult s = bilinear_sample(img, qx, qy);
    REQUIRE(s.valid);
    CHECK(std::abs(s.value[0] - (0.3 * qx - 0.2 * qy + 0.5)) < 1e-9);
  }
}

TEST_CASE("bilinear sample flags out-of-bounds neighbors invalid") {
  const ImagePlane img = random_image(4, 4, 1, 3);
  CHECK_FALSE(bilinear_sample(img, -0.1, 1.0).valid);
  CHECK_FALSE(bilinear_sample(img, 3.5, 1.0).valid);
  CHECK_FALSE(bilinear_sample(img, 1.0, 3.2).valid);
  CHECK(bilinear_sample(img, 2.9, 2.9).valid);
}

TEST_CASE("bilinear sample gradient matches finite differences") {
  const ImagePlane img = random_image(10, 10, 1, 4);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> uq(0.3, 8.6);
  for (int i = 0; i < 100; ++i) {
    const double qx = uq(rng), qy = uq(rng);
    const SampleGrad g = bilinear_sample_grad(img, 0, qx, qy);
    REQUIRE(g.valid);
    const double h = 1e-7;
    const double fdx = (bilinear_sample(img, qx + h, qy).value[0] -
                        bilinear_sample(img, qx - h, qy).value[0]) / (2 * h);
    const double fdy = (bilinear_sample(img, qx, qy + h).value[0] -
                        bilinear_sample(img, qx, qy - h).value[0]) / (2 * h);
    CHECK(g.dx == doctest::Approx(fdx).epsilon(1e-5));
    CHECK(g.dy == doctest::Approx(fdy).epsilon(1e-5));
  }
}

TEST_CASE("inverse warp with zero flow is the identity") {
  const ImagePlane img = random_image(12, 9, 1, 6);
  const FlowField zero(12, 9);
  const WarpResult w = inverse_warp(img, zero);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 12; ++x) {
      if (x + 1 < 12 && y + 1 < 9) {
        CHECK(w.valid[zero.idx(x, y)]);
        CHECK(w.image.at(x, y) == doctest::Approx(img.at(x, y)));
      }
    }
}

TEST_CASE("constant flow shifts a ramp by slope units") {
  const ImagePlane img = ramp_image(16, 8, 0.25, 0.0, 0.1);
  FlowField flow(16, 8);
  std::fill(flow.u.begin(), flow.u.end(), -1.0);
  const WarpResult w = inverse_warp(img, flow);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 14; ++x) {
      const size_t i = flow.idx(x, y);
      if (!w.valid[i]) continue;
      CHECK(w.image.at(x, y) == doctest::Approx(img.at(x, y) + 0.25).epsilon(1e-9));
    }
}

TEST_CASE("warping is linear in intensities") {
  const ImagePlane a = random_image(10, 10, 1, 7);
  const ImagePlane b = random_image(10, 10, 1, 8);
  FlowField flow(10, 10);
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> uni(-1.5, 1.5);
  for (size_t i = 0; i < flow.size(); ++i) {
    flow.u[i] = uni(rng);
    flow.v[i] = uni(rng);
  }
  ImagePlane mix(10, 10, 1);
  const double alpha = 0.7, beta = -0.4;
  for (size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = alpha * a.data[i] + beta * b.data[i];
  const WarpResult wa = inverse_warp(a, flow), wb = inverse_warp(b, flow),
                   wm = inverse_warp(mix, flow);
  for (size_t i = 0; i < wm.valid.size(); ++i) {
    if (!wm.valid[i]) continue;
    CHECK(std::abs(wm.image.data[i] - (alpha * wa.image.data[i] + beta * wb.image.data[i])) <
          1e-12);
  }
}

TEST_CASE("bilinear continuity bound") {
  const ImagePlane img = random_image(9, 9, 1, 10);
  double lipschitz = 0;
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      if (x + 1 < 9) lipschitz = std::max(lipschitz, std::abs(img.at(x + 1, y) - img.at(x, y)));
      if (y + 1 < 9) lipschitz = std::max(lipschitz, std::abs(img.at(x, y + 1) - img.at(x, y)));
    }
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> uq(0.5, 7.4);
  const double delta = 1e-6;
  for (int i = 0; i < 200; ++i) {
    const double qx = uq(rng), qy = uq(rng);
    const double v0 = bilinear_sample(img, qx, qy).value[0];
    const double v1 = bilinear_sample(img, qx + delta, qy).value[0];
    CHECK(std::abs(v1 - v0) <= 2 * lipschitz * delta + 1e-15);
  }
}

TEST_CASE("downsample_flow basics") {
  FlowField zero(8, 8);
  auto levels = downsample_flow(zero, 3);
  REQUIRE(levels.size() == 3);
  for (const auto& l : levels)
    for (size_t i = 0; i < l.size(); ++i) {
      CHECK(l.u[i] == 0.0);
      CHECK(l.v[i] == 0.0);
    }
  FlowField c(8, 8);
  std::fill(c.u.begin(), c.u.end(), 4.0);
  std::fill(c.v.begin(), c.v.end(), 2.0);
  levels = downsample_flow(c, 2);
  CHECK(levels[1].width == 4);
  for (size_t i = 0; i < levels[1].size(); ++i) {
    CHECK(levels[1].u[i] == doctest::Approx(2.0));
    CHECK(levels[1].v[i] == doctest::Approx(1.0));
  }
}

TEST_CASE("downsample of a linear flow equals its analytic restriction") {
  // u = a*x + b, area-averaged over a 2x2 block centered at (2x+0.5, 2y+0.5),
  // then halved: coarse u(x) = (a*(2x+0.5) + b) / 2
  const double a = 0.1, b = 0.7;
  FlowField f(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) f.u[f.idx(x, y)] = a * x + b;
  const auto levels = downsample_flow(f, 2);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      CHECK(std::abs(levels[1].u[levels[1].idx(x, y)] - 0.5 * (a * (2 * x + 0.5) + b)) < 1e-9);
}

TEST_CASE("downsample_flow_transpose is the adjoint of one downsample step") {
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> uni(-1, 1);
  FlowField fine(10, 6);
  for (size_t i = 0; i < fine.size(); ++i) {
    fine.u[i] = uni(rng);
    fine.v[i] = uni(rng);
  }
  const auto levels = downsample_flow(fine, 2);
  const FlowField& coarse = levels[1];
  FlowField cg(coarse.width, coarse.height);
  for (size_t i = 0; i < cg.size(); ++i) {
    cg.u[i] = uni(rng);
    cg.v[i] = uni(rng);
  }
  FlowField fg(fine.width, fine.height);
  std::fill(fg.u.begin(), fg.u.end(), 0.0);
  std::fill(fg.v.begin(), fg.v.end(), 0.0);
  downsample_flow_transpose(cg, fine, fg);
  // <A x, y> == <x, A^T y>
  double lhs = 0, rhs = 0;
  for (size_t i = 0; i < coarse.size(); ++i) lhs += coarse.u[i] * cg.u[i] + coarse.v[i] * cg.v[i];
  for (size_t i = 0; i < fine.size(); ++i) rhs += fine.u[i] * fg.u[i] + fine.v[i] * fg.v[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("image gradients") {
  ImagePlane constant(6, 6, 1, 0.4);
  Gradients g = image_gradients(constant);
  for (double v : g.dx.data) CHECK(v == 0.0);
  for (double v : g.dy.data) CHECK(v == 0.0);

  const ImagePlane ramp = ramp_image(8, 8, 2.0, 0.0, 0.0);
  g = image_gradients(ramp);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 7; ++x) CHECK(g.dx.at(x, y) == doctest::Approx(2.0));
  for (int y = 0; y < 8; ++y) CHECK(g.dx.at(7, y) == 0.0);

  // brute-force loop oracle on a random image
  const ImagePlane img = random_image(7, 5, 1, 14);
  g = image_gradients(img);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) {
      const double ex = x + 1 < 7 ? img.at(x + 1, y) - img.at(x, y) : 0.0;
      const double ey = y + 1 < 5 ? img.at(x, y + 1) - img.at(x, y) : 0.0;
      CHECK(g.dx.at(x, y) == ex);
      CHECK(g.dy.at(x, y) == ey);
    }
}
