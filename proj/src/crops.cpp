#include "svasp/crops.hpp"

#include <algorithm>
#include <cmath>

namespace svasp {

void CropConfig::validate() const {
  if (!(area_low > 0.0 && area_low <= area_high && area_high <= 1.0))
    throw InvalidConfig("crop: area bounds must satisfy 0 < low <= high <= 1");
  if (!(aspect_low <= 1.0 && 1.0 <= aspect_high))
    throw InvalidConfig("crop: aspect bounds must bracket 1");
}

CropRect sample_crop_rect(std::size_t H, std::size_t W, const CropConfig& cfg,
                          RngStream& rng) {
  double frac = rng.uniform(cfg.area_low, cfg.area_high);
  double aspect = rng.uniform(cfg.aspect_low, cfg.aspect_high);
  double hw = static_cast<double>(H) * static_cast<double>(W);
  double target = frac * hw;
  double w0 = std::sqrt(target * aspect);
  double h0 = std::sqrt(target / aspect);
  double amin = cfg.area_low * hw - 1e-9;
  double amax = cfg.area_high * hw + 1e-9;

  auto clamp_dim = [](double v, std::size_t hi) {
    long r = std::lround(v);
    return static_cast<std::size_t>(std::clamp<long>(r, 1, static_cast<long>(hi)));
  };

  std::size_t wc_mid = clamp_dim(w0, W), hc_mid = clamp_dim(h0, H);
  CropRect best;
  double best_err = -1.0;
  bool best_in_bounds = false;
  for (long dh = -2; dh <= 2; ++dh)
    for (long dw = -2; dw <= 2; ++dw) {
      long hc = static_cast<long>(hc_mid) + dh;
      long wc = static_cast<long>(wc_mid) + dw;
      if (hc < 1 || wc < 1 || hc > static_cast<long>(H) || wc > static_cast<long>(W)) continue;
      double area = static_cast<double>(hc) * static_cast<double>(wc);
      bool in_bounds = area >= amin && area <= amax;
      double err = std::abs(area - target);
      bool better = best_err < 0.0 || (in_bounds && !best_in_bounds) ||
                    (in_bounds == best_in_bounds && err < best_err);
      if (better) {
        best = CropRect{0, 0, static_cast<std::size_t>(hc), static_cast<std::size_t>(wc)};
        best_err = err;
        best_in_bounds = in_bounds;
      }
    }
  if (best.h < 1 || best.w < 1) throw DegenerateCrop("sample_crops: empty rectangle");
  best.top = rng.uniform_index(H - best.h + 1);
  best.left = rng.uniform_index(W - best.w + 1);
  return best;
}

namespace {

// bilinear resize of one source rectangle onto a full HxW plane
void resize_plane(const double* src, std::size_t srcW, const CropRect& r, double* dst,
                  std::size_t H, std::size_t W) {
  if (r.h == H && r.w == W) {
    for (std::size_t y = 0; y < H; ++y)
      std::copy(src + (r.top + y) * srcW + r.left, src + (r.top + y) * srcW + r.left + W,
                dst + y * W);
    return;
  }
  double sy_scale = static_cast<double>(r.h) / static_cast<double>(H);
  double sx_scale = static_cast<double>(r.w) / static_cast<double>(W);
  for (std::size_t oy = 0; oy < H; ++oy) {
    double sy = (static_cast<double>(oy) + 0.5) * sy_scale - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(r.h - 1));
    std::size_t y0 = static_cast<std::size_t>(sy);
    std::size_t y1 = std::min(y0 + 1, r.h - 1);
    double fy = sy - static_cast<double>(y0);
    const double* row0 = src + (r.top + y0) * srcW + r.left;
    const double* row1 = src + (r.top + y1) * srcW + r.left;
    for (std::size_t ox = 0; ox < W; ++ox) {
      double sx = (static_cast<double>(ox) + 0.5) * sx_scale - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(r.w - 1));
      std::size_t x0 = static_cast<std::size_t>(sx);
      std::size_t x1 = std::min(x0 + 1, r.w - 1);
      double fx = sx - static_cast<double>(x0);
      double top = (1.0 - fx) * row0[x0] + fx * row0[x1];
      double bot = (1.0 - fx) * row1[x0] + fx * row1[x1];
      dst[oy * W + ox] = (1.0 - fy) * top + fy * bot;
    }
  }
}

}  // namespace

std::vector<Array> sample_crops(const Array& images, const CropConfig& cfg, RngStream& rng) {
  cfg.validate();
  if (images.rank() != 4) throw BadRank("sample_crops: expected [B,C,H,W]");
  std::size_t B = images.shape[0], C = images.shape[1], H = images.shape[2],
              W = images.shape[3];
  if (H < 4 || W < 4) throw ShapeMismatch("sample_crops: image too small");

  std::vector<Array> out;
  out.reserve(cfg.count + 1);
  for (std::size_t e = 0; e < cfg.count; ++e) {
    Array crop = Array::zeros(images.shape);
    for (std::size_t b = 0; b < B; ++b) {
      CropRect r = sample_crop_rect(H, W, cfg, rng);
      for (std::size_t c = 0; c < C; ++c) {
        const double* src = images.ptr() + (b * C + c) * H * W;
        double* dst = crop.ptr() + (b * C + c) * H * W;
        resize_plane(src, W, r, dst, H, W);
      }
    }
    out.push_back(std::move(crop));
  }
  out.push_back(images);  // the benign batch itself, untouched
  return out;
}

}  // namespace svasp
