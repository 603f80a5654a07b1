#pragma once

#include <vector>

#include "svasp/array.hpp"
#include "svasp/rng.hpp"

namespace svasp {

struct CropConfig {
  std::size_t count = 2;           // crops per input set
  double area_low = 0.2;           // area fraction bounds
  double area_high = 0.4;
  double aspect_low = 3.0 / 4.0;   // width/height bounds
  double aspect_high = 4.0 / 3.0;

  void validate() const;
};

struct CropRect {
  std::size_t top = 0, left = 0, h = 0, w = 0;
};

// One rectangle with area fraction and aspect ratio inside the configured
// bounds (integer-rounded so the measured fraction still falls in range).
CropRect sample_crop_rect(std::size_t H, std::size_t W, const CropConfig& cfg, RngStream& rng);

// Random-resized crops of a [B,C,H,W] batch: `count` entries where every image
// gets its own rectangle, bilinearly resized back to HxW, plus the untouched
// batch as the final entry. Identical seed, identical output.
std::vector<Array> sample_crops(const Array& images, const CropConfig& cfg, RngStream& rng);

}  // namespace svasp
