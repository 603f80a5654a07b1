#pragma once

#include <array>
#include <string>
#include <vector>

#include "svasp/array.hpp"
#include "svasp/rng.hpp"

namespace svasp {

// Channel-statistics shift defining a domain's visual style.
struct DomainShift {
  std::array<double, 3> offset{0.0, 0.0, 0.0};
  std::array<double, 3> scale{1.0, 1.0, 1.0};
  double texture_freq = 0.0;  // cycles of an additive diagonal wave; 0 disables
  double texture_amp = 0.0;
};

// A domain renders procedural class patterns and then restyles them.
// Source and target domains use disjoint class-generator id sets.
struct Domain {
  std::string name;
  std::vector<int> class_ids;
  DomainShift shift;
  double pixel_noise = 0.03;
};

struct Dataset {
  std::string name;
  std::size_t height = 0, width = 0;
  std::vector<Array> images;  // each [3,H,W], values in [0,1]
  std::vector<int> labels;    // class-generator ids

  std::vector<int> class_values;                   // distinct labels, sorted
  std::vector<std::vector<std::size_t>> by_class;  // image indices per class

  void index();
  std::size_t n_classes() const { return class_values.size(); }
};

// increasing severity in [0,1] maps to a stronger channel restyle
DomainShift shift_from_severity(double severity);

// class-generator ids: 8 source classes, then 5 shared by the target domains
std::vector<int> source_class_ids();
std::vector<int> target_class_ids();

// one image of the given class generator, before the domain shift
Array render_class_pattern(int class_id, std::size_t H, std::size_t W, RngStream& rng);

Dataset generate_domain(const Domain& spec, std::size_t n_per_class, std::size_t image_size,
                        RngStream& rng);

// binary cache: magic "SVDS", version, class count, image count, H, W,
// f32 little-endian pixels, u16 labels
void save_dataset_cache(const Dataset& data, const std::string& path);
Dataset load_dataset_cache(const std::string& path);

}  // namespace svasp
