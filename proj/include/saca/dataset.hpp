#pragma once

#include <cstdint>
#include <vector>

#include "saca/tensor.hpp"

namespace saca {

// Seeded synthetic segmentation task. Region labels are drawn as a Voronoi
// partition at quarter resolution and replicated x4, so region boundaries
// align with the 4x4 blocks a quarter-resolution head can actually resolve.
// Pixels get their region color plus Gaussian noise.
//
// With k_classes >= 3 the last two classes are an ambiguous pair that render
// with the same color. The image is divided into 16x16 tiles; each tile drawn
// from the pair region holds exactly one pair member, chosen by a per-tile
// bit, and the bit is signalled only by a 2x2 marker block in the tile corner
// (saturated positive for the lower member, saturated negative for the
// upper). Telling the pair apart therefore requires aggregating over a tile;
// the color of a pixel away from the marker carries no information about
// which member it belongs to. With k_classes < 3 every class keeps its own
// color and no markers are placed.
struct ToyDatasetSpec {
  int count = 16;
  int height = 32;
  int width = 32;
  int k_classes = 4;
  double noise = 0.2;
  std::uint64_t seed = 1;
};

struct ToySample {
  Tensor image;  // [H, W, 3]
  Tensor label;  // [H, W] class ids
};

// Distinct per-class color in [-1, 1]^3; supports up to 8 classes.
std::vector<double> class_color(int k);

std::vector<ToySample> make_toy_dataset(const ToyDatasetSpec& spec);

}  // namespace saca
