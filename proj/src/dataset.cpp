#include "saca/dataset.hpp"

#include <algorithm>

#include "saca/errors.hpp"
#include "saca/rng.hpp"

namespace saca {

std::vector<double> class_color(int k) {
  if (k < 0 || k > 7) throw ValueError("class_color: supports class ids 0..7");
  const int v = k + 1;
  std::vector<double> c(3);
  for (int j = 0; j < 3; ++j) c[j] = ((v >> j) & 1) ? 0.8 : -0.8;
  return c;
}

std::vector<ToySample> make_toy_dataset(const ToyDatasetSpec& spec) {
  if (spec.count < 1) throw ValueError("make_toy_dataset: count must be >= 1");
  if (spec.k_classes < 1 || spec.k_classes > 8) {
    throw ValueError("make_toy_dataset: k_classes must be in [1, 8]");
  }
  if (spec.height < 4 || spec.width < 4 || spec.height % 4 != 0 || spec.width % 4 != 0) {
    throw ValueError("make_toy_dataset: height and width must be positive multiples of 4");
  }
  if (spec.noise < 0.0) throw ValueError("make_toy_dataset: negative noise");
  const int fh = spec.height / 4, fw = spec.width / 4;
  if (fh * fw < spec.k_classes) {
    throw ValueError("make_toy_dataset: quarter-resolution grid smaller than class count");
  }
  const bool paired = spec.k_classes >= 3;
  const int n_sites = paired ? spec.k_classes - 1 : spec.k_classes;
  // 16x16 tiles; each carries its own pair-selection bit and marker
  const int th = (spec.height + 15) / 16, tw = (spec.width + 15) / 16;

  Rng rng(spec.seed);
  std::vector<ToySample> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int s = 0; s < spec.count; ++s) {
    // one Voronoi site per drawn region class, on distinct quarter-resolution cells;
    // the last site is the ambiguous pair when one is in play
    std::vector<int> site(static_cast<std::size_t>(n_sites));
    std::vector<bool> used(static_cast<std::size_t>(fh) * fw, false);
    for (int k = 0; k < n_sites; ++k) {
      int cell;
      do {
        cell = rng.uniform_int(fh * fw);
      } while (used[static_cast<std::size_t>(cell)]);
      used[static_cast<std::size_t>(cell)] = true;
      site[static_cast<std::size_t>(k)] = cell;
    }

    std::vector<int> tile_bit(static_cast<std::size_t>(th) * tw, 0);
    if (paired) {
      for (auto& b : tile_bit) b = rng.uniform_int(2);
    }

    std::vector<int> coarse(static_cast<std::size_t>(fh) * fw);
    for (int y = 0; y < fh; ++y) {
      for (int x = 0; x < fw; ++x) {
        int best = 0;
        long best_d = -1;
        for (int k = 0; k < n_sites; ++k) {
          const int sy = site[static_cast<std::size_t>(k)] / fw;
          const int sx = site[static_cast<std::size_t>(k)] % fw;
          const long d = static_cast<long>(y - sy) * (y - sy) + static_cast<long>(x - sx) * (x - sx);
          if (best_d < 0 || d < best_d) {  // ties keep the lowest class
            best_d = d;
            best = k;
          }
        }
        coarse[static_cast<std::size_t>(y) * fw + x] = best;
      }
    }

    ToySample sample;
    sample.label = Tensor({spec.height, spec.width});
    sample.image = Tensor({spec.height, spec.width, 3});
    auto& lab = sample.label.values();
    auto& img = sample.image.values();
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const int k = coarse[static_cast<std::size_t>(y / 4) * fw + x / 4];
        int cls = k;
        if (paired && k == n_sites - 1) {
          cls = spec.k_classes - 2 + tile_bit[static_cast<std::size_t>(y / 16) * tw + x / 16];
        }
        lab[static_cast<std::size_t>(y) * spec.width + x] = static_cast<double>(cls);
        // both pair members draw with the lower member's color
        const std::vector<double> color =
            class_color(paired ? std::min(cls, spec.k_classes - 2) : cls);
        double* px = img.data() + (static_cast<std::size_t>(y) * spec.width + x) * 3;
        for (int j = 0; j < 3; ++j) px[j] = color[static_cast<std::size_t>(j)];
      }
    }

    if (paired) {
      // one 2x2 marker in the corner of every tile, colored by the tile's bit;
      // labels keep the underlying region class, so markers are appearance only
      for (int ty = 0; ty < th; ++ty) {
        for (int tx = 0; tx < tw; ++tx) {
          const double mark =
              tile_bit[static_cast<std::size_t>(ty) * tw + tx] == 0 ? 4.0 : -4.0;
          const int y0 = ty * 16, x0 = tx * 16;
          const int y = y0;
          const int x = x0;
          for (int dy = 0; dy < 2 && y + dy < spec.height; ++dy) {
            for (int dx = 0; dx < 2 && x + dx < spec.width; ++dx) {
              double* px =
                  img.data() + (static_cast<std::size_t>(y + dy) * spec.width + (x + dx)) * 3;
              for (int j = 0; j < 3; ++j) px[j] = mark;
            }
          }
        }
      }
    }

    for (double& v : img) v += rng.normal(0.0, spec.noise);
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace saca
