#pragma once

#include "tla/imaging.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace tla {

/// Parameters of the synthetic fine-grained benchmark.
///
/// Every image holds one object whose silhouette and body colour are shared
/// by its superclass. Two part slots carry texture motifs; the pair of motifs
/// is what separates the fine classes of a superclass.
struct SyntheticSpec {
  int image_size = 64;
  int superclasses = 2;
  int fine_per_super = 4;
  int train_per_class = 200;
  int val_per_class = 50;
  int test_per_class = 50;
  /// Clutter-only images, the FilterNet's background class.
  int background_images = 400;
  /// Clutter shapes drawn behind the object.
  int clutter = 10;
  double noise = 0.04;
  /// Object side as a fraction of the image side.
  double object_min = 0.36;
  double object_max = 0.50;
  /// Part side as a fraction of the object side.
  double part_fraction = 0.4;
  /// Stripe period of the motifs in pixels; the first half of each period is ink.
  int motif_period = 4;

  void validate() const;
  int fine_classes() const { return superclasses * fine_per_super; }
};

inline constexpr int kPartSlots = 2;

/// Part textures. All of them look the same under a horizontal flip, so
/// flipped training and test views keep the class.
enum class Motif { horizontal_stripes, vertical_stripes, checkerboard, dots };

struct LabeledImage {
  Image image;
  int fine = 0;        // global fine label: superclass * fine_per_super + index
  int superclass = 0;
  Box object;
  std::array<Box, kPartSlots> parts;
  std::array<Motif, kPartSlots> motifs;
};

struct LabeledDataset {
  std::vector<LabeledImage> items;
};

struct SyntheticBenchmark {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
  std::vector<Image> background;
};

/// Motif pair carried by fine class `index` within its superclass.
std::array<Motif, kPartSlots> fine_class_motifs(int index, int fine_per_super);

/// Renders a two-colour motif into `box` of `img`.
void paint_motif(Image& img, const Box& box, Motif motif, const std::array<double, 3>& ink,
                 const std::array<double, 3>& paper, int period);

SyntheticBenchmark gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace tla
