#pragma once

#include "tla/imaging.hpp"

#include <vector>

namespace tla {

/// Per-pixel region ids, contiguous in 0..region_count-1, numbered in
/// raster order of first appearance.
struct Segmentation {
  int height = 0;
  int width = 0;
  std::vector<int> labels;  // row-major, height*width
  int region_count = 0;

  int label(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

/// Graph-based segmentation on the 4-neighbour pixel graph.
///
/// Each channel is Gaussian-smoothed with standard deviation `sigma` (no
/// smoothing when sigma <= 0). Edge weights are Euclidean colour distances on
/// a 0..255 scale. Components merge while the edge weight is below
/// min(Int(A) + scale_k/|A|, Int(B) + scale_k/|B|); afterwards components
/// below `min_size` pixels are merged along their cheapest edge.
Segmentation felzenszwalb_segment(const Image& img, double scale_k, double sigma, int min_size);

inline constexpr int kHistogramBins = 25;

struct RegionDescriptor {
  int pixel_count = 0;
  Box bbox;
  /// channels*kHistogramBins values; each channel's block sums to one.
  Vector histogram;
};

std::vector<RegionDescriptor> region_features(const Image& img, const Segmentation& seg);

/// Size-weighted histogram combination and bounding-box union.
RegionDescriptor merge_descriptors(const RegionDescriptor& a, const RegionDescriptor& b);

struct SimilarityWeights {
  double colour = 1.0;
  double size = 1.0;
  double fill = 1.0;
};

/// Histogram intersection, in [0, channel count].
double histogram_intersection(const RegionDescriptor& a, const RegionDescriptor& b);
/// 1 - (|A|+|B|)/image area.
double size_similarity(const RegionDescriptor& a, const RegionDescriptor& b, int image_area);
/// 1 - (|bbox(A u B)| - |A| - |B|)/image area, clamped to [0,1].
double fill_similarity(const RegionDescriptor& a, const RegionDescriptor& b, int image_area);

/// Defaults give roughly 150-200 boxes on 64x64 synthetic images.
struct ProposalParams {
  double scale_k = 30.0;
  double sigma = 0.8;
  int min_size = 5;
  SimilarityWeights weights;
};

struct ProposalSet {
  std::vector<Box> boxes;  // initial regions in id order, then each merge; deduplicated
  int initial_regions = 0;
  int merge_count = 0;
  Segmentation segmentation;
};

/// Hierarchical grouping of the initial segmentation: repeatedly merges the
/// most similar adjacent pair (ties to the lowest id pair) until one region
/// remains, emitting the bounding box of every region formed.
ProposalSet selective_search(const Image& img, const ProposalParams& params = {});

}  // namespace tla
