#pragma once

#include "tla/convnet.hpp"
#include "tla/imaging.hpp"

#include <span>
#include <vector>

namespace tla {

/// FilterNet class indices that make up the basic-level (parent) category.
class ParentClassSet {
 public:
  ParentClassSet(std::vector<int> indices, int class_count);
  const std::vector<int>& indices() const { return indices_; }
  /// Every index of [0, class_count) not in this set.
  ParentClassSet complement(int class_count) const;

 private:
  std::vector<int> indices_;
};

inline constexpr int kMinProposalArea = 64;

/// Warps a proposal to the network input size.
Image warp_to_input(const Image& img, const Box& box, const NetworkSpec& spec);

/// Softmax mass the FilterNet assigns to the parent classes.
double filter_confidence(const Network& filternet, const Image& patch, const ParentClassSet& parents);

/// Batched confidence for each box of `img`.
std::vector<double> proposal_confidences(const Network& filternet, const Image& img, std::span<const Box> boxes,
                                         const ParentClassSet& parents);

struct ScoredBox {
  Box box;
  double score = 0.0;
};

using SelectedPatches = std::vector<ScoredBox>;

/// Drops proposals under 8x8 pixels of area, scores the rest, keeps those
/// scoring at least `threshold`, sorts by descending score (stable in
/// proposal order) and truncates to `max_count`.
SelectedPatches select_patches(const Network& filternet, const Image& img, std::span<const Box> proposals,
                               const ParentClassSet& parents, double threshold, std::size_t max_count);

/// Mean of the per-patch softmax distributions.
Distribution predict_multiview(const Network& domainnet, std::span<const Image> patches);

/// Object-level prediction for one image: multiview over the selected
/// boxes, or over the ten fixed views of the whole image when the selection
/// is empty. `fallback_crop` is the ten-view crop side.
Distribution object_level_prediction(const Network& domainnet, const Image& img, const SelectedPatches& selected,
                                     int fallback_crop);

}  // namespace tla
