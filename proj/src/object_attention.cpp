#include "tla/object_attention.hpp"

#include <algorithm>
#include <numeric>

namespace tla {

ParentClassSet::ParentClassSet(std::vector<int> indices, int class_count) : indices_(std::move(indices)) {
  if (indices_.empty()) throw Error("parent class set is empty");
  std::sort(indices_.begin(), indices_.end());
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
  if (indices_.front() < 0 || indices_.back() >= class_count)
    throw Error("parent class index out of range for " + std::to_string(class_count) + " classes");
}

ParentClassSet ParentClassSet::complement(int class_count) const {
  std::vector<int> rest;
  for (int c = 0; c < class_count; ++c)
    if (!std::binary_search(indices_.begin(), indices_.end(), c)) rest.push_back(c);
  return ParentClassSet(std::move(rest), class_count);
}

Image warp_to_input(const Image& img, const Box& box, const NetworkSpec& spec) {
  return warp(img, box, spec.input.height, spec.input.width);
}

namespace {

double parent_mass(const Distribution& d, const ParentClassSet& parents) {
  double s = 0.0;
  for (int c : parents.indices()) {
    if (c >= d.size()) throw Error("parent class index out of range");
    s += d[c];
  }
  return std::clamp(s, 0.0, 1.0);
}

}  // namespace

double filter_confidence(const Network& filternet, const Image& patch, const ParentClassSet& parents) {
  return parent_mass(forward(filternet, patch).output, parents);
}

std::vector<double> proposal_confidences(const Network& filternet, const Image& img, std::span<const Box> boxes,
                                         const ParentClassSet& parents) {
  std::vector<Image> patches;
  patches.reserve(boxes.size());
  for (const Box& b : boxes) patches.push_back(warp_to_input(img, b, filternet.spec()));
  std::vector<double> scores;
  scores.reserve(boxes.size());
  for (const Distribution& d : predict(filternet, patches)) scores.push_back(parent_mass(d, parents));
  return scores;
}

SelectedPatches select_patches(const Network& filternet, const Image& img, std::span<const Box> proposals,
                               const ParentClassSet& parents, double threshold, std::size_t max_count) {
  if (threshold < 0.0 || threshold > 1.0) throw Error("selection threshold must lie in [0,1]");
  std::vector<Box> eligible;
  for (const Box& b : proposals)
    if (b.area() >= kMinProposalArea) eligible.push_back(b);
  const std::vector<double> scores = proposal_confidences(filternet, img, eligible, parents);
  SelectedPatches kept;
  for (std::size_t i = 0; i < eligible.size(); ++i)
    if (scores[i] >= threshold) kept.push_back({eligible[i], scores[i]});
  std::stable_sort(kept.begin(), kept.end(), [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
  if (kept.size() > max_count) kept.resize(max_count);
  return kept;
}

Distribution predict_multiview(const Network& domainnet, std::span<const Image> patches) {
  if (patches.empty()) throw Error("no patches");
  // Canonical patch order makes batch composition, and so every bit of the
  // result, independent of the order the caller supplies.
  std::vector<std::size_t> order(patches.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto pixels_less = [&](std::size_t a, std::size_t b) {
    const Matrix& da = patches[a].data();
    const Matrix& db = patches[b].data();
    return std::lexicographical_compare(da.data(), da.data() + da.size(), db.data(), db.data() + db.size());
  };
  std::stable_sort(order.begin(), order.end(), pixels_less);
  std::vector<Image> canonical;
  canonical.reserve(patches.size());
  for (std::size_t i : order) canonical.push_back(patches[i]);

  const std::vector<Distribution> each = predict(domainnet, canonical);
  Vector mean = Vector::Zero(domainnet.spec().classes);
  for (const Distribution& d : each) mean += d.probs();
  mean /= static_cast<double>(each.size());
  return Distribution(std::move(mean));
}

Distribution object_level_prediction(const Network& domainnet, const Image& img, const SelectedPatches& selected,
                                     int fallback_crop) {
  std::vector<Image> patches;
  if (selected.empty()) {
    for (const Image& view : ten_views(img, fallback_crop))
      patches.push_back(resize_bilinear(view, domainnet.spec().input.height, domainnet.spec().input.width));
  } else {
    for (const ScoredBox& s : selected) patches.push_back(warp_to_input(img, s.box, domainnet.spec()));
  }
  return predict_multiview(domainnet, patches);
}

}  // namespace tla
