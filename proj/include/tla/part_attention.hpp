#pragma once

#include "tla/classify.hpp"
#include "tla/convnet.hpp"
#include "tla/imaging.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tla {

/// Cosine similarity of the flattened kernels (biases excluded) of every
/// pair of filters in conv layer `layer`.
Matrix filter_similarity_matrix(const Network& net, int layer);

/// I - D^{-1/2} A D^{-1/2} with A = max(S, 0) and unit diagonal.
Matrix normalized_laplacian(const Matrix& similarity);

/// Normalised spectral clustering: rows of the k smallest-eigenvalue
/// eigenvectors of the normalised Laplacian, unit-normalised, then k-means.
std::vector<int> spectral_cluster(const Matrix& similarity, int k, std::uint64_t seed);

/// Filters of one conv layer partitioned into k groups, one of which may be
/// marked as responding to background.
struct PartDetectorBank {
  int layer = -1;
  int k = 0;
  std::vector<int> assignment;  // filter -> group
  std::optional<int> noise_group;

  std::vector<int> members(int group) const;
  /// Group ids in ascending order, noise excluded.
  std::vector<int> part_groups() const;

  void validate() const;
  std::string to_text() const;
  static PartDetectorBank parse(std::string_view text);
};

PartDetectorBank build_part_bank(const Network& net, int layer, int k, std::uint64_t seed);

/// Sum over the group's filters of the spatial maximum of the filter's
/// rectified response map at the bank layer.
double detection_score(const Network& net, const PartDetectorBank& bank, int group, const Image& patch);

/// Scores of every group (rows, in group-id order) for every patch (columns).
Matrix group_scores(const Network& net, const PartDetectorBank& bank, std::span<const Image> patches);

struct GroupDetection {
  int group = 0;
  Box box;
  double score = 0.0;
};

using PartDetection = std::vector<GroupDetection>;

/// Best proposal per requested group (ties to the earliest proposal).
PartDetection detect_groups(const Network& net, const PartDetectorBank& bank, const Image& img,
                            std::span<const Box> proposals, std::span<const int> groups);

/// Best proposal for every non-noise group, in group-id order.
PartDetection detect_parts(const Network& net, const PartDetectorBank& bank, const Image& img,
                           std::span<const Box> proposals);

/// FC1 features of the detected boxes, concatenated in detection order.
Vector part_feature(const Network& net, const Image& img, const PartDetection& detection);

struct PartSample {
  Image image;
  std::vector<Box> proposals;
  int label = 0;
};

/// Validation accuracy of a single-part SVM per group, from per-group
/// feature matrices (rows are samples).
std::vector<double> single_group_accuracy(std::span<const Matrix> train_features, std::span<const int> train_labels,
                                          std::span<const Matrix> val_features, std::span<const int> val_labels,
                                          const SvmConfig& svm);

/// Per-group single-part classifier accuracies on the validation split.
std::vector<double> group_validation_accuracy(const Network& net, const PartDetectorBank& bank,
                                              std::span<const PartSample> train, std::span<const PartSample> validation,
                                              const SvmConfig& svm);

/// Group whose single-part SVM has the lowest validation accuracy; ties go
/// to the lowest group id.
int identify_noise_cluster(const Network& net, const PartDetectorBank& bank, std::span<const PartSample> train,
                           std::span<const PartSample> validation, const SvmConfig& svm);

/// Lowest-accuracy index with ties to the lowest id.
int noise_from_accuracy(std::span<const double> accuracy);

}  // namespace tla
