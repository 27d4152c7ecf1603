#pragma once

#include "tla/numerics.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tla {

/// One-vs-rest linear SVM: margins = weights * x + bias.
struct LinearSvmModel {
  Matrix weights;  // classes x dimension
  Vector bias;     // classes

  int classes() const { return static_cast<int>(weights.rows()); }
  int dimension() const { return static_cast<int>(weights.cols()); }
};

struct SvmConfig {
  double C = 1.0;
  int epochs = 200;
  std::uint64_t seed = 0;
};

struct SvmTrainResult {
  LinearSvmModel model;
  /// Summed one-vs-rest objective of the best iterate after each epoch.
  std::vector<double> objectives;
};

/// Trains each one-vs-rest problem by stochastic subgradient descent on
///   lambda/2 |(w,b)|^2 + mean_i max(0, 1 - y_i (w.x_i + b)),  lambda = 1/(C n)
/// with step 1/(lambda t) and projection onto the ball of radius 1/sqrt(lambda).
/// Samples are visited in a per-epoch order drawn from `config.seed`. The
/// subgradient method is not a descent method, so every class keeps its best
/// iterate so far; that iterate is what is reported and returned.
///
/// Rows of `features` are samples. Labels are 0..classes-1 where classes is
/// max(label)+1, and at least two distinct labels must occur.
SvmTrainResult svm_train(const Matrix& features, std::span<const int> labels, const SvmConfig& config);

/// Objective value of a single one-vs-rest problem; exposed for tests.
double svm_objective(const Vector& w, double b, const Matrix& features, std::span<const int> labels, int positive,
                     double lambda);

Vector svm_margins(const LinearSvmModel& model, const Vector& feature);
/// Softmax of the one-vs-rest margins.
Distribution svm_predict(const LinearSvmModel& model, const Vector& feature);

struct FusionConfig {
  double alpha = 0.5;  // weight of the object-level stream
};

/// alpha * p_obj + (1 - alpha) * p_part.
Distribution fuse(const Distribution& p_obj, const Distribution& p_part, const FusionConfig& cfg);

/// Fraction of samples whose argmax (ties to the lowest index) misses the label.
double top1_error(std::span<const Distribution> predictions, std::span<const int> labels);

/// Grid search over alpha = 0, 0.05, ..., 1 minimising validation error;
/// ties go to the alpha closest to 0.5, then to the smaller alpha.
FusionConfig tune_alpha(std::span<const Distribution> val_obj, std::span<const Distribution> val_part,
                        std::span<const int> labels);

/// "TLSV1" | u64 classes | u64 dimension | weights row-major | biases (LE f64).
std::vector<std::uint8_t> save_svm(const LinearSvmModel& model);
LinearSvmModel load_svm(std::span<const std::uint8_t> bytes);

void save_svm_file(const std::string& path, const LinearSvmModel& model);
LinearSvmModel load_svm_file(const std::string& path);

}  // namespace tla
