#include "tla/classify.hpp"

#include "byte_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace tla {

double svm_objective(const Vector& w, double b, const Matrix& features, std::span<const int> labels, int positive,
                     double lambda) {
  double hinge = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double y = labels[static_cast<std::size_t>(i)] == positive ? 1.0 : -1.0;
    hinge += std::max(0.0, 1.0 - y * (features.row(i).dot(w) + b));
  }
  return 0.5 * lambda * (w.squaredNorm() + b * b) + hinge / static_cast<double>(features.rows());
}

SvmTrainResult svm_train(const Matrix& features, std::span<const int> labels, const SvmConfig& config) {
  const Eigen::Index n = features.rows();
  const Eigen::Index dim = features.cols();
  if (n == 0 || static_cast<std::size_t>(n) != labels.size()) throw Error("svm_train: features and labels misaligned");
  if (dim == 0) throw Error("svm_train: zero feature dimension");
  if (!features.allFinite()) throw Error("svm_train: non-finite features");
  if (config.C <= 0.0 || config.epochs < 1) throw Error("svm_train: invalid configuration");
  for (int l : labels)
    if (l < 0) throw Error("svm_train: negative label");
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  if (std::all_of(labels.begin(), labels.end(), [&](int l) { return l == labels[0]; }))
    throw Error("svm_train: at least two classes are required");

  const double lambda = 1.0 / (config.C * static_cast<double>(n));
  const double radius = 1.0 / std::sqrt(lambda);

  // One fixed visiting order per epoch, shared by every one-vs-rest problem.
  std::mt19937_64 rng(config.seed);
  std::vector<std::vector<Eigen::Index>> orders(static_cast<std::size_t>(config.epochs));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  for (auto& o : orders) {
    std::shuffle(order.begin(), order.end(), rng);
    o = order;
  }

  SvmTrainResult result;
  result.model.weights = Matrix::Zero(classes, dim);
  result.model.bias = Vector::Zero(classes);
  result.objectives.assign(static_cast<std::size_t>(config.epochs), 0.0);

  for (int c = 0; c < classes; ++c) {
    Vector w = Vector::Zero(dim);
    double b = 0.0;
    double best = svm_objective(w, b, features, labels, c, lambda);
    Vector best_w = w;
    double best_b = b;
    std::int64_t t = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      for (Eigen::Index i : orders[static_cast<std::size_t>(epoch)]) {
        ++t;
        const double eta = 1.0 / (lambda * static_cast<double>(t));
        const double y = labels[static_cast<std::size_t>(i)] == c ? 1.0 : -1.0;
        const bool violated = y * (features.row(i).dot(w) + b) < 1.0;
        w *= 1.0 - eta * lambda;
        b *= 1.0 - eta * lambda;
        if (violated) {
          w += eta * y * features.row(i).transpose();
          b += eta * y;
        }
        const double norm = std::sqrt(w.squaredNorm() + b * b);
        if (norm > radius) {
          w *= radius / norm;
          b *= radius / norm;
        }
      }
      const double obj = svm_objective(w, b, features, labels, c, lambda);
      if (obj < best) {
        best = obj;
        best_w = w;
        best_b = b;
      }
      result.objectives[static_cast<std::size_t>(epoch)] += best;
    }
    result.model.weights.row(c) = best_w.transpose();
    result.model.bias[c] = best_b;
  }
  return result;
}

Vector svm_margins(const LinearSvmModel& model, const Vector& feature) {
  if (feature.size() != model.dimension())
    throw Error("svm: feature dimension " + std::to_string(feature.size()) + " does not match model dimension " +
                std::to_string(model.dimension()));
  return model.weights * feature + model.bias;
}

Distribution svm_predict(const LinearSvmModel& model, const Vector& feature) {
  return softmax(svm_margins(model, feature));
}

Distribution fuse(const Distribution& p_obj, const Distribution& p_part, const FusionConfig& cfg) {
  if (p_obj.size() != p_part.size()) throw Error("fuse: distribution lengths differ");
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw Error("fuse: alpha must lie in [0,1]");
  if (cfg.alpha == 1.0) return p_obj;
  if (cfg.alpha == 0.0) return p_part;
  return Distribution(cfg.alpha * p_obj.probs() + (1.0 - cfg.alpha) * p_part.probs());
}

double top1_error(std::span<const Distribution> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw Error("top1_error: empty input");
  if (predictions.size() != labels.size()) throw Error("top1_error: predictions and labels misaligned");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i].argmax() != labels[i]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(predictions.size());
}

FusionConfig tune_alpha(std::span<const Distribution> val_obj, std::span<const Distribution> val_part,
                        std::span<const int> labels) {
  if (val_obj.empty() || val_obj.size() != val_part.size() || val_obj.size() != labels.size())
    throw Error("tune_alpha: validation lists are misaligned");
  FusionConfig best{0.5};
  double best_error = 2.0;
  for (int step = 0; step <= 20; ++step) {
    const FusionConfig cfg{step / 20.0};
    std::vector<Distribution> fused;
    fused.reserve(val_obj.size());
    for (std::size_t i = 0; i < val_obj.size(); ++i) fused.push_back(fuse(val_obj[i], val_part[i], cfg));
    const double err = top1_error(fused, labels);
    const double dist = std::abs(cfg.alpha - 0.5);
    const double best_dist = std::abs(best.alpha - 0.5);
    if (err < best_error || (err == best_error && dist < best_dist - 1e-12)) {
      best_error = err;
      best = cfg;
    }
  }
  return best;
}

std::vector<std::uint8_t> save_svm(const LinearSvmModel& model) {
  detail::ByteWriter out;
  out.raw("TLSV1");
  out.u64(static_cast<std::uint64_t>(model.classes()));
  out.u64(static_cast<std::uint64_t>(model.dimension()));
  for (Eigen::Index i = 0; i < model.weights.rows(); ++i)
    for (Eigen::Index j = 0; j < model.weights.cols(); ++j) out.f64(model.weights(i, j));
  for (Eigen::Index i = 0; i < model.bias.size(); ++i) out.f64(model.bias[i]);
  return out.take();
}

LinearSvmModel load_svm(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes);
  in.expect("TLSV1");
  const std::size_t dims_at = in.pos();
  const std::uint64_t classes = in.u64();
  const std::uint64_t dim = in.u64();
  if (classes < 1 || dim < 1 || classes > (1u << 20) || dim > (1u << 24)) throw ParseError("implausible SVM dimensions", dims_at);
  const std::uint64_t expected = (classes * dim + classes) * 8;
  if (in.remaining() != expected)
    throw ParseError("SVM payload has " + std::to_string(in.remaining()) + " bytes, expected " + std::to_string(expected),
                     in.pos());
  LinearSvmModel model;
  model.weights.resize(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(dim));
  model.bias.resize(static_cast<Eigen::Index>(classes));
  for (Eigen::Index i = 0; i < model.weights.rows(); ++i)
    for (Eigen::Index j = 0; j < model.weights.cols(); ++j) model.weights(i, j) = in.f64();
  for (Eigen::Index i = 0; i < model.bias.size(); ++i) model.bias[i] = in.f64();
  if (!model.weights.allFinite() || !model.bias.allFinite()) throw ParseError("non-finite SVM weight", in.pos());
  return model;
}

void save_svm_file(const std::string& path, const LinearSvmModel& model) { detail::write_file(path, save_svm(model)); }

LinearSvmModel load_svm_file(const std::string& path) { return load_svm(detail::read_file(path)); }

}  // namespace tla
