#include "tla/part_attention.hpp"

#include "tla/object_attention.hpp"

#include <algorithm>
#include <sstream>

namespace tla {

Matrix filter_similarity_matrix(const Network& net, int layer) {
  const auto& layers = net.spec().layers;
  if (layer < 0 || layer >= static_cast<int>(layers.size()) ||
      !std::holds_alternative<ConvLayer>(layers[static_cast<std::size_t>(layer)]))
    throw Error("filter_similarity_matrix: layer " + std::to_string(layer) + " is not a conv layer");
  const Matrix& w = net.params()[static_cast<std::size_t>(layer)].weight;
  const Eigen::Index n = w.rows();
  Matrix s = Matrix::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double c = cosine_similarity(w.row(i), w.row(j));
      s(i, j) = c;
      s(j, i) = c;
    }
  return s;
}

Matrix normalized_laplacian(const Matrix& similarity) {
  if (similarity.rows() != similarity.cols()) throw Error("similarity matrix must be square");
  Matrix a = similarity.cwiseMax(0.0);
  a.diagonal().setOnes();
  const Vector inv_sqrt_degree = a.rowwise().sum().cwiseSqrt().cwiseInverse();
  Matrix l = -(inv_sqrt_degree.asDiagonal() * a * inv_sqrt_degree.asDiagonal());
  l.diagonal().array() += 1.0;
  return (l + l.transpose()) / 2.0;
}

std::vector<int> spectral_cluster(const Matrix& similarity, int k, std::uint64_t seed) {
  const Eigen::Index n = similarity.rows();
  if (k < 1) throw Error("spectral_cluster: k must be at least 1");
  if (k > n) throw Error("spectral_cluster: k exceeds the number of filters");
  if (k == 1) return std::vector<int>(static_cast<std::size_t>(n), 0);
  const auto eig = sym_eigen(normalized_laplacian(similarity));
  Matrix embedding = eig.vectors.leftCols(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = embedding.row(i).norm();
    if (norm > 0.0) embedding.row(i) /= norm;
  }
  return kmeans(embedding, k, seed);
}

std::vector<int> PartDetectorBank::members(int group) const {
  std::vector<int> out;
  for (std::size_t f = 0; f < assignment.size(); ++f)
    if (assignment[f] == group) out.push_back(static_cast<int>(f));
  return out;
}

std::vector<int> PartDetectorBank::part_groups() const {
  std::vector<int> out;
  for (int g = 0; g < k; ++g)
    if (!noise_group || *noise_group != g) out.push_back(g);
  return out;
}

void PartDetectorBank::validate() const {
  if (k < 1) throw Error("part bank: k must be at least 1");
  if (assignment.size() < static_cast<std::size_t>(k)) throw Error("part bank: fewer filters than groups");
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int g : assignment) {
    if (g < 0 || g >= k) throw Error("part bank: group id out of range");
    ++counts[static_cast<std::size_t>(g)];
  }
  if (std::find(counts.begin(), counts.end(), 0) != counts.end()) throw Error("part bank: empty group");
  if (noise_group && (*noise_group < 0 || *noise_group >= k)) throw Error("part bank: noise group out of range");
}

std::string PartDetectorBank::to_text() const {
  std::ostringstream out;
  out << "layer " << layer << "\nk " << k << "\nassignment";
  for (int g : assignment) out << ' ' << g;
  out << "\nnoise " << (noise_group ? std::to_string(*noise_group) : std::string("none")) << '\n';
  return out.str();
}

PartDetectorBank PartDetectorBank::parse(std::string_view text) {
  PartDetectorBank bank;
  std::istringstream lines{std::string(text)};
  std::string line;
  bool seen_noise = false;
  int number = 0;
  while (std::getline(lines, line)) {
    ++number;
    std::istringstream in(line);
    std::string key;
    if (!(in >> key)) continue;
    const auto fail = [&] { return Error("part bank: malformed '" + key + "' on line " + std::to_string(number)); };
    if (key == "layer") {
      if (!(in >> bank.layer)) throw fail();
    } else if (key == "k") {
      if (!(in >> bank.k)) throw fail();
    } else if (key == "assignment") {
      int g = 0;
      while (in >> g) bank.assignment.push_back(g);
      if (!in.eof()) throw fail();
    } else if (key == "noise") {
      std::string v;
      if (!(in >> v)) throw fail();
      seen_noise = true;
      if (v != "none") {
        try {
          bank.noise_group = std::stoi(v);
        } catch (const std::exception&) {
          throw fail();
        }
      }
    } else {
      throw Error("part bank: unknown key '" + key + "' on line " + std::to_string(number));
    }
  }
  if (!seen_noise) throw Error("part bank: missing noise line");
  bank.validate();
  return bank;
}

PartDetectorBank build_part_bank(const Network& net, int layer, int k, std::uint64_t seed) {
  PartDetectorBank bank;
  bank.layer = layer;
  bank.k = k;
  bank.assignment = spectral_cluster(filter_similarity_matrix(net, layer), k, seed);
  bank.validate();
  return bank;
}

namespace {

int response_layer(const Network& net, const PartDetectorBank& bank) {
  const auto& layers = net.spec().layers;
  if (bank.layer < 0 || bank.layer >= static_cast<int>(layers.size()) ||
      !std::holds_alternative<ConvLayer>(layers[static_cast<std::size_t>(bank.layer)]))
    throw Error("part bank layer is not a conv layer of this network");
  if (static_cast<Eigen::Index>(bank.assignment.size()) != net.params()[static_cast<std::size_t>(bank.layer)].weight.rows())
    throw Error("part bank filter count does not match the network layer");
  const auto next = static_cast<std::size_t>(bank.layer) + 1;
  return next < layers.size() && std::holds_alternative<ReluLayer>(layers[next]) ? bank.layer + 1 : bank.layer;
}

}  // namespace

Matrix group_scores(const Network& net, const PartDetectorBank& bank, std::span<const Image> patches) {
  bank.validate();
  const int layer = response_layer(net, bank);
  const Eigen::Index plane = net.spec().output_shapes()[static_cast<std::size_t>(layer)].plane();
  Matrix scores = Matrix::Zero(bank.k, static_cast<Eigen::Index>(patches.size()));
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < patches.size(); start += kChunk) {
    const auto chunk = patches.subspan(start, std::min(kChunk, patches.size() - start));
    const BatchTrace trace = forward_batch(net, chunk, layer);
    const Activations& act = trace.activations.back();
    for (std::size_t n = 0; n < chunk.size(); ++n) {
      // Each filter votes with its strongest response; groups sum their votes.
      const Vector peaks = act.middleCols(static_cast<Eigen::Index>(n) * plane, plane).rowwise().maxCoeff();
      for (std::size_t f = 0; f < bank.assignment.size(); ++f)
        scores(bank.assignment[f], static_cast<Eigen::Index>(start + n)) += peaks[static_cast<Eigen::Index>(f)];
    }
  }
  return scores;
}

double detection_score(const Network& net, const PartDetectorBank& bank, int group, const Image& patch) {
  if (group < 0 || group >= bank.k) throw Error("detection_score: invalid group " + std::to_string(group));
  if (bank.noise_group && *bank.noise_group == group)
    throw Error("detection_score: group " + std::to_string(group) + " is the noise group");
  return group_scores(net, bank, std::span<const Image>(&patch, 1))(group, 0);
}

PartDetection detect_groups(const Network& net, const PartDetectorBank& bank, const Image& img,
                            std::span<const Box> proposals, std::span<const int> groups) {
  if (proposals.empty()) throw Error("detect_parts: no proposals");
  std::vector<Image> patches;
  patches.reserve(proposals.size());
  for (const Box& b : proposals) patches.push_back(warp_to_input(img, b, net.spec()));
  const Matrix scores = group_scores(net, bank, patches);
  PartDetection out;
  for (int g : groups) {
    if (g < 0 || g >= bank.k) throw Error("detect_parts: invalid group " + std::to_string(g));
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j)
      if (scores(g, j) > scores(g, best)) best = j;
    out.push_back({g, proposals[static_cast<std::size_t>(best)], scores(g, best)});
  }
  return out;
}

PartDetection detect_parts(const Network& net, const PartDetectorBank& bank, const Image& img,
                           std::span<const Box> proposals) {
  const std::vector<int> groups = bank.part_groups();
  return detect_groups(net, bank, img, proposals, groups);
}

Vector part_feature(const Network& net, const Image& img, const PartDetection& detection) {
  if (detection.empty()) throw Error("part_feature: empty detection");
  std::vector<Image> patches;
  for (const GroupDetection& d : detection) patches.push_back(warp_to_input(img, d.box, net.spec()));
  const Matrix features = extract_features(net, patches);
  return features.reshaped();
}

std::vector<double> group_validation_accuracy(const Network& net, const PartDetectorBank& bank,
                                              std::span<const PartSample> train, std::span<const PartSample> validation,
                                              const SvmConfig& svm) {
  if (bank.k < 2) throw Error("cannot designate noise with one group");
  if (train.empty() || validation.empty()) throw Error("noise identification needs train and validation samples");
  std::vector<int> all(static_cast<std::size_t>(bank.k));
  for (int g = 0; g < bank.k; ++g) all[static_cast<std::size_t>(g)] = g;

  // Per split: one feature matrix per group, rows are samples.
  auto features_by_group = [&](std::span<const PartSample> split) {
    std::vector<Matrix> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
      const PartDetection det = detect_groups(net, bank, split[i].image, split[i].proposals, all);
      for (const GroupDetection& d : det) {
        const Vector f = extract_feature(net, warp_to_input(split[i].image, d.box, net.spec()));
        if (out.size() <= static_cast<std::size_t>(d.group)) out.resize(static_cast<std::size_t>(bank.k));
        Matrix& m = out[static_cast<std::size_t>(d.group)];
        if (m.size() == 0) m.resize(static_cast<Eigen::Index>(split.size()), f.size());
        m.row(static_cast<Eigen::Index>(i)) = f.transpose();
      }
    }
    return out;
  };
  const std::vector<Matrix> train_features = features_by_group(train);
  const std::vector<Matrix> val_features = features_by_group(validation);
  std::vector<int> train_labels, val_labels;
  for (const auto& s : train) train_labels.push_back(s.label);
  for (const auto& s : validation) val_labels.push_back(s.label);

  return single_group_accuracy(train_features, train_labels, val_features, val_labels, svm);
}

std::vector<double> single_group_accuracy(std::span<const Matrix> train_features, std::span<const int> train_labels,
                                          std::span<const Matrix> val_features, std::span<const int> val_labels,
                                          const SvmConfig& svm) {
  if (train_features.size() != val_features.size()) throw Error("single_group_accuracy: group counts differ");
  std::vector<double> accuracy;
  for (std::size_t g = 0; g < train_features.size(); ++g) {
    const LinearSvmModel model = svm_train(train_features[g], train_labels, svm).model;
    const Matrix& vf = val_features[g];
    std::vector<Distribution> preds;
    for (Eigen::Index i = 0; i < vf.rows(); ++i) preds.push_back(svm_predict(model, vf.row(i).transpose()));
    accuracy.push_back(1.0 - top1_error(preds, val_labels));
  }
  return accuracy;
}

int noise_from_accuracy(std::span<const double> accuracy) {
  if (accuracy.size() < 2) throw Error("cannot designate noise with one group");
  int worst = 0;
  for (std::size_t g = 1; g < accuracy.size(); ++g)
    if (accuracy[g] < accuracy[static_cast<std::size_t>(worst)]) worst = static_cast<int>(g);
  return worst;
}

int identify_noise_cluster(const Network& net, const PartDetectorBank& bank, std::span<const PartSample> train,
                           std::span<const PartSample> validation, const SvmConfig& svm) {
  if (bank.k < 2) throw Error("cannot designate noise with one group");
  const std::vector<double> acc = group_validation_accuracy(net, bank, train, validation, svm);
  return noise_from_accuracy(acc);
}

}  // namespace tla
