// Acceptance checks: one PASS/FAIL line per criterion.
#include "tla/experiment.hpp"
#include "tla/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>

namespace fs = std::filesystem;
using namespace tla;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS " : "FAIL ") << id << " " << name << ": " << detail << std::endl;
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Image random_image(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix d(s.channels, s.plane());
  for (double& v : d.reshaped()) v = u(rng);
  return Image(s.height, s.width, s.channels, d);
}

// 1. Backprop against central differences.
void gradient_check() {
  const auto start = Clock::now();
  NetworkSpec spec;
  spec.input = {3, 8, 8};
  spec.classes = 4;
  spec.layers = {ConvLayer{4, 3, 1, 1}, ReluLayer{}, MaxPoolLayer{2, 2}, ConvLayer{5, 3, 1, 1}, ReluLayer{},
                 FcLayer{7},           ReluLayer{}, FcLayer{4},         SoftmaxLayer{}};
  spec.part_layer = 3;
  double worst = 0.0;
  Eigen::Index checked = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Network net = init_network(spec, seed);
    std::mt19937_64 rng(seed * 101);
    std::normal_distribution<double> g(0.0, 0.1);
    for (LayerParams& p : net.mutable_params())
      for (double& b : p.bias.reshaped()) b = g(rng);
    std::vector<Sample> batch;
    for (int i = 0; i < 3; ++i) batch.push_back({random_image(spec.input, rng), static_cast<int>(rng() % 4)});
    const auto analytic = loss_and_gradients(net, batch);
    Vector flat(net.parameter_count());
    Eigen::Index at = 0;
    for (const LayerParams& p : analytic.gradients) {
      flat.segment(at, p.weight.size()) = p.weight.reshaped();
      at += p.weight.size();
      flat.segment(at, p.bias.size()) = p.bias;
      at += p.bias.size();
    }
    Network probe = net;
    const Vector numeric = finite_diff_grad(
        [&](const Vector& x) {
          probe.set_flat_parameters(x);
          return loss(probe, batch);
        },
        net.flat_parameters(), 1e-5);
    for (Eigen::Index i = 0; i < flat.size(); ++i)
      worst = std::max(worst, std::abs(flat[i] - numeric[i]) / std::max({std::abs(flat[i]), std::abs(numeric[i]), 1e-6}));
    checked += flat.size();
  }
  const double t = seconds_since(start);
  report(1, "gradient", worst < 1e-4 && t < 30.0,
         fmt("%lld parameters over 5 nets, max relative error %.3g (< 1e-4), %.1f s (< 30 s)",
             static_cast<long long>(checked), worst, t));
}

// 2. Jacobi eigensolver residuals.
void eigen_check() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> size(1, 32);
  std::normal_distribution<double> g(0.0, 1.0);
  double residual = 0.0, reconstruction = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int n = t < 4 ? 32 : size(rng);
    Matrix a(n, n);
    for (double& v : a.reshaped()) v = g(rng);
    const Matrix m = (a + a.transpose()) / 2.0;
    const auto eig = sym_eigen(m);
    for (int i = 0; i < n; ++i)
      residual = std::max(residual, (m * eig.vectors.col(i) - eig.values[i] * eig.vectors.col(i)).cwiseAbs().maxCoeff());
    const Matrix back = eig.vectors * eig.values.asDiagonal() * eig.vectors.transpose();
    reconstruction = std::max(reconstruction, (back - m).cwiseAbs().maxCoeff());
  }
  const double t = seconds_since(start);
  report(2, "eigensolver", residual < 1e-8 && reconstruction < 1e-7 && t < 10.0,
         fmt("100 matrices up to 32x32, max residual %.3g (< 1e-8), reconstruction %.3g (< 1e-7), %.2f s (< 10 s)",
             residual, reconstruction, t));
}

// Brute-force minimum normalised cut over every partition into k non-empty groups.
std::vector<int> min_ncut(const Matrix& s, int k) {
  Matrix a = s.cwiseMax(0.0);
  a.diagonal().setOnes();
  const int n = static_cast<int>(a.rows());
  const Vector degree = a.rowwise().sum();
  std::vector<int> label(static_cast<std::size_t>(n), 0), best_label;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> cut(static_cast<std::size_t>(k)), vol(static_cast<std::size_t>(k));
  // Restricted growth strings enumerate each partition once.
  auto visit = [&] {
    std::fill(cut.begin(), cut.end(), 0.0);
    std::fill(vol.begin(), vol.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      const auto li = static_cast<std::size_t>(label[static_cast<std::size_t>(i)]);
      vol[li] += degree[i];
      for (int j = 0; j < n; ++j)
        if (label[static_cast<std::size_t>(j)] != label[static_cast<std::size_t>(i)]) cut[li] += a(i, j);
    }
    double ncut = 0.0;
    for (int c = 0; c < k; ++c) ncut += cut[static_cast<std::size_t>(c)] / vol[static_cast<std::size_t>(c)];
    if (ncut < best) {
      best = ncut;
      best_label = label;
    }
  };
  auto rec = [&](auto&& self, int i, int used) -> void {
    if (i == n) {
      if (used == k) visit();
      return;
    }
    if (k - used > n - i) return;
    for (int c = 0; c <= std::min(used, k - 1); ++c) {
      label[static_cast<std::size_t>(i)] = c;
      self(self, i + 1, std::max(used, c + 1));
    }
  };
  rec(rec, 0, 0);
  return best_label;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (ab.count(a[i]) && ab[a[i]] != b[i]) return false;
    if (ba.count(b[i]) && ba[b[i]] != a[i]) return false;
    ab[a[i]] = b[i];
    ba[b[i]] = a[i];
  }
  return true;
}

// 3. Spectral clustering against the brute-force normalised cut.
void spectral_check() {
  const auto start = Clock::now();
  std::mt19937_64 rng(3);
  int matches = 0;
  for (int t = 0; t < 50; ++t) {
    const int k = 2 + static_cast<int>(rng() % 2);
    const int n = std::uniform_int_distribution<int>(2 * k, 12)(rng);
    std::vector<int> planted(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) planted[static_cast<std::size_t>(i)] = i < k ? i : static_cast<int>(rng() % k);
    std::shuffle(planted.begin(), planted.end(), rng);
    std::uniform_real_distribution<double> within(0.8, 1.0), across(-0.2, 0.2);
    Matrix s = Matrix::Identity(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        s(i, j) = s(j, i) = planted[static_cast<std::size_t>(i)] == planted[static_cast<std::size_t>(j)] ? within(rng) : across(rng);
    if (same_partition(spectral_cluster(s, k, static_cast<std::uint64_t>(t)), min_ncut(s, k))) ++matches;
  }
  const double t = seconds_since(start);
  report(3, "spectral-clustering", matches >= 48 && t < 30.0,
         fmt("%d/50 partitions equal the brute-force minimum normalised cut (>= 48), %.1f s (< 30 s)", matches, t));
}

// 4. Selective search invariants.
void proposal_check(const ExperimentConfig& cfg) {
  SyntheticSpec spec = cfg.data;
  spec.train_per_class = 13;
  spec.val_per_class = 1;
  spec.test_per_class = 1;
  spec.background_images = 0;
  const SyntheticBenchmark data = gen_synthetic(spec, 4);
  int images = 0, bad_bounds = 0, bad_partition = 0, bad_merges = 0;
  for (const LabeledImage& it : data.train.items) {
    if (images == 100) break;
    ++images;
    const ProposalSet ps = selective_search(it.image, cfg.proposals);
    for (const Box& b : ps.boxes)
      if (!b.inside(it.image.height(), it.image.width())) ++bad_bounds;
    const Segmentation& seg = ps.segmentation;
    std::vector<int> sizes(static_cast<std::size_t>(seg.region_count), 0);
    bool ok = static_cast<int>(seg.labels.size()) == it.image.height() * it.image.width();
    for (int l : seg.labels) {
      if (l < 0 || l >= seg.region_count) {
        ok = false;
        break;
      }
      ++sizes[static_cast<std::size_t>(l)];
    }
    if (!ok || std::count(sizes.begin(), sizes.end(), 0) > 0) ++bad_partition;
    if (ps.merge_count != ps.initial_regions - 1 || ps.initial_regions != seg.region_count) ++bad_merges;
  }
  const ProposalSet flat = selective_search(Image::constant(64, 64, 3, 0.4), cfg.proposals);
  report(4, "proposals", images == 100 && bad_bounds == 0 && bad_partition == 0 && bad_merges == 0 && flat.boxes.size() == 1,
         fmt("%d images: %d out-of-bounds boxes, %d bad partitions, %d bad merge counts; constant image gives %zu proposal(s)",
             images, bad_bounds, bad_partition, bad_merges, flat.boxes.size()));
}

// 5. Object-attention contracts on a trained FilterNet.
void object_attention_check(const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  cfg.data.train_per_class = 10;
  cfg.data.val_per_class = 1;
  cfg.data.test_per_class = 1;
  cfg.data.background_images = 40;
  cfg.filternet.epochs = 2;
  const Experiment exp = prepare_experiment(cfg, 5);
  const Network filternet = train_filternet(exp).network;
  const ParentClassSet parents = domain_parents(cfg);
  const ParentClassSet others = parents.complement(filternet.spec().classes);
  const Network domainnet = init_network(domainnet_spec(cfg, cfg.data.fine_per_super), 5);

  int images = 0, subset_violations = 0, permutation_failures = 0;
  double worst_identity = 0.0;
  std::mt19937_64 rng(5);
  for (const DomainImage& d : exp.train) {
    if (images == 20) break;
    ++images;
    std::vector<Box> previous;
    bool first = true;
    for (int step = 0; step <= 20; ++step) {
      const double t = step / 20.0;
      std::vector<Box> kept;
      for (const ScoredBox& s : select_patches(filternet, d.image(), d.proposals, parents, t, d.proposals.size()))
        kept.push_back(s.box);
      std::sort(kept.begin(), kept.end());
      if (!first && !std::includes(previous.begin(), previous.end(), kept.begin(), kept.end())) ++subset_violations;
      previous = kept;
      first = false;
    }
    const auto a = proposal_confidences(filternet, d.image(), d.candidates, parents);
    const auto b = proposal_confidences(filternet, d.image(), d.candidates, others);
    for (std::size_t i = 0; i < a.size(); ++i) worst_identity = std::max(worst_identity, std::abs(a[i] + b[i] - 1.0));

    std::vector<Image> patches;
    for (std::size_t i = 0; i < std::min<std::size_t>(12, d.candidates.size()); ++i)
      patches.push_back(warp_to_input(d.image(), d.candidates[i], domainnet.spec()));
    const Distribution reference = predict_multiview(domainnet, patches);
    for (int s = 0; s < 10; ++s) {
      std::shuffle(patches.begin(), patches.end(), rng);
      if (!(predict_multiview(domainnet, patches) == reference)) ++permutation_failures;
    }
  }
  report(5, "object-attention", images == 20 && subset_violations == 0 && permutation_failures == 0 && worst_identity <= 1e-12,
         fmt("%d images: %d threshold-subset violations over 21 thresholds, %d/%d shuffles not bit-identical, "
             "max |score(S)+score(S^c)-1| = %.3g (<= 1e-12)",
             images, subset_violations, permutation_failures, images * 10, worst_identity));
}

// 6. Linear SVM.
void svm_check() {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  Matrix x(80, 2);
  std::vector<int> y;
  for (int i = 0; i < 80; ++i) {
    const int label = i % 2;
    x(i, 0) = (label ? 1.5 : -1.5) + u(rng);
    x(i, 1) = (label ? 1.0 : -1.0) + u(rng);
    y.push_back(label);
  }
  SvmConfig cfg;
  cfg.epochs = 100;
  const LinearSvmModel m = svm_train(x, y, cfg).model;
  int correct = 0;
  for (int i = 0; i < 80; ++i) correct += svm_predict(m, x.row(i).transpose()).argmax() == y[static_cast<std::size_t>(i)];

  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 r(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix f(60, 6);
    for (double& v : f.reshaped()) v = g(r);
    std::vector<int> l;
    for (int i = 0; i < 60; ++i) l.push_back(static_cast<int>(r() % 3));
    SvmConfig c;
    c.epochs = 40;
    c.seed = seed;
    const auto res = svm_train(f, l, c);
    bool ok = true;
    for (std::size_t e = 1; e < res.objectives.size(); ++e) ok = ok && res.objectives[e] <= res.objectives[e - 1];
    monotone += ok;
  }
  report(6, "svm", correct == 80 && monotone == 20,
         fmt("training accuracy %d/80 on separable 2D clouds; objective non-increasing for %d/20 seeds", correct, monotone));
}

// 7 and 8. Default benchmark over seeds 1-5.
void end_to_end_check(const ExperimentConfig& cfg) {
  std::map<std::string, double> mean;
  double localization = 0.0, slowest = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto start = Clock::now();
    const PipelineResult r = run_pipeline(cfg, seed, {});
    const double t = seconds_since(start);
    slowest = std::max(slowest, t);
    std::cout << "  seed " << seed << ":";
    for (const MethodRecord& m : r.evaluation.records) {
      mean[m.method] += m.top1_error / 5.0;
      std::cout << " " << m.method << "=" << fmt("%.3f", m.top1_error);
    }
    localization += r.evaluation.part_localization / 5.0;
    std::cout << fmt(" localization=%.3f alpha=%.2f (%.0f s)", r.evaluation.part_localization, r.evaluation.fusion.alpha, t)
              << std::endl;
  }
  const double two = mean["two_level"], obj = mean["object_level"], dom = mean["cnn_domain"];
  report(7, "ordering", two <= obj - 0.02 && obj <= dom - 0.05 && slowest < 600.0,
         fmt("mean top-1 error two_level %.4f, object_level %.4f, cnn_domain %.4f, cnn_multitask %.4f, part_level %.4f; "
             "need two_level <= object_level - 0.02 and object_level <= cnn_domain - 0.05; slowest run %.0f s (< 600 s)",
             two, obj, dom, mean["cnn_multitask"], mean["part_level"], slowest));
  report(8, "part-localization", localization >= 0.70,
         fmt("best non-noise detection has IoU > 0.5 with a true part on %.1f%% of test images (>= 70%%), mean of seeds 1-5",
             100.0 * localization));
}

std::string file_bytes(const fs::path& p) { return read_text_file(p); }

// 9. Two CLI runs with the same seed.
void determinism_check() {
  const fs::path root = fs::temp_directory_path() / "tla_acceptance_determinism";
  fs::remove_all(root);
  int codes[2];
  for (int i = 0; i < 2; ++i) {
    const std::string cmd = std::string(TLA_BIN) + " --seed 7 --work " + (root / std::to_string(i)).string() +
                            " run-all > /dev/null 2>&1";
    codes[i] = std::system(cmd.c_str());
  }
  std::set<std::string> names;
  for (int i = 0; i < 2; ++i)
    if (fs::exists(root / std::to_string(i)))
      for (const auto& e : fs::directory_iterator(root / std::to_string(i))) names.insert(e.path().filename().string());
  int differing = 0;
  for (const std::string& n : names) {
    const fs::path a = root / "0" / n, b = root / "1" / n;
    if (!fs::exists(a) || !fs::exists(b) || file_bytes(a) != file_bytes(b)) ++differing;
  }
  const bool has_all = names.count(artifact::report) && names.count(artifact::domainnet) &&
                       names.count(artifact::filternet) && names.count(artifact::part_svm) && names.count(artifact::bank);
  report(9, "determinism", codes[0] == 0 && codes[1] == 0 && has_all && differing == 0,
         fmt("run-all --seed 7 twice: exit codes %d/%d, %zu artifact files compared, %d differ", codes[0], codes[1],
             names.size(), differing));
  fs::remove_all(root);
}

// 10. Model files.
void serialization_check(const ExperimentConfig& cfg) {
  const Network net = init_network(domainnet_spec(cfg, cfg.data.fine_per_super), 10);
  const fs::path dir = fs::temp_directory_path() / "tla_acceptance_models";
  fs::create_directories(dir);
  save_net_file((dir / "net.tlan").string(), net);
  const Network back = load_net_file((dir / "net.tlan").string());

  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 1.0);
  LinearSvmModel svm{Matrix(4, 128), Vector(4)};
  for (double& v : svm.weights.reshaped()) v = g(rng);
  for (double& v : svm.bias.reshaped()) v = g(rng);
  save_svm_file((dir / "part.tlsv").string(), svm);
  const LinearSvmModel svm_back = load_svm_file((dir / "part.tlsv").string());

  int net_equal = 0, svm_equal = 0;
  for (int i = 0; i < 100; ++i) {
    const Image img = random_image(net.spec().input, rng);
    net_equal += forward(back, img).output == forward(net, img).output &&
                 extract_feature(back, img) == extract_feature(net, img);
    Vector x(128);
    for (double& v : x.reshaped()) v = g(rng);
    svm_equal += svm_margins(svm_back, x) == svm_margins(svm, x) && svm_predict(svm_back, x) == svm_predict(svm, x);
  }
  fs::remove_all(dir);
  report(10, "serialization", net_equal == 100 && svm_equal == 100,
         fmt("network outputs identical on %d/100 inputs, SVM outputs identical on %d/100 inputs", net_equal, svm_equal));
}

}  // namespace

// Optional arguments pick criteria by number; criteria 7 and 8 share one set of runs.
int main(int argc, char** argv) {
  configure_allocator();
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const auto want = [&](int id) { return only.empty() || only.count(id) > 0; };
  const ExperimentConfig cfg = default_experiment_config();
  if (want(1)) gradient_check();
  if (want(2)) eigen_check();
  if (want(3)) spectral_check();
  if (want(4)) proposal_check(cfg);
  if (want(5)) object_attention_check(cfg);
  if (want(6)) svm_check();
  if (want(7) || want(8)) end_to_end_check(cfg);
  if (want(9)) determinism_check();
  if (want(10)) serialization_check(cfg);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
