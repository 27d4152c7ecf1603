#pragma once

#include "tla/classify.hpp"
#include "tla/config.hpp"
#include "tla/convnet.hpp"
#include "tla/object_attention.hpp"
#include "tla/part_attention.hpp"
#include "tla/region_proposal.hpp"
#include "tla/report.hpp"
#include "tla/synthetic.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tla {

/// Keys accepted by experiment config files, with the shipped defaults.
std::span<const ConfigKey> experiment_schema();

struct NetTraining {
  int epochs = 10;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double lr_decay = 1.0;
  int batch_size = 32;
  /// Draws per training image per epoch.
  int views_per_image = 1;
  /// Each drawn box is sub-cropped to a random fraction in [min_zoom, 1] of
  /// its sides; 1 disables the zoom.
  double min_zoom = 1.0;
};

struct NetWidths {
  int c1 = 16;
  int c2 = 32;
  int hidden = 64;
};

struct ExperimentConfig {
  SyntheticSpec data;
  ProposalParams proposals;
  /// Side of the square network input every patch is warped to.
  int net_input = 32;
  NetWidths filternet_widths{8, 16, 32};
  NetWidths domainnet_widths;
  NetTraining filternet;
  NetTraining domainnet;
  NetTraining baseline;
  double threshold = 0.9;
  int max_count = 40;
  int target_superclass = 0;
  int parts_k = 3;
  /// Part candidates are limited to proposals no larger than this fraction
  /// of the image area.
  double part_max_area = 0.0625;
  SvmConfig svm;
  std::string config_hash;

  static ExperimentConfig from(const Config& config);
  /// Side of the whole-image crops used by the baselines (7/8 of the image).
  int crop_side() const { return data.image_size * 7 / 8; }
};

ExperimentConfig default_experiment_config();

/// Independent seed for one named stage of a run.
std::uint64_t stage_seed(std::uint64_t master, std::string_view stage);

/// A target-superclass image with its label local to the domain and its
/// bottom-up proposals.
struct DomainImage {
  const LabeledImage* item = nullptr;
  int label = 0;
  std::vector<Box> proposals;
  /// Proposals of at least kMinProposalArea pixels.
  std::vector<Box> candidates;
  /// Candidates no larger than ExperimentConfig::part_max_area; these feed
  /// part detection.
  std::vector<Box> part_candidates;

  const Image& image() const { return item->image; }
};

struct Experiment {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  SyntheticBenchmark data;
  std::vector<DomainImage> train, val, test;

  Experiment() = default;
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;
  Experiment(Experiment&&) = default;
  Experiment& operator=(Experiment&&) = default;
};

/// Generates the benchmark and runs selective search on the domain images.
Experiment prepare_experiment(const ExperimentConfig& config, std::uint64_t seed);

NetworkSpec filternet_spec(const ExperimentConfig& config);
NetworkSpec domainnet_spec(const ExperimentConfig& config, int classes);
ParentClassSet domain_parents(const ExperimentConfig& config);

/// FilterNet over superclasses plus background. Each draw is one random
/// bottom-up proposal of a training or clutter-only image, labelled with the
/// image's superclass or as background.
TrainResult train_filternet(const Experiment& exp, const EpochCallback& on_epoch = {});

std::vector<SelectedPatches> select_all(const Experiment& exp, const Network& filternet,
                                        std::span<const DomainImage> images);

/// DomainNet on the selected patches; each draw is one random selected
/// patch of a training image, flipped with probability 1/2.
TrainResult train_domainnet(const Experiment& exp, std::span<const SelectedPatches> train_selection,
                            const EpochCallback& on_epoch = {});

/// Whole-image network over the domain's fine classes, trained on random
/// 7/8 crops.
TrainResult train_baseline_domain(const Experiment& exp, const EpochCallback& on_epoch = {});
/// Whole-image network over the fine classes of every superclass.
TrainResult train_baseline_multitask(const Experiment& exp, const EpochCallback& on_epoch = {});

/// Ten-view averaged prediction of a whole-image network.
Distribution ten_view_prediction(const Network& net, const Image& img, int crop_side);

/// The `count` coordinates starting at `first`, renormalised.
Distribution restrict_distribution(const Distribution& p, int first, int count);

/// Per-image detections and FC1 features for a set of groups.
struct GroupFeatures {
  std::vector<int> groups;
  std::vector<PartDetection> detections;
  /// One matrix per entry of `groups`; row i belongs to image i.
  std::vector<Matrix> features;

  /// Concatenation of the group features, in the order of `groups`.
  Matrix concatenated() const;
  /// The same images restricted to `keep`, each of which must be in `groups`.
  GroupFeatures subset(std::span<const int> keep) const;
};

GroupFeatures compute_group_features(const Network& domainnet, const PartDetectorBank& bank,
                                     std::span<const DomainImage> images, std::span<const int> groups);

struct PartBankResult {
  PartDetectorBank bank;
  std::vector<double> group_accuracy;
  /// Every group's features on the training and validation images.
  GroupFeatures train_features;
  GroupFeatures val_features;
};

/// Clusters the DomainNet part layer and marks the noise group by
/// single-group validation accuracy.
PartBankResult build_parts(const Experiment& exp, const Network& domainnet);

/// `train_all`, when given, holds features of at least the bank's part
/// groups on the training images and is used instead of recomputing them.
SvmTrainResult train_part_svm(const Experiment& exp, const Network& domainnet, const PartDetectorBank& bank,
                              const GroupFeatures* train_all = nullptr);

struct Models {
  Network filternet;
  Network domainnet;
  Network baseline_domain;
  Network baseline_multitask;
  PartDetectorBank bank;
  LinearSvmModel part_svm;
};

struct Evaluation {
  std::vector<MethodRecord> records;
  FusionConfig fusion;
  std::vector<PartDetection> test_detections;
  /// Fraction of test images whose best non-noise detection (highest mean
  /// vote per filter) overlaps a true part with IoU above 0.5.
  double part_localization = 0.0;
  double mean_selected = 0.0;
  double mean_proposals = 0.0;
};

/// Test-split evaluation of the five methods; alpha is tuned on validation.
/// `val_all` plays the role of `train_all` in train_part_svm.
Evaluation evaluate_methods(const Experiment& exp, const Models& models, const GroupFeatures* val_all = nullptr);

using Logger = std::function<void(const std::string&)>;

struct PipelineResult {
  Models models;
  Evaluation evaluation;
  std::vector<double> group_accuracy;
  std::vector<double> filternet_losses;
  std::vector<double> domainnet_losses;
  std::vector<double> baseline_domain_losses;
  std::vector<double> baseline_multitask_losses;
  std::vector<double> svm_objectives;
};

/// Every stage in order. When `work_dir` is non-empty the models, bank,
/// loss series, report and diagnostics are written there.
PipelineResult run_pipeline(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& work_dir,
                            const Logger& log = {});

/// Artifact file names inside a work directory.
namespace artifact {
inline constexpr const char* filternet = "filternet.tlan";
inline constexpr const char* domainnet = "domainnet.tlan";
inline constexpr const char* baseline_domain = "cnn_domain.tlan";
inline constexpr const char* baseline_multitask = "cnn_multitask.tlan";
inline constexpr const char* bank = "parts.bank";
inline constexpr const char* part_svm = "part_svm.tlsv";
inline constexpr const char* report = "report.jsonl";
inline constexpr const char* diagnostics = "diagnostics.jsonl";
}  // namespace artifact

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// Diagnostics record written next to the report.
std::string diagnostics_json(const PipelineResult& result);

}  // namespace tla
