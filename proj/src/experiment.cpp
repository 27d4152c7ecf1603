#include "tla/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tla {

namespace {

ConfigKey key(std::string name, ConfigValue v, std::string help) { return {std::move(name), std::move(v), std::move(help)}; }
ConfigKey ikey(std::string name, std::int64_t v, std::string help) { return key(std::move(name), v, std::move(help)); }
ConfigKey rkey(std::string name, double v, std::string help) { return key(std::move(name), v, std::move(help)); }

void add_training_keys(std::vector<ConfigKey>& keys, const std::string& prefix, const NetTraining& d) {
  keys.push_back(ikey(prefix + ".epochs", d.epochs, "training epochs"));
  keys.push_back(rkey(prefix + ".lr", d.learning_rate, "initial learning rate"));
  keys.push_back(rkey(prefix + ".momentum", d.momentum, "SGD momentum"));
  keys.push_back(rkey(prefix + ".weight_decay", d.weight_decay, "L2 weight decay"));
  keys.push_back(rkey(prefix + ".lr_decay", d.lr_decay, "learning-rate factor applied after each epoch"));
  keys.push_back(ikey(prefix + ".batch", d.batch_size, "minibatch size"));
  keys.push_back(ikey(prefix + ".views", d.views_per_image, "draws per training image per epoch"));
  keys.push_back(rkey(prefix + ".min_zoom", d.min_zoom, "smallest random sub-crop of a drawn box, as a side fraction"));
}

void add_width_keys(std::vector<ConfigKey>& keys, const std::string& prefix, const NetWidths& w) {
  keys.push_back(ikey(prefix + ".c1", w.c1, "channels of the first two conv layers"));
  keys.push_back(ikey(prefix + ".c2", w.c2, "channels of the last two conv layers"));
  keys.push_back(ikey(prefix + ".hidden", w.hidden, "units of the first fc layer"));
}

NetTraining read_training(const Config& c, const std::string& prefix) {
  NetTraining t;
  t.epochs = static_cast<int>(c.integer(prefix + ".epochs"));
  t.learning_rate = c.real(prefix + ".lr");
  t.momentum = c.real(prefix + ".momentum");
  t.weight_decay = c.real(prefix + ".weight_decay");
  t.lr_decay = c.real(prefix + ".lr_decay");
  t.batch_size = static_cast<int>(c.integer(prefix + ".batch"));
  t.views_per_image = static_cast<int>(c.integer(prefix + ".views"));
  t.min_zoom = c.real(prefix + ".min_zoom");
  if (t.min_zoom <= 0.0 || t.min_zoom > 1.0) throw Error(prefix + ".min_zoom must lie in (0,1]");
  if (t.epochs < 1 || t.batch_size < 1 || t.views_per_image < 1 || t.learning_rate < 0.0)
    throw Error(prefix + ": epochs, batch and views must be positive");
  return t;
}

NetWidths read_widths(const Config& c, const std::string& prefix) {
  NetWidths w{static_cast<int>(c.integer(prefix + ".c1")), static_cast<int>(c.integer(prefix + ".c2")),
              static_cast<int>(c.integer(prefix + ".hidden"))};
  if (w.c1 < 1 || w.c2 < 1 || w.hidden < 1) throw Error(prefix + ": layer widths must be positive");
  return w;
}

std::vector<ConfigKey> build_schema() {
  const ExperimentConfig d = [] {
    ExperimentConfig c;
    c.data.background_images = 800;
    c.filternet = {10, 0.01, 0.9, 0.0, 0.85, 32, 1};
    c.domainnet = {14, 0.01, 0.9, 0.0005, 0.85, 32, 2, 0.4};
    c.baseline = {14, 0.01, 0.9, 0.0005, 0.85, 32, 2};
    return c;
  }();
  std::vector<ConfigKey> k;
  k.push_back(ikey("data.image_size", d.data.image_size, "image side in pixels"));
  k.push_back(ikey("data.superclasses", d.data.superclasses, "basic-level categories"));
  k.push_back(ikey("data.fine_per_super", d.data.fine_per_super, "fine classes per superclass"));
  k.push_back(ikey("data.train_per_class", d.data.train_per_class, "training images per fine class"));
  k.push_back(ikey("data.val_per_class", d.data.val_per_class, "validation images per fine class"));
  k.push_back(ikey("data.test_per_class", d.data.test_per_class, "test images per fine class"));
  k.push_back(ikey("data.background_images", d.data.background_images, "clutter-only images for the FilterNet"));
  k.push_back(ikey("data.clutter", d.data.clutter, "clutter shapes per image"));
  k.push_back(rkey("data.noise", d.data.noise, "pixel noise standard deviation"));
  k.push_back(rkey("data.object_min", d.data.object_min, "smallest object side / image side"));
  k.push_back(rkey("data.object_max", d.data.object_max, "largest object side / image side"));
  k.push_back(rkey("data.part_fraction", d.data.part_fraction, "part side / object side"));
  k.push_back(ikey("data.motif_period", d.data.motif_period, "motif period in pixels"));
  k.push_back(rkey("proposal.scale_k", d.proposals.scale_k, "segmentation scale"));
  k.push_back(rkey("proposal.sigma", d.proposals.sigma, "pre-segmentation smoothing"));
  k.push_back(ikey("proposal.min_size", d.proposals.min_size, "smallest initial region in pixels"));
  k.push_back(rkey("proposal.weight_colour", d.proposals.weights.colour, "colour similarity weight"));
  k.push_back(rkey("proposal.weight_size", d.proposals.weights.size, "size similarity weight"));
  k.push_back(rkey("proposal.weight_fill", d.proposals.weights.fill, "fill similarity weight"));
  k.push_back(ikey("net.input", d.net_input, "network input side"));
  add_width_keys(k, "filternet", d.filternet_widths);
  add_training_keys(k, "filternet", d.filternet);
  add_width_keys(k, "domainnet", d.domainnet_widths);
  add_training_keys(k, "domainnet", d.domainnet);
  add_training_keys(k, "baseline", d.baseline);
  k.push_back(rkey("filter.threshold", d.threshold, "FilterNet confidence needed to keep a patch"));
  k.push_back(ikey("filter.max_count", d.max_count, "patches kept per image"));
  k.push_back(ikey("domain.superclass", d.target_superclass, "superclass whose fine classes are the task"));
  k.push_back(ikey("parts.k", d.parts_k, "filter groups at the part layer"));
  k.push_back(rkey("parts.max_area", d.part_max_area, "largest part candidate, as a fraction of the image area"));
  k.push_back(rkey("svm.C", d.svm.C, "SVM regularisation constant"));
  k.push_back(ikey("svm.epochs", d.svm.epochs, "SVM passes over the data"));
  return k;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Image flip_maybe(Image img, std::mt19937_64& rng) {
  return std::bernoulli_distribution(0.5)(rng) ? hflip(img) : img;
}

Box random_square(int image_side, int side, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pos(0, image_side - side);
  const int x = pos(rng);
  const int y = pos(rng);
  return {x, y, side, side};
}

// One random box per draw; a random whole-image crop stands in when the
// image has no boxes.
class PatchSource final : public SampleSource {
 public:
  struct Item {
    const Image* image;
    int label;
    std::vector<Box> boxes;
  };
  PatchSource(std::vector<Item> items, int input, const NetTraining& t, int crop)
      : items_(std::move(items)), input_(input), views_(t.views_per_image), min_zoom_(t.min_zoom), crop_(crop) {}
  std::size_t size() const override { return items_.size() * static_cast<std::size_t>(views_); }
  Sample sample(std::size_t index, std::mt19937_64& rng) const override {
    const Item& it = items_[index % items_.size()];
    Box box;
    if (it.boxes.empty()) {
      box = random_square(it.image->width(), crop_, rng);
    } else {
      box = it.boxes[std::uniform_int_distribution<std::size_t>(0, it.boxes.size() - 1)(rng)];
    }
    if (min_zoom_ < 1.0) {
      const double f = std::uniform_real_distribution<double>(min_zoom_, 1.0)(rng);
      const int w = std::max(1, static_cast<int>(std::lround(box.w * f)));
      const int h = std::max(1, static_cast<int>(std::lround(box.h * f)));
      box = {box.x + std::uniform_int_distribution<int>(0, box.w - w)(rng),
             box.y + std::uniform_int_distribution<int>(0, box.h - h)(rng), w, h};
    }
    return {flip_maybe(warp(*it.image, box, input_, input_), rng), it.label};
  }

 private:
  std::vector<Item> items_;
  int input_;
  int views_;
  double min_zoom_;
  int crop_;
};

TrainConfig train_config(const NetTraining& t, std::uint64_t seed) {
  TrainConfig c;
  c.learning_rate = t.learning_rate;
  c.momentum = t.momentum;
  c.weight_decay = t.weight_decay;
  c.lr_decay = t.lr_decay;
  c.epochs = t.epochs;
  c.batch_size = t.batch_size;
  c.seed = seed;
  return c;
}

std::vector<DomainImage> domain_split(const LabeledDataset& split, const ExperimentConfig& cfg) {
  std::vector<DomainImage> out;
  const int first = cfg.target_superclass * cfg.data.fine_per_super;
  for (const LabeledImage& item : split.items) {
    if (item.superclass != cfg.target_superclass) continue;
    DomainImage d;
    d.item = &item;
    d.label = item.fine - first;
    d.proposals = selective_search(item.image, cfg.proposals).boxes;
    for (const Box& b : d.proposals)
      if (b.area() >= kMinProposalArea) d.candidates.push_back(b);
    if (d.candidates.empty()) d.candidates = d.proposals;
    const double max_area = cfg.part_max_area * item.image.width() * item.image.height();
    for (const Box& b : d.candidates)
      if (b.area() <= max_area) d.part_candidates.push_back(b);
    if (d.part_candidates.empty()) d.part_candidates = d.candidates;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<int> labels_of(std::span<const DomainImage> images) {
  std::vector<int> out;
  for (const auto& d : images) out.push_back(d.label);
  return out;
}

// Ordinal of the best detection in mean vote per filter; ties to the first.
std::size_t best_detection(const PartDetection& det, const PartDetectorBank& bank) {
  std::size_t best = 0;
  double best_vote = -1.0;
  for (std::size_t i = 0; i < det.size(); ++i) {
    const double vote = det[i].score / static_cast<double>(bank.members(det[i].group).size());
    if (vote > best_vote) {
      best_vote = vote;
      best = i;
    }
  }
  return best;
}

}  // namespace

std::span<const ConfigKey> experiment_schema() {
  static const std::vector<ConfigKey> schema = build_schema();
  return schema;
}

ExperimentConfig ExperimentConfig::from(const Config& c) {
  ExperimentConfig e;
  e.data.image_size = static_cast<int>(c.integer("data.image_size"));
  e.data.superclasses = static_cast<int>(c.integer("data.superclasses"));
  e.data.fine_per_super = static_cast<int>(c.integer("data.fine_per_super"));
  e.data.train_per_class = static_cast<int>(c.integer("data.train_per_class"));
  e.data.val_per_class = static_cast<int>(c.integer("data.val_per_class"));
  e.data.test_per_class = static_cast<int>(c.integer("data.test_per_class"));
  e.data.background_images = static_cast<int>(c.integer("data.background_images"));
  e.data.clutter = static_cast<int>(c.integer("data.clutter"));
  e.data.noise = c.real("data.noise");
  e.data.object_min = c.real("data.object_min");
  e.data.object_max = c.real("data.object_max");
  e.data.part_fraction = c.real("data.part_fraction");
  e.data.motif_period = static_cast<int>(c.integer("data.motif_period"));
  e.data.validate();
  e.proposals.scale_k = c.real("proposal.scale_k");
  e.proposals.sigma = c.real("proposal.sigma");
  e.proposals.min_size = static_cast<int>(c.integer("proposal.min_size"));
  e.proposals.weights = {c.real("proposal.weight_colour"), c.real("proposal.weight_size"), c.real("proposal.weight_fill")};
  e.net_input = static_cast<int>(c.integer("net.input"));
  if (e.net_input < 8) throw Error("net.input must be at least 8");
  e.filternet_widths = read_widths(c, "filternet");
  e.domainnet_widths = read_widths(c, "domainnet");
  e.filternet = read_training(c, "filternet");
  e.domainnet = read_training(c, "domainnet");
  e.baseline = read_training(c, "baseline");
  e.threshold = c.real("filter.threshold");
  if (e.threshold < 0.0 || e.threshold > 1.0) throw Error("filter.threshold must lie in [0,1]");
  const auto max_count = c.integer("filter.max_count");
  if (max_count < 1) throw Error("filter.max_count must be positive");
  e.max_count = static_cast<int>(max_count);
  e.target_superclass = static_cast<int>(c.integer("domain.superclass"));
  if (e.target_superclass < 0 || e.target_superclass >= e.data.superclasses)
    throw Error("domain.superclass out of range");
  e.parts_k = static_cast<int>(c.integer("parts.k"));
  if (e.parts_k < 2) throw Error("parts.k must be at least 2");
  e.part_max_area = c.real("parts.max_area");
  if (!(e.part_max_area > 0.0 && e.part_max_area <= 1.0)) throw Error("parts.max_area must be in (0, 1]");
  e.svm.C = c.real("svm.C");
  e.svm.epochs = static_cast<int>(c.integer("svm.epochs"));
  e.config_hash = c.hash();
  return e;
}

ExperimentConfig default_experiment_config() { return ExperimentConfig::from(parse_config("", experiment_schema())); }

std::uint64_t stage_seed(std::uint64_t master, std::string_view stage) { return splitmix64(master ^ fnv1a(stage)); }

Experiment prepare_experiment(const ExperimentConfig& config, std::uint64_t seed) {
  Experiment exp;
  exp.config = config;
  exp.seed = seed;
  exp.data = gen_synthetic(config.data, stage_seed(seed, "data"));
  exp.train = domain_split(exp.data.train, config);
  exp.val = domain_split(exp.data.val, config);
  exp.test = domain_split(exp.data.test, config);
  return exp;
}

NetworkSpec filternet_spec(const ExperimentConfig& c) {
  const auto& w = c.filternet_widths;
  return mini_domain_net({3, c.net_input, c.net_input}, c.data.superclasses + 1, w.c1, w.c2, w.hidden);
}

NetworkSpec domainnet_spec(const ExperimentConfig& c, int classes) {
  const auto& w = c.domainnet_widths;
  return mini_domain_net({3, c.net_input, c.net_input}, classes, w.c1, w.c2, w.hidden);
}

ParentClassSet domain_parents(const ExperimentConfig& c) {
  return ParentClassSet({c.target_superclass}, c.data.superclasses + 1);
}

TrainResult train_filternet(const Experiment& exp, const EpochCallback& on_epoch) {
  const auto& cfg = exp.config;
  std::vector<PatchSource::Item> items;
  auto add = [&](const Image& img, int label) {
    PatchSource::Item it{&img, label, {}};
    for (const Box& b : selective_search(img, cfg.proposals).boxes)
      if (b.area() >= kMinProposalArea) it.boxes.push_back(b);
    items.push_back(std::move(it));
  };
  for (const auto& item : exp.data.train.items) add(item.image, item.superclass);
  for (const auto& img : exp.data.background) add(img, cfg.data.superclasses);
  const PatchSource source(std::move(items), cfg.net_input, cfg.filternet, cfg.crop_side());
  const std::uint64_t seed = stage_seed(exp.seed, "filternet");
  return train(init_network(filternet_spec(cfg), seed), source, train_config(cfg.filternet, seed), on_epoch);
}

std::vector<SelectedPatches> select_all(const Experiment& exp, const Network& filternet,
                                        std::span<const DomainImage> images) {
  const ParentClassSet parents = domain_parents(exp.config);
  std::vector<SelectedPatches> out;
  out.reserve(images.size());
  for (const DomainImage& d : images)
    out.push_back(select_patches(filternet, d.image(), d.proposals, parents, exp.config.threshold,
                                 static_cast<std::size_t>(exp.config.max_count)));
  return out;
}

TrainResult train_domainnet(const Experiment& exp, std::span<const SelectedPatches> train_selection,
                            const EpochCallback& on_epoch) {
  if (train_selection.size() != exp.train.size()) throw Error("train_domainnet: one selection per training image");
  const auto& cfg = exp.config;
  std::vector<PatchSource::Item> items;
  for (std::size_t i = 0; i < exp.train.size(); ++i) {
    PatchSource::Item it{&exp.train[i].image(), exp.train[i].label, {}};
    for (const ScoredBox& s : train_selection[i]) it.boxes.push_back(s.box);
    items.push_back(std::move(it));
  }
  const PatchSource source(std::move(items), cfg.net_input, cfg.domainnet, cfg.crop_side());
  const std::uint64_t seed = stage_seed(exp.seed, "domainnet");
  return train(init_network(domainnet_spec(cfg, cfg.data.fine_per_super), seed), source,
               train_config(cfg.domainnet, seed), on_epoch);
}

TrainResult train_baseline_domain(const Experiment& exp, const EpochCallback& on_epoch) {
  const auto& cfg = exp.config;
  std::vector<PatchSource::Item> items;
  for (const DomainImage& d : exp.train) items.push_back({&d.image(), d.label, {}});
  const PatchSource source(std::move(items), cfg.net_input, cfg.baseline, cfg.crop_side());
  const std::uint64_t seed = stage_seed(exp.seed, "cnn_domain");
  return train(init_network(domainnet_spec(cfg, cfg.data.fine_per_super), seed), source,
               train_config(cfg.baseline, seed), on_epoch);
}

TrainResult train_baseline_multitask(const Experiment& exp, const EpochCallback& on_epoch) {
  const auto& cfg = exp.config;
  if (cfg.data.superclasses < 2) throw Error("multitask baseline needs at least two superclasses");
  std::vector<PatchSource::Item> items;
  for (const LabeledImage& item : exp.data.train.items) items.push_back({&item.image, item.fine, {}});
  const PatchSource source(std::move(items), cfg.net_input, cfg.baseline, cfg.crop_side());
  const std::uint64_t seed = stage_seed(exp.seed, "cnn_multitask");
  return train(init_network(domainnet_spec(cfg, cfg.data.fine_classes()), seed), source,
               train_config(cfg.baseline, seed), on_epoch);
}

Distribution ten_view_prediction(const Network& net, const Image& img, int crop_side) {
  const int in_h = net.spec().input.height;
  const int in_w = net.spec().input.width;
  std::vector<Image> views;
  for (const Image& v : ten_views(img, crop_side)) views.push_back(resize_bilinear(v, in_h, in_w));
  return predict_multiview(net, views);
}

Distribution restrict_distribution(const Distribution& p, int first, int count) {
  if (first < 0 || count < 1 || first + count > p.size()) throw Error("restrict_distribution: range out of bounds");
  const Vector part = p.probs().segment(first, count);
  const double total = part.sum();
  if (!(total > 0.0)) return Distribution::uniform(count);
  return Distribution(part / total);
}

Matrix GroupFeatures::concatenated() const {
  if (features.empty()) throw Error("no group features");
  Eigen::Index cols = 0;
  for (const Matrix& m : features) cols += m.cols();
  Matrix out(features.front().rows(), cols);
  Eigen::Index at = 0;
  for (const Matrix& m : features) {
    out.middleCols(at, m.cols()) = m;
    at += m.cols();
  }
  return out;
}

GroupFeatures GroupFeatures::subset(std::span<const int> keep) const {
  std::vector<std::size_t> at;
  for (int g : keep) {
    const auto it = std::find(groups.begin(), groups.end(), g);
    if (it == groups.end()) throw Error("group " + std::to_string(g) + " has no features");
    at.push_back(static_cast<std::size_t>(it - groups.begin()));
  }
  GroupFeatures out;
  out.groups.assign(keep.begin(), keep.end());
  for (std::size_t j : at) out.features.push_back(features[j]);
  for (const PartDetection& det : detections) {
    PartDetection d;
    for (std::size_t j : at) d.push_back(det[j]);
    out.detections.push_back(std::move(d));
  }
  return out;
}

GroupFeatures compute_group_features(const Network& domainnet, const PartDetectorBank& bank,
                                     std::span<const DomainImage> images, std::span<const int> groups) {
  GroupFeatures out;
  out.groups.assign(groups.begin(), groups.end());
  const auto n = static_cast<Eigen::Index>(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const DomainImage& d = images[i];
    PartDetection det = detect_groups(domainnet, bank, d.image(), d.part_candidates, groups);
    std::vector<Image> patches;
    for (const GroupDetection& g : det) patches.push_back(warp_to_input(d.image(), g.box, domainnet.spec()));
    const Matrix f = extract_features(domainnet, patches);  // columns follow `groups`
    if (out.features.empty()) out.features.assign(groups.size(), Matrix(n, f.rows()));
    for (std::size_t g = 0; g < groups.size(); ++g)
      out.features[g].row(static_cast<Eigen::Index>(i)) = f.col(static_cast<Eigen::Index>(g)).transpose();
    out.detections.push_back(std::move(det));
  }
  return out;
}

PartBankResult build_parts(const Experiment& exp, const Network& domainnet) {
  const auto& cfg = exp.config;
  PartBankResult out;
  out.bank = build_part_bank(domainnet, domainnet.spec().part_layer, cfg.parts_k, stage_seed(exp.seed, "parts"));
  std::vector<int> all(static_cast<std::size_t>(cfg.parts_k));
  for (int g = 0; g < cfg.parts_k; ++g) all[static_cast<std::size_t>(g)] = g;
  out.train_features = compute_group_features(domainnet, out.bank, exp.train, all);
  out.val_features = compute_group_features(domainnet, out.bank, exp.val, all);
  SvmConfig svm = cfg.svm;
  svm.seed = stage_seed(exp.seed, "noise_svm");
  out.group_accuracy = single_group_accuracy(out.train_features.features, labels_of(exp.train),
                                             out.val_features.features, labels_of(exp.val), svm);
  out.bank.noise_group = noise_from_accuracy(out.group_accuracy);
  return out;
}

SvmTrainResult train_part_svm(const Experiment& exp, const Network& domainnet, const PartDetectorBank& bank,
                              const GroupFeatures* train_all) {
  const std::vector<int> groups = bank.part_groups();
  const GroupFeatures train =
      train_all ? train_all->subset(groups) : compute_group_features(domainnet, bank, exp.train, groups);
  SvmConfig svm = exp.config.svm;
  svm.seed = stage_seed(exp.seed, "part_svm");
  return svm_train(train.concatenated(), labels_of(exp.train), svm);
}

Evaluation evaluate_methods(const Experiment& exp, const Models& m, const GroupFeatures* val_all) {
  const auto& cfg = exp.config;
  const int fine = cfg.data.fine_per_super;
  const int first = cfg.target_superclass * fine;
  const std::vector<int> test_labels = labels_of(exp.test);
  const std::vector<int> val_labels = labels_of(exp.val);
  const std::vector<int> groups = m.bank.part_groups();
  Evaluation ev;

  auto object_stream = [&](std::span<const DomainImage> images, double* mean_selected) {
    const std::vector<SelectedPatches> sel = select_all(exp, m.filternet, images);
    std::vector<Distribution> out;
    double total = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      out.push_back(object_level_prediction(m.domainnet, images[i].image(), sel[i], cfg.crop_side()));
      total += static_cast<double>(sel[i].size());
    }
    if (mean_selected) *mean_selected = total / static_cast<double>(images.size());
    return out;
  };
  auto part_stream = [&](std::span<const DomainImage> images, std::vector<PartDetection>* detections,
                         const GroupFeatures* known) {
    GroupFeatures gf = known ? known->subset(groups) : compute_group_features(m.domainnet, m.bank, images, groups);
    const Matrix f = gf.concatenated();
    std::vector<Distribution> out;
    for (Eigen::Index i = 0; i < f.rows(); ++i) out.push_back(svm_predict(m.part_svm, f.row(i).transpose()));
    if (detections) *detections = std::move(gf.detections);
    return out;
  };

  std::vector<Distribution> domain, multitask;
  double proposals = 0.0;
  for (const DomainImage& d : exp.test) {
    domain.push_back(ten_view_prediction(m.baseline_domain, d.image(), cfg.crop_side()));
    multitask.push_back(
        restrict_distribution(ten_view_prediction(m.baseline_multitask, d.image(), cfg.crop_side()), first, fine));
    proposals += static_cast<double>(d.proposals.size());
  }
  ev.mean_proposals = proposals / static_cast<double>(exp.test.size());

  const std::vector<Distribution> val_obj = object_stream(exp.val, nullptr);
  const std::vector<Distribution> val_part = part_stream(exp.val, nullptr, val_all);
  ev.fusion = tune_alpha(val_obj, val_part, val_labels);

  const std::vector<Distribution> test_obj = object_stream(exp.test, &ev.mean_selected);
  const std::vector<Distribution> test_part = part_stream(exp.test, &ev.test_detections, nullptr);
  std::vector<Distribution> fused;
  for (std::size_t i = 0; i < test_obj.size(); ++i) fused.push_back(fuse(test_obj[i], test_part[i], ev.fusion));

  const int n = static_cast<int>(test_labels.size());
  auto record = [&](const char* name, const std::vector<Distribution>& preds) {
    return MethodRecord{name, top1_error(preds, test_labels), n, cfg.config_hash, exp.seed};
  };
  ev.records = {record("cnn_domain", domain), record("cnn_multitask", multitask), record("object_level", test_obj),
                record("part_level", test_part), record("two_level", fused)};

  int hits = 0;
  for (std::size_t i = 0; i < exp.test.size(); ++i) {
    const PartDetection& det = ev.test_detections[i];
    const Box& box = det[best_detection(det, m.bank)].box;
    double best = 0.0;
    for (const Box& part : exp.test[i].item->parts) best = std::max(best, iou(box, part));
    if (best > 0.5) ++hits;
  }
  ev.part_localization = static_cast<double>(hits) / static_cast<double>(exp.test.size());
  return ev;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string diagnostics_json(const PipelineResult& r) {
  nlohmann::json j;
  j["alpha"] = r.evaluation.fusion.alpha;
  j["noise_group"] = r.models.bank.noise_group.value_or(-1);
  j["group_accuracy"] = r.group_accuracy;
  j["part_localization"] = r.evaluation.part_localization;
  j["mean_selected"] = r.evaluation.mean_selected;
  j["mean_proposals"] = r.evaluation.mean_proposals;
  return j.dump() + "\n";
}

PipelineResult run_pipeline(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& work_dir,
                            const Logger& log) {
  const auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const auto losses = [&](const char* stage) {
    return [&say, stage](int epoch, double loss) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%s epoch %d loss %.6f", stage, epoch, loss);
      say(buf);
    };
  };
  const auto stage = [&](const char* name, auto&& body) {
    try {
      return body();
    } catch (const std::exception& e) {
      throw Error(std::string("stage ") + name + ": " + e.what());
    }
  };

  PipelineResult r;
  say("preparing data");
  const Experiment exp = stage("gen-data", [&] { return prepare_experiment(config, seed); });

  say("training FilterNet");
  TrainResult filter = stage("train-filternet", [&] { return train_filternet(exp, losses("filternet")); });
  r.models.filternet = std::move(filter.network);
  r.filternet_losses = std::move(filter.epoch_losses);

  say("selecting patches");
  const auto selection = stage("select", [&] { return select_all(exp, r.models.filternet, exp.train); });

  say("training DomainNet");
  TrainResult domain = stage("train-domainnet", [&] { return train_domainnet(exp, selection, losses("domainnet")); });
  r.models.domainnet = std::move(domain.network);
  r.domainnet_losses = std::move(domain.epoch_losses);

  say("training whole-image baselines");
  TrainResult base = stage("cnn_domain", [&] { return train_baseline_domain(exp, losses("cnn_domain")); });
  r.models.baseline_domain = std::move(base.network);
  r.baseline_domain_losses = std::move(base.epoch_losses);
  TrainResult multi = stage("cnn_multitask", [&] { return train_baseline_multitask(exp, losses("cnn_multitask")); });
  r.models.baseline_multitask = std::move(multi.network);
  r.baseline_multitask_losses = std::move(multi.epoch_losses);

  say("building part detectors");
  PartBankResult parts = stage("build-parts", [&] { return build_parts(exp, r.models.domainnet); });
  r.models.bank = std::move(parts.bank);
  r.group_accuracy = std::move(parts.group_accuracy);

  say("training part SVM");
  SvmTrainResult svm =
      stage("train-svm", [&] { return train_part_svm(exp, r.models.domainnet, r.models.bank, &parts.train_features); });
  r.models.part_svm = std::move(svm.model);
  r.svm_objectives = std::move(svm.objectives);

  say("evaluating");
  r.evaluation = stage("evaluate", [&] { return evaluate_methods(exp, r.models, &parts.val_features); });

  if (!work_dir.empty()) {
    std::filesystem::create_directories(work_dir);
    save_net_file((work_dir / artifact::filternet).string(), r.models.filternet);
    save_net_file((work_dir / artifact::domainnet).string(), r.models.domainnet);
    save_net_file((work_dir / artifact::baseline_domain).string(), r.models.baseline_domain);
    save_net_file((work_dir / artifact::baseline_multitask).string(), r.models.baseline_multitask);
    write_text_file(work_dir / artifact::bank, r.models.bank.to_text());
    save_svm_file((work_dir / artifact::part_svm).string(), r.models.part_svm);
    write_text_file(work_dir / "filternet_losses.jsonl", epoch_series_jsonl(r.filternet_losses));
    write_text_file(work_dir / "domainnet_losses.jsonl", epoch_series_jsonl(r.domainnet_losses));
    write_text_file(work_dir / "cnn_domain_losses.jsonl", epoch_series_jsonl(r.baseline_domain_losses));
    write_text_file(work_dir / "cnn_multitask_losses.jsonl", epoch_series_jsonl(r.baseline_multitask_losses));
    write_text_file(work_dir / "svm_objectives.jsonl", epoch_series_jsonl(r.svm_objectives, "objective"));
    write_text_file(work_dir / artifact::report, report_jsonl(r.evaluation.records));
    write_text_file(work_dir / artifact::diagnostics, diagnostics_json(r));
  }
  return r;
}

}  // namespace tla
