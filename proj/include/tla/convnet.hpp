#pragma once

#include "tla/imaging.hpp"
#include "tla/numerics.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tla {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  Eigen::Index plane() const { return static_cast<Eigen::Index>(height) * width; }
  Eigen::Index size() const { return plane() * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct ConvLayer {
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
};
struct ReluLayer {};
struct MaxPoolLayer {
  int kernel = 2;
  int stride = 2;
};
struct FcLayer {
  int out_units = 0;
};
struct SoftmaxLayer {};

using Layer = std::variant<ConvLayer, ReluLayer, MaxPoolLayer, FcLayer, SoftmaxLayer>;

std::string layer_name(const Layer& layer);

/// Architecture description. `part_layer` indexes the conv layer whose
/// filters serve part attention.
struct NetworkSpec {
  Shape input;
  int classes = 0;
  std::vector<Layer> layers;
  int part_layer = -1;

  /// Output shape of every layer; throws naming the first inconsistent layer.
  std::vector<Shape> output_shapes() const;
  void validate() const;

  /// Index of the first fully connected layer, or -1.
  int first_fc() const;

  std::string to_text() const;
  static NetworkSpec parse(std::string_view text);

  friend bool operator==(const NetworkSpec& a, const NetworkSpec& b) { return a.to_text() == b.to_text(); }
};

/// conv3x3(c1)-relu-pool2, conv3x3(c1)-relu-pool2, conv3x3(c2)-relu (part layer),
/// conv3x3(c2)-relu-pool2, fc(hidden)-relu, fc(classes)-softmax.
NetworkSpec mini_domain_net(Shape input, int classes, int c1 = 16, int c2 = 32, int hidden = 64);

/// Weight matrix and bias of one layer; both empty for parameter-free layers.
///
/// Conv weights are out_channels x (in_channels*k*k) with column
/// c*k*k + ky*k + kx. Fc weights are out_units x (C*H*W) with column
/// c*H*W + y*W + x.
struct LayerParams {
  Matrix weight;
  Vector bias;
};

class Network {
 public:
  Network() = default;
  /// All weights zero.
  explicit Network(NetworkSpec spec);
  Network(NetworkSpec spec, std::vector<LayerParams> params);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<LayerParams>& params() const { return params_; }
  std::vector<LayerParams>& mutable_params() { return params_; }

  Eigen::Index parameter_count() const;
  /// Every weight then bias, layer by layer.
  Vector flat_parameters() const;
  void set_flat_parameters(const Vector& flat);

 private:
  NetworkSpec spec_;
  std::vector<LayerParams> params_;
};

/// He-normal kernels, zero biases.
Network init_network(const NetworkSpec& spec, std::uint64_t seed);

/// Channel-major activations of a batch: channels x (count*height*width),
/// column n*height*width + y*width + x.
using Activations = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct BatchTrace {
  int count = 0;
  /// activations[0] is the input; activations[i+1] is the output of layer i.
  std::vector<Activations> activations;
  /// Per max-pool layer: for each output element, the input column of its maximum.
  std::vector<std::vector<Eigen::Index>> pool_argmax;
};

/// Single-input view of a forward pass.
struct ForwardTrace {
  std::vector<Activations> activations;
  Distribution output;
};

Activations stack_images(std::span<const Image> images, const Shape& input);

/// Forward through layers [0, stop_after]; stop_after < 0 runs the whole net.
BatchTrace forward_batch(const Network& net, std::span<const Image> images, int stop_after = -1);
ForwardTrace forward(const Network& net, const Image& img);

/// Final softmax distribution per image.
std::vector<Distribution> predict(const Network& net, std::span<const Image> images);

struct Sample {
  Image image;
  int label = 0;
};

struct LossAndGradients {
  double loss = 0.0;
  std::vector<LayerParams> gradients;
};

/// Mean cross-entropy over the batch and its gradient for every parameter.
LossAndGradients loss_and_gradients(const Network& net, std::span<const Sample> batch);
double loss(const Network& net, std::span<const Sample> batch);

/// Supplies training samples lazily; `rng` drives any per-draw augmentation.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual Sample sample(std::size_t index, std::mt19937_64& rng) const = 0;
};

class VectorSource final : public SampleSource {
 public:
  explicit VectorSource(std::span<const Sample> samples) : samples_(samples) {}
  std::size_t size() const override { return samples_.size(); }
  Sample sample(std::size_t index, std::mt19937_64&) const override { return samples_[index]; }

 private:
  std::span<const Sample> samples_;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  /// Multiplies the learning rate after every epoch.
  double lr_decay = 1.0;
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

struct TrainResult {
  Network network;
  std::vector<double> epoch_losses;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Minibatch SGD with momentum. The input network is left untouched; the
/// sample order and augmentation draws come from a generator seeded with
/// `config.seed`.
TrainResult train(const Network& net, const SampleSource& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});
TrainResult train(const Network& net, std::span<const Sample> data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Post-activation output of the first fully connected layer.
Vector extract_feature(const Network& net, const Image& img);
/// Batched form; column i belongs to images[i].
Matrix extract_features(const Network& net, std::span<const Image> images);

/// "TLAN1" | u64 spec length | spec text | little-endian f64 weights.
std::vector<std::uint8_t> save_net(const Network& net);
Network load_net(std::span<const std::uint8_t> bytes);

void save_net_file(const std::string& path, const Network& net);
Network load_net_file(const std::string& path);

}  // namespace tla
