#include "tla/convnet.hpp"

#include "byte_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tla {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

using RowMatrix = Activations;

RowMatrix im2col(const RowMatrix& in, int count, const Shape& s, const ConvLayer& conv, const Shape& out) {
  const int k = conv.kernel;
  const Eigen::Index in_plane = s.plane();
  const Eigen::Index out_plane = out.plane();
  RowMatrix cols(static_cast<Eigen::Index>(s.channels) * k * k, count * out_plane);
  for (int c = 0; c < s.channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        const double* src = in.row(c).data();
        for (int n = 0; n < count; ++n) {
          const double* plane = src + n * in_plane;
          double* dst = row + n * out_plane;
          for (int oy = 0; oy < out.height; ++oy) {
            const int iy = oy * conv.stride - conv.pad + ky;
            double* drow = dst + static_cast<Eigen::Index>(oy) * out.width;
            if (iy < 0 || iy >= s.height) {
              std::fill(drow, drow + out.width, 0.0);
              continue;
            }
            const double* srow = plane + static_cast<Eigen::Index>(iy) * s.width;
            for (int ox = 0; ox < out.width; ++ox) {
              const int ix = ox * conv.stride - conv.pad + kx;
              drow[ox] = (ix >= 0 && ix < s.width) ? srow[ix] : 0.0;
            }
          }
        }
      }
  return cols;
}

RowMatrix col2im(const RowMatrix& cols, int count, const Shape& s, const ConvLayer& conv, const Shape& out) {
  const int k = conv.kernel;
  const Eigen::Index in_plane = s.plane();
  const Eigen::Index out_plane = out.plane();
  RowMatrix in = RowMatrix::Zero(s.channels, count * in_plane);
  for (int c = 0; c < s.channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        double* dst = in.row(c).data();
        for (int n = 0; n < count; ++n) {
          double* plane = dst + n * in_plane;
          const double* srcp = row + n * out_plane;
          for (int oy = 0; oy < out.height; ++oy) {
            const int iy = oy * conv.stride - conv.pad + ky;
            if (iy < 0 || iy >= s.height) continue;
            const double* srow = srcp + static_cast<Eigen::Index>(oy) * out.width;
            double* drow = plane + static_cast<Eigen::Index>(iy) * s.width;
            for (int ox = 0; ox < out.width; ++ox) {
              const int ix = ox * conv.stride - conv.pad + kx;
              if (ix >= 0 && ix < s.width) drow[ix] += srow[ox];
            }
          }
        }
      }
  return in;
}

// (C, N*H*W) channel-major to (C*H*W, N) feature-major, and back.
Matrix flatten(const RowMatrix& in, int count, const Shape& s) {
  Matrix x(s.size(), count);
  const Eigen::Index plane = s.plane();
  for (int n = 0; n < count; ++n)
    for (int c = 0; c < s.channels; ++c)
      x.col(n).segment(c * plane, plane) = in.row(c).segment(n * plane, plane).transpose();
  return x;
}

RowMatrix unflatten(const Matrix& x, int count, const Shape& s) {
  RowMatrix in(s.channels, count * s.plane());
  const Eigen::Index plane = s.plane();
  for (int n = 0; n < count; ++n)
    for (int c = 0; c < s.channels; ++c)
      in.row(c).segment(n * plane, plane) = x.col(n).segment(c * plane, plane).transpose();
  return in;
}

RowMatrix column_softmax(const RowMatrix& logits) {
  RowMatrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double shift = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - shift).exp().matrix();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

int parse_int(std::istringstream& in, int line) {
  int v = 0;
  if (!(in >> v)) throw Error("network spec: expected integer on line " + std::to_string(line));
  return v;
}

}  // namespace

std::string layer_name(const Layer& layer) {
  return std::visit(Overloaded{[](const ConvLayer&) { return std::string("conv"); },
                               [](const ReluLayer&) { return std::string("relu"); },
                               [](const MaxPoolLayer&) { return std::string("maxpool"); },
                               [](const FcLayer&) { return std::string("fc"); },
                               [](const SoftmaxLayer&) { return std::string("softmax"); }},
                    layer);
}

std::vector<Shape> NetworkSpec::output_shapes() const {
  if (input.channels < 1 || input.height < 1 || input.width < 1) throw Error("network spec: invalid input dims");
  std::vector<Shape> shapes;
  Shape s = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string where = "layer " + std::to_string(i) + " (" + layer_name(layers[i]) + ")";
    s = std::visit(Overloaded{
                       [&](const ConvLayer& c) {
                         if (c.out_channels < 1 || c.kernel < 1 || c.stride < 1 || c.pad < 0)
                           throw Error(where + ": invalid conv parameters");
                         const int h = (s.height + 2 * c.pad - c.kernel) / c.stride + 1;
                         const int w = (s.width + 2 * c.pad - c.kernel) / c.stride + 1;
                         if (s.height + 2 * c.pad < c.kernel || s.width + 2 * c.pad < c.kernel)
                           throw Error(where + ": kernel larger than input");
                         return Shape{c.out_channels, h, w};
                       },
                       [&](const ReluLayer&) { return s; },
                       [&](const MaxPoolLayer& p) {
                         if (p.kernel < 1 || p.stride < 1 || p.kernel > s.height || p.kernel > s.width)
                           throw Error(where + ": invalid pooling window");
                         return Shape{s.channels, (s.height - p.kernel) / p.stride + 1,
                                      (s.width - p.kernel) / p.stride + 1};
                       },
                       [&](const FcLayer& f) {
                         if (f.out_units < 1) throw Error(where + ": fc needs positive units");
                         return Shape{f.out_units, 1, 1};
                       },
                       [&](const SoftmaxLayer&) { return s; }},
                   layers[i]);
    shapes.push_back(s);
  }
  return shapes;
}

void NetworkSpec::validate() const {
  if (classes < 1) throw Error("network spec: class count must be positive");
  if (layers.empty() || !std::holds_alternative<SoftmaxLayer>(layers.back()))
    throw Error("network spec: last layer must be softmax");
  for (std::size_t i = 0; i + 1 < layers.size(); ++i)
    if (std::holds_alternative<SoftmaxLayer>(layers[i]))
      throw Error("network spec: softmax must appear exactly once, last");
  const auto shapes = output_shapes();
  if (shapes.back().size() != classes)
    throw Error("network spec: output width " + std::to_string(shapes.back().size()) + " does not match " +
                std::to_string(classes) + " classes");
  if (std::none_of(layers.begin(), layers.end(), [](const Layer& l) { return std::holds_alternative<ConvLayer>(l); }))
    throw Error("network spec: at least one conv layer is required");
  if (part_layer < 0 || part_layer >= static_cast<int>(layers.size()) ||
      !std::holds_alternative<ConvLayer>(layers[static_cast<std::size_t>(part_layer)]))
    throw Error("network spec: part layer must index a conv layer");
}

int NetworkSpec::first_fc() const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (std::holds_alternative<FcLayer>(layers[i])) return static_cast<int>(i);
  return -1;
}

std::string NetworkSpec::to_text() const {
  std::ostringstream out;
  out << "input " << input.channels << ' ' << input.height << ' ' << input.width << '\n';
  out << "classes " << classes << '\n';
  out << "part_layer " << part_layer << '\n';
  for (const Layer& layer : layers) {
    std::visit(Overloaded{[&](const ConvLayer& c) {
                            out << "conv " << c.out_channels << ' ' << c.kernel << ' ' << c.stride << ' ' << c.pad;
                          },
                          [&](const ReluLayer&) { out << "relu"; },
                          [&](const MaxPoolLayer& p) { out << "maxpool " << p.kernel << ' ' << p.stride; },
                          [&](const FcLayer& f) { out << "fc " << f.out_units; },
                          [&](const SoftmaxLayer&) { out << "softmax"; }},
               layer);
    out << '\n';
  }
  return out.str();
}

NetworkSpec NetworkSpec::parse(std::string_view text) {
  NetworkSpec spec;
  std::istringstream lines{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(lines, line)) {
    ++number;
    std::istringstream in(line);
    std::string word;
    if (!(in >> word)) continue;
    if (word == "input") {
      spec.input.channels = parse_int(in, number);
      spec.input.height = parse_int(in, number);
      spec.input.width = parse_int(in, number);
    } else if (word == "classes") {
      spec.classes = parse_int(in, number);
    } else if (word == "part_layer") {
      spec.part_layer = parse_int(in, number);
    } else if (word == "conv") {
      ConvLayer c;
      c.out_channels = parse_int(in, number);
      c.kernel = parse_int(in, number);
      c.stride = parse_int(in, number);
      c.pad = parse_int(in, number);
      spec.layers.emplace_back(c);
    } else if (word == "relu") {
      spec.layers.emplace_back(ReluLayer{});
    } else if (word == "maxpool") {
      MaxPoolLayer p;
      p.kernel = parse_int(in, number);
      p.stride = parse_int(in, number);
      spec.layers.emplace_back(p);
    } else if (word == "fc") {
      spec.layers.emplace_back(FcLayer{parse_int(in, number)});
    } else if (word == "softmax") {
      spec.layers.emplace_back(SoftmaxLayer{});
    } else {
      throw Error("network spec: unknown directive '" + word + "' on line " + std::to_string(number));
    }
  }
  spec.validate();
  return spec;
}

NetworkSpec mini_domain_net(Shape input, int classes, int c1, int c2, int hidden) {
  NetworkSpec spec;
  spec.input = input;
  spec.classes = classes;
  spec.layers = {ConvLayer{c1, 3, 1, 1}, ReluLayer{}, MaxPoolLayer{2, 2},
                 ConvLayer{c1, 3, 1, 1}, ReluLayer{}, MaxPoolLayer{2, 2},
                 ConvLayer{c2, 3, 1, 1}, ReluLayer{},
                 ConvLayer{c2, 3, 1, 1}, ReluLayer{}, MaxPoolLayer{2, 2},
                 FcLayer{hidden},        ReluLayer{},
                 FcLayer{classes},       SoftmaxLayer{}};
  spec.part_layer = 6;
  spec.validate();
  return spec;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const auto shapes = spec_.output_shapes();
  Shape in = spec_.input;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    LayerParams p;
    if (const auto* c = std::get_if<ConvLayer>(&spec_.layers[i])) {
      p.weight = Matrix::Zero(c->out_channels, static_cast<Eigen::Index>(in.channels) * c->kernel * c->kernel);
      p.bias = Vector::Zero(c->out_channels);
    } else if (const auto* f = std::get_if<FcLayer>(&spec_.layers[i])) {
      p.weight = Matrix::Zero(f->out_units, in.size());
      p.bias = Vector::Zero(f->out_units);
    }
    params_.push_back(std::move(p));
    in = shapes[i];
  }
}

Network::Network(NetworkSpec spec, std::vector<LayerParams> params) : Network(std::move(spec)) {
  if (params.size() != params_.size()) throw Error("network: parameter count does not match spec");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].weight.rows() != params_[i].weight.rows() || params[i].weight.cols() != params_[i].weight.cols() ||
        params[i].bias.size() != params_[i].bias.size())
      throw Error("network: weight shape mismatch at layer " + std::to_string(i));
    if (!params[i].weight.allFinite() || !params[i].bias.allFinite())
      throw Error("network: non-finite weights at layer " + std::to_string(i));
  }
  params_ = std::move(params);
}

Eigen::Index Network::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& p : params_) n += p.weight.size() + p.bias.size();
  return n;
}

Vector Network::flat_parameters() const {
  Vector flat(parameter_count());
  Eigen::Index at = 0;
  for (const auto& p : params_) {
    flat.segment(at, p.weight.size()) = p.weight.reshaped();
    at += p.weight.size();
    flat.segment(at, p.bias.size()) = p.bias;
    at += p.bias.size();
  }
  return flat;
}

void Network::set_flat_parameters(const Vector& flat) {
  if (flat.size() != parameter_count()) throw Error("network: flat parameter length mismatch");
  Eigen::Index at = 0;
  for (auto& p : params_) {
    p.weight.reshaped() = flat.segment(at, p.weight.size());
    at += p.weight.size();
    p.bias = flat.segment(at, p.bias.size());
    at += p.bias.size();
  }
}

Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
  Network net(spec);
  std::mt19937_64 rng(seed);
  for (auto& p : net.mutable_params()) {
    if (p.weight.size() == 0) continue;
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(p.weight.cols())));
    for (Eigen::Index j = 0; j < p.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < p.weight.rows(); ++i) p.weight(i, j) = normal(rng);
  }
  return net;
}

Activations stack_images(std::span<const Image> images, const Shape& input) {
  Activations batch(input.channels, static_cast<Eigen::Index>(images.size()) * input.plane());
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    if (img.channels() != input.channels || img.height() != input.height || img.width() != input.width)
      throw Error("forward: image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) + "x" +
                  std::to_string(img.channels()) + " does not match input layer " + std::to_string(input.height) +
                  "x" + std::to_string(input.width) + "x" + std::to_string(input.channels));
    batch.middleCols(static_cast<Eigen::Index>(n) * input.plane(), input.plane()) = img.data();
  }
  return batch;
}

namespace {

BatchTrace forward_activations(const Network& net, Activations input, int count, int stop_after) {
  const NetworkSpec& spec = net.spec();
  const auto shapes = spec.output_shapes();
  const int last = stop_after < 0 ? static_cast<int>(spec.layers.size()) - 1
                                  : std::min(stop_after, static_cast<int>(spec.layers.size()) - 1);
  BatchTrace trace;
  trace.count = count;
  trace.activations.reserve(static_cast<std::size_t>(last) + 2);
  trace.activations.push_back(std::move(input));
  trace.pool_argmax.resize(spec.layers.size());
  Shape in = spec.input;
  for (int i = 0; i <= last; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const Shape out = shapes[idx];
    const RowMatrix& x = trace.activations.back();
    const LayerParams& p = net.params()[idx];
    RowMatrix y = std::visit(
        Overloaded{[&](const ConvLayer& c) -> RowMatrix {
                     RowMatrix r = p.weight * im2col(x, count, in, c, out);
                     r.colwise() += p.bias;
                     return r;
                   },
                   [&](const ReluLayer&) -> RowMatrix { return x.cwiseMax(0.0); },
                   [&](const MaxPoolLayer& pool) -> RowMatrix {
                     RowMatrix r(out.channels, count * out.plane());
                     auto& arg = trace.pool_argmax[idx];
                     arg.resize(static_cast<std::size_t>(r.size()));
                     for (int c = 0; c < out.channels; ++c)
                       for (int n = 0; n < count; ++n)
                         for (int oy = 0; oy < out.height; ++oy)
                           for (int ox = 0; ox < out.width; ++ox) {
                             Eigen::Index best = n * in.plane() + static_cast<Eigen::Index>(oy * pool.stride) * in.width +
                                                 ox * pool.stride;
                             for (int ky = 0; ky < pool.kernel; ++ky)
                               for (int kx = 0; kx < pool.kernel; ++kx) {
                                 const Eigen::Index col = n * in.plane() +
                                                          static_cast<Eigen::Index>(oy * pool.stride + ky) * in.width +
                                                          ox * pool.stride + kx;
                                 if (x(c, col) > x(c, best)) best = col;
                               }
                             const Eigen::Index o = n * out.plane() + static_cast<Eigen::Index>(oy) * out.width + ox;
                             r(c, o) = x(c, best);
                             arg[static_cast<std::size_t>(c * r.cols() + o)] = best;
                           }
                     return r;
                   },
                   [&](const FcLayer&) -> RowMatrix {
                     Matrix r = p.weight * flatten(x, count, in);
                     r.colwise() += p.bias;
                     return unflatten(r, count, out);
                   },
                   [&](const SoftmaxLayer&) -> RowMatrix {
                     return column_softmax(unflatten(flatten(x, count, in), count, out));
                   }},
        spec.layers[idx]);
    if (!y.allFinite()) throw Error("forward: non-finite activation at layer " + std::to_string(i));
    trace.activations.push_back(std::move(y));
    in = out;
  }
  return trace;
}

}  // namespace

BatchTrace forward_batch(const Network& net, std::span<const Image> images, int stop_after) {
  const int count = static_cast<int>(images.size());
  return forward_activations(net, stack_images(images, net.spec().input), count, stop_after);
}

ForwardTrace forward(const Network& net, const Image& img) {
  BatchTrace batch = forward_batch(net, std::span<const Image>(&img, 1));
  ForwardTrace out;
  out.output = Distribution(batch.activations.back().reshaped<Eigen::ColMajor>());
  out.activations = std::move(batch.activations);
  return out;
}

std::vector<Distribution> predict(const Network& net, std::span<const Image> images) {
  constexpr std::size_t kChunk = 64;
  std::vector<Distribution> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const auto chunk = images.subspan(start, std::min(kChunk, images.size() - start));
    const BatchTrace trace = forward_batch(net, chunk);
    const Activations& probs = trace.activations.back();
    for (Eigen::Index j = 0; j < probs.cols(); ++j) out.emplace_back(Vector(probs.col(j)));
  }
  return out;
}

namespace {

// Backpropagates d(loss)/d(logits) through every layer below the softmax.
std::vector<LayerParams> backward(const Network& net, const BatchTrace& trace, RowMatrix grad) {
  const NetworkSpec& spec = net.spec();
  const auto shapes = spec.output_shapes();
  std::vector<LayerParams> grads(spec.layers.size());
  const int count = trace.count;
  for (int i = static_cast<int>(spec.layers.size()) - 2; i >= 0; --i) {
    const auto idx = static_cast<std::size_t>(i);
    const Shape in = i == 0 ? spec.input : shapes[idx - 1];
    const Shape out = shapes[idx];
    const RowMatrix& x = trace.activations[idx];
    const RowMatrix& y = trace.activations[idx + 1];
    const LayerParams& p = net.params()[idx];
    grad = std::visit(
        Overloaded{[&](const ConvLayer& c) -> RowMatrix {
                     const RowMatrix cols = im2col(x, count, in, c, out);
                     grads[idx].weight = grad * cols.transpose();
                     grads[idx].bias = grad.rowwise().sum();
                     if (i == 0) return {};
                     return col2im(p.weight.transpose() * grad, count, in, c, out);
                   },
                   [&](const ReluLayer&) -> RowMatrix { return grad.cwiseProduct((y.array() > 0.0).cast<double>().matrix()); },
                   [&](const MaxPoolLayer&) -> RowMatrix {
                     RowMatrix dx = RowMatrix::Zero(x.rows(), x.cols());
                     const auto& arg = trace.pool_argmax[idx];
                     for (Eigen::Index c = 0; c < grad.rows(); ++c)
                       for (Eigen::Index o = 0; o < grad.cols(); ++o)
                         dx(c, arg[static_cast<std::size_t>(c * grad.cols() + o)]) += grad(c, o);
                     return dx;
                   },
                   [&](const FcLayer&) -> RowMatrix {
                     const Matrix xf = flatten(x, count, in);
                     const Matrix g = flatten(grad, count, out);
                     grads[idx].weight = g * xf.transpose();
                     grads[idx].bias = g.rowwise().sum();
                     return unflatten(p.weight.transpose() * g, count, in);
                   },
                   [&](const SoftmaxLayer&) -> RowMatrix { throw Error("backward: softmax must be the last layer"); }},
        spec.layers[idx]);
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].weight.size() == 0 && net.params()[i].weight.size() != 0) {
      grads[i].weight = Matrix::Zero(net.params()[i].weight.rows(), net.params()[i].weight.cols());
      grads[i].bias = Vector::Zero(net.params()[i].bias.size());
    }
  }
  return grads;
}

double batch_loss(const Network& net, const BatchTrace& trace, std::span<const Sample> batch, RowMatrix* dlogits) {
  const RowMatrix& logits = trace.activations[trace.activations.size() - 2];
  const RowMatrix& probs = trace.activations.back();
  const auto n = static_cast<double>(batch.size());
  double total = 0.0;
  if (dlogits) *dlogits = probs / n;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const int label = batch[j].label;
    if (label < 0 || label >= net.spec().classes) throw Error("invalid label " + std::to_string(label));
    const auto col = logits.col(static_cast<Eigen::Index>(j));
    const double shift = col.maxCoeff();
    const double lse = shift + std::log((col.array() - shift).exp().sum());
    total += lse - col[label];
    if (dlogits) (*dlogits)(label, static_cast<Eigen::Index>(j)) -= 1.0 / n;
  }
  return total / n;
}

BatchTrace forward_samples(const Network& net, std::span<const Sample> batch) {
  if (batch.empty()) throw Error("empty batch");
  std::vector<Image> images;
  images.reserve(batch.size());
  for (const Sample& s : batch) images.push_back(s.image);
  return forward_batch(net, images);
}

}  // namespace

LossAndGradients loss_and_gradients(const Network& net, std::span<const Sample> batch) {
  for (const Sample& s : batch)
    if (s.label < 0 || s.label >= net.spec().classes) throw Error("invalid label " + std::to_string(s.label));
  const BatchTrace trace = forward_samples(net, batch);
  RowMatrix dlogits;
  LossAndGradients out;
  out.loss = batch_loss(net, trace, batch, &dlogits);
  out.gradients = backward(net, trace, std::move(dlogits));
  return out;
}

double loss(const Network& net, std::span<const Sample> batch) {
  for (const Sample& s : batch)
    if (s.label < 0 || s.label >= net.spec().classes) throw Error("invalid label " + std::to_string(s.label));
  return batch_loss(net, forward_samples(net, batch), batch, nullptr);
}

TrainResult train(const Network& net, const SampleSource& data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (data.size() == 0) throw Error("train: empty dataset");
  if (config.epochs < 0 || config.batch_size < 1 || config.learning_rate < 0.0 || config.momentum < 0.0 ||
      config.momentum >= 1.0 || config.weight_decay < 0.0 || config.lr_decay <= 0.0)
    throw Error("train: invalid configuration");

  TrainResult result{net, {}};
  std::vector<LayerParams>& params = result.network.mutable_params();
  std::vector<LayerParams> velocity = params;
  for (auto& v : velocity) {
    v.weight.setZero();
    v.bias.setZero();
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double lr = config.learning_rate;
  std::vector<Sample> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data.sample(order[i], rng));
      const LossAndGradients lg = loss_and_gradients(result.network, batch);
      total += lg.loss * static_cast<double>(batch.size());
      for (std::size_t l = 0; l < params.size(); ++l) {
        if (params[l].weight.size() == 0) continue;
        velocity[l].weight = config.momentum * velocity[l].weight -
                             lr * (lg.gradients[l].weight + config.weight_decay * params[l].weight);
        velocity[l].bias = config.momentum * velocity[l].bias - lr * lg.gradients[l].bias;
        params[l].weight += velocity[l].weight;
        params[l].bias += velocity[l].bias;
      }
    }
    const double mean = total / static_cast<double>(order.size());
    result.epoch_losses.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
    lr *= config.lr_decay;
  }
  return result;
}

TrainResult train(const Network& net, std::span<const Sample> data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  return train(net, VectorSource(data), config, on_epoch);
}

namespace {

int feature_layer(const NetworkSpec& spec) {
  const int fc = spec.first_fc();
  if (fc < 0) throw Error("extract_feature: network has no fc layer");
  const auto next = static_cast<std::size_t>(fc) + 1;
  if (next < spec.layers.size() && std::holds_alternative<ReluLayer>(spec.layers[next])) return fc + 1;
  return fc;
}

}  // namespace

Matrix extract_features(const Network& net, std::span<const Image> images) {
  const int layer = feature_layer(net.spec());
  const int width = std::get<FcLayer>(net.spec().layers[static_cast<std::size_t>(net.spec().first_fc())]).out_units;
  Matrix out(width, static_cast<Eigen::Index>(images.size()));
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const auto chunk = images.subspan(start, std::min(kChunk, images.size() - start));
    const BatchTrace trace = forward_batch(net, chunk, layer);
    out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(chunk.size())) =
        trace.activations.back();
  }
  return out;
}

Vector extract_feature(const Network& net, const Image& img) {
  return extract_features(net, std::span<const Image>(&img, 1)).col(0);
}

std::vector<std::uint8_t> save_net(const Network& net) {
  detail::ByteWriter out;
  out.raw("TLAN1");
  const std::string text = net.spec().to_text();
  out.u64(text.size());
  out.raw(text);
  for (const auto& p : net.params()) {
    for (Eigen::Index i = 0; i < p.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < p.weight.cols(); ++j) out.f64(p.weight(i, j));
    for (Eigen::Index i = 0; i < p.bias.size(); ++i) out.f64(p.bias[i]);
  }
  return out.take();
}

Network load_net(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes);
  in.expect("TLAN1");
  const std::uint64_t length = in.u64();
  if (length > in.remaining()) throw ParseError("spec length exceeds file", in.pos());
  const std::size_t spec_at = in.pos();
  NetworkSpec spec;
  try {
    spec = NetworkSpec::parse(in.text(static_cast<std::size_t>(length)));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(e.what(), spec_at);
  }
  Network net(spec);
  const auto expected = static_cast<std::size_t>(net.parameter_count()) * 8;
  if (in.remaining() != expected)
    throw ParseError("weight payload has " + std::to_string(in.remaining()) + " bytes, expected " +
                         std::to_string(expected),
                     in.pos());
  for (auto& p : net.mutable_params()) {
    for (Eigen::Index i = 0; i < p.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < p.weight.cols(); ++j) p.weight(i, j) = in.f64();
    for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias[i] = in.f64();
    if (!p.weight.allFinite() || !p.bias.allFinite()) throw ParseError("non-finite weight", in.pos());
  }
  return net;
}

void save_net_file(const std::string& path, const Network& net) { detail::write_file(path, save_net(net)); }

Network load_net_file(const std::string& path) { return load_net(detail::read_file(path)); }

}  // namespace tla
