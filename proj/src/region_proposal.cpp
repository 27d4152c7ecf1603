#include "tla/region_proposal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <utility>

namespace tla {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(static_cast<std::size_t>(n)), size_(static_cast<std::size_t>(n), 1),
                                 internal_(static_cast<std::size_t>(n), 0.0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  int find(int x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      auto& p = parent_[static_cast<std::size_t>(x)];
      p = parent_[static_cast<std::size_t>(p)];
      x = p;
    }
    return x;
  }

  int join(int a, int b, double weight) {
    if (size_[static_cast<std::size_t>(a)] < size_[static_cast<std::size_t>(b)]) std::swap(a, b);
    parent_[static_cast<std::size_t>(b)] = a;
    size_[static_cast<std::size_t>(a)] += size_[static_cast<std::size_t>(b)];
    internal_[static_cast<std::size_t>(a)] = weight;
    return a;
  }

  int size(int x) const { return size_[static_cast<std::size_t>(x)]; }
  double internal(int x) const { return internal_[static_cast<std::size_t>(x)]; }

 private:
  std::vector<int> parent_;
  std::vector<int> size_;
  std::vector<double> internal_;
};

struct Edge {
  int a;
  int b;
  double w;
};

Matrix gaussian_smooth(const Image& img, double sigma) {
  if (sigma <= 0.0) return img.data();
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i)
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  const double norm = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (double& k : kernel) k /= norm;

  const int h = img.height();
  const int w = img.width();
  Matrix tmp(img.channels(), img.data().cols());
  Matrix out(img.channels(), img.data().cols());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i)
          s += kernel[static_cast<std::size_t>(i + radius)] * img.at(y, std::clamp(x + i, 0, w - 1), c);
        tmp(c, static_cast<Eigen::Index>(y) * w + x) = s;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i)
          s += kernel[static_cast<std::size_t>(i + radius)] *
               tmp(c, static_cast<Eigen::Index>(std::clamp(y + i, 0, h - 1)) * w + x);
        out(c, static_cast<Eigen::Index>(y) * w + x) = s;
      }
  }
  return out;
}

}  // namespace

Segmentation felzenszwalb_segment(const Image& img, double scale_k, double sigma, int min_size) {
  if (img.empty()) throw Error("felzenszwalb_segment: empty image");
  const int h = img.height();
  const int w = img.width();
  const Matrix smooth = gaussian_smooth(img, sigma) * 255.0;

  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(2 * h * w));
  auto weight = [&](int p, int q) { return (smooth.col(p) - smooth.col(q)).norm(); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      if (x + 1 < w) edges.push_back({p, p + 1, weight(p, p + 1)});
      if (y + 1 < h) edges.push_back({p, p + w, weight(p, p + w)});
    }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.w < b.w; });

  DisjointSets sets(h * w);
  std::vector<double> threshold(static_cast<std::size_t>(h * w), scale_k);
  for (const Edge& e : edges) {
    const int a = sets.find(e.a);
    const int b = sets.find(e.b);
    if (a == b) continue;
    if (e.w <= threshold[static_cast<std::size_t>(a)] && e.w <= threshold[static_cast<std::size_t>(b)]) {
      const int root = sets.join(a, b, e.w);
      threshold[static_cast<std::size_t>(root)] = e.w + scale_k / sets.size(root);
    }
  }
  for (const Edge& e : edges) {
    const int a = sets.find(e.a);
    const int b = sets.find(e.b);
    if (a != b && (sets.size(a) < min_size || sets.size(b) < min_size)) sets.join(a, b, sets.internal(a));
  }

  Segmentation seg;
  seg.height = h;
  seg.width = w;
  seg.labels.assign(static_cast<std::size_t>(h * w), -1);
  std::vector<int> remap(static_cast<std::size_t>(h * w), -1);
  for (int p = 0; p < h * w; ++p) {
    int& id = remap[static_cast<std::size_t>(sets.find(p))];
    if (id < 0) id = seg.region_count++;
    seg.labels[static_cast<std::size_t>(p)] = id;
  }
  return seg;
}

std::vector<RegionDescriptor> region_features(const Image& img, const Segmentation& seg) {
  if (seg.height != img.height() || seg.width != img.width())
    throw Error("region_features: segmentation does not match image");
  const int channels = img.channels();
  std::vector<RegionDescriptor> regions(static_cast<std::size_t>(seg.region_count));
  std::vector<int> x0(regions.size(), img.width()), y0(regions.size(), img.height()), x1(regions.size(), -1),
      y1(regions.size(), -1);
  for (auto& r : regions) r.histogram = Vector::Zero(channels * kHistogramBins);
  for (int y = 0; y < seg.height; ++y)
    for (int x = 0; x < seg.width; ++x) {
      const auto id = static_cast<std::size_t>(seg.label(y, x));
      RegionDescriptor& r = regions[id];
      ++r.pixel_count;
      x0[id] = std::min(x0[id], x);
      y0[id] = std::min(y0[id], y);
      x1[id] = std::max(x1[id], x);
      y1[id] = std::max(y1[id], y);
      for (int c = 0; c < channels; ++c) {
        const int bin = std::min(kHistogramBins - 1, static_cast<int>(img.at(y, x, c) * kHistogramBins));
        r.histogram[c * kHistogramBins + bin] += 1.0;
      }
    }
  for (std::size_t i = 0; i < regions.size(); ++i) {
    RegionDescriptor& r = regions[i];
    if (r.pixel_count == 0) throw Error("region_features: empty region id");
    r.bbox = {x0[i], y0[i], x1[i] - x0[i] + 1, y1[i] - y0[i] + 1};
    r.histogram /= static_cast<double>(r.pixel_count);
  }
  return regions;
}

RegionDescriptor merge_descriptors(const RegionDescriptor& a, const RegionDescriptor& b) {
  RegionDescriptor out;
  out.pixel_count = a.pixel_count + b.pixel_count;
  out.bbox = box_union(a.bbox, b.bbox);
  out.histogram = (a.pixel_count * a.histogram + b.pixel_count * b.histogram) / out.pixel_count;
  return out;
}

double histogram_intersection(const RegionDescriptor& a, const RegionDescriptor& b) {
  return a.histogram.cwiseMin(b.histogram).sum();
}

double size_similarity(const RegionDescriptor& a, const RegionDescriptor& b, int image_area) {
  return 1.0 - static_cast<double>(a.pixel_count + b.pixel_count) / image_area;
}

double fill_similarity(const RegionDescriptor& a, const RegionDescriptor& b, int image_area) {
  const double gap = box_union(a.bbox, b.bbox).area() - a.pixel_count - b.pixel_count;
  return std::clamp(1.0 - gap / image_area, 0.0, 1.0);
}

ProposalSet selective_search(const Image& img, const ProposalParams& params) {
  ProposalSet out;
  out.segmentation = felzenszwalb_segment(img, params.scale_k, params.sigma, params.min_size);
  const Segmentation& seg = out.segmentation;
  const int area = img.height() * img.width();
  std::vector<RegionDescriptor> regions = region_features(img, seg);
  out.initial_regions = seg.region_count;

  std::vector<std::set<int>> neighbours(regions.size());
  auto link = [&](int a, int b) {
    if (a == b) return;
    neighbours[static_cast<std::size_t>(a)].insert(b);
    neighbours[static_cast<std::size_t>(b)].insert(a);
  };
  for (int y = 0; y < seg.height; ++y)
    for (int x = 0; x < seg.width; ++x) {
      if (x + 1 < seg.width) link(seg.label(y, x), seg.label(y, x + 1));
      if (y + 1 < seg.height) link(seg.label(y, x), seg.label(y + 1, x));
    }

  const SimilarityWeights& wts = params.weights;
  auto similarity = [&](int a, int b) {
    const RegionDescriptor& ra = regions[static_cast<std::size_t>(a)];
    const RegionDescriptor& rb = regions[static_cast<std::size_t>(b)];
    return wts.colour * histogram_intersection(ra, rb) + wts.size * size_similarity(ra, rb, area) +
           wts.fill * fill_similarity(ra, rb, area);
  };

  // Keyed by (lower id, higher id); the scan below picks the maximum and
  // breaks ties on the lexicographically smallest pair.
  std::map<std::pair<int, int>, double> pairs;
  for (std::size_t a = 0; a < neighbours.size(); ++a)
    for (int b : neighbours[a])
      if (static_cast<int>(a) < b) pairs[{static_cast<int>(a), b}] = similarity(static_cast<int>(a), b);

  std::vector<Box> boxes;
  boxes.reserve(2 * regions.size());
  for (const auto& r : regions) boxes.push_back(r.bbox);

  while (!pairs.empty()) {
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [a, b] = best->first;

    const int merged = static_cast<int>(regions.size());
    regions.push_back(merge_descriptors(regions[static_cast<std::size_t>(a)], regions[static_cast<std::size_t>(b)]));
    boxes.push_back(regions.back().bbox);
    ++out.merge_count;

    std::set<int> adjacent;
    for (int n : neighbours[static_cast<std::size_t>(a)]) adjacent.insert(n);
    for (int n : neighbours[static_cast<std::size_t>(b)]) adjacent.insert(n);
    adjacent.erase(a);
    adjacent.erase(b);
    for (int n : neighbours[static_cast<std::size_t>(a)]) pairs.erase({std::min(a, n), std::max(a, n)});
    for (int n : neighbours[static_cast<std::size_t>(b)]) pairs.erase({std::min(b, n), std::max(b, n)});
    neighbours.emplace_back();
    for (int n : adjacent) {
      neighbours[static_cast<std::size_t>(n)].erase(a);
      neighbours[static_cast<std::size_t>(n)].erase(b);
      link(merged, n);
      pairs[{n, merged}] = similarity(n, merged);
    }
    neighbours[static_cast<std::size_t>(a)].clear();
    neighbours[static_cast<std::size_t>(b)].clear();
  }

  std::set<Box> seen;
  for (const Box& b : boxes)
    if (seen.insert(b).second) out.boxes.push_back(b);
  return out;
}

}  // namespace tla
