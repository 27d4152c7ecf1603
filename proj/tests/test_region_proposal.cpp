#include <doctest.h>

#include "tla/region_proposal.hpp"
#include "tla/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <set>

using namespace tla;

namespace {

Image halves(int h, int w) {
  Image img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(y, x, x < w / 2 ? 0 : 2) = 1.0;
  return img;
}

// Straight union-find over the sorted 4-neighbour edge list with the
// Int(C) + k/|C| predicate, no smoothing and no small-region pass.
std::vector<int> naive_segment(const Image& img, double k) {
  const int h = img.height(), w = img.width(), n = h * w;
  struct E {
    int a, b;
    double w;
  };
  std::vector<E> edges;
  auto dist = [&](int p, int q) {
    double s = 0.0;
    for (int c = 0; c < img.channels(); ++c) {
      const double d = 255.0 * (img.data()(c, p) - img.data()(c, q));
      s += d * d;
    }
    return std::sqrt(s);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      if (x + 1 < w) edges.push_back({p, p + 1, dist(p, p + 1)});
      if (y + 1 < h) edges.push_back({p, p + w, dist(p, p + w)});
    }
  std::stable_sort(edges.begin(), edges.end(), [](const E& a, const E& b) { return a.w < b.w; });
  std::vector<int> parent(static_cast<std::size_t>(n)), size(static_cast<std::size_t>(n), 1);
  std::vector<double> internal(static_cast<std::size_t>(n), 0.0);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) { return parent[static_cast<std::size_t>(x)] == x ? x : find(parent[static_cast<std::size_t>(x)]); };
  for (const E& e : edges) {
    const int a = find(e.a), b = find(e.b);
    if (a == b) continue;
    const double ta = internal[static_cast<std::size_t>(a)] + k / size[static_cast<std::size_t>(a)];
    const double tb = internal[static_cast<std::size_t>(b)] + k / size[static_cast<std::size_t>(b)];
    if (e.w <= std::min(ta, tb)) {
      parent[static_cast<std::size_t>(b)] = a;
      size[static_cast<std::size_t>(a)] += size[static_cast<std::size_t>(b)];
      internal[static_cast<std::size_t>(a)] = e.w;
    }
  }
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) out[static_cast<std::size_t>(p)] = find(p);
  return out;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (ab.emplace(a[i], b[i]).first->second != b[i]) return false;
    if (ba.emplace(b[i], a[i]).first->second != a[i]) return false;
  }
  return true;
}

void check_segmentation_structure(const Segmentation& seg) {
  REQUIRE(seg.labels.size() == static_cast<std::size_t>(seg.height * seg.width));
  int next = 0;
  for (int l : seg.labels) {
    REQUIRE(l >= 0);
    REQUIRE(l <= next);  // ids appear in raster order
    if (l == next) ++next;
  }
  CHECK(next == seg.region_count);
  // Each region is 4-connected.
  std::vector<bool> seen(seg.labels.size(), false);
  std::set<int> started;
  for (int p = 0; p < seg.height * seg.width; ++p) {
    if (seen[static_cast<std::size_t>(p)]) continue;
    const int l = seg.labels[static_cast<std::size_t>(p)];
    CHECK(started.insert(l).second);
    std::queue<int> q;
    q.push(p);
    seen[static_cast<std::size_t>(p)] = true;
    while (!q.empty()) {
      const int c = q.front();
      q.pop();
      const int y = c / seg.width, x = c % seg.width;
      const int ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
      for (int i = 0; i < 4; ++i) {
        if (ny[i] < 0 || nx[i] < 0 || ny[i] >= seg.height || nx[i] >= seg.width) continue;
        const int d = ny[i] * seg.width + nx[i];
        if (!seen[static_cast<std::size_t>(d)] && seg.labels[static_cast<std::size_t>(d)] == l) {
          seen[static_cast<std::size_t>(d)] = true;
          q.push(d);
        }
      }
    }
  }
}

Vector pixel_histogram(const Image& img, const std::vector<int>& labels, std::set<int> keep) {
  Vector hist = Vector::Zero(img.channels() * kHistogramBins);
  int count = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      if (!keep.count(labels[static_cast<std::size_t>(y * img.width() + x)])) continue;
      ++count;
      for (int c = 0; c < img.channels(); ++c) {
        const int bin = std::min(kHistogramBins - 1, static_cast<int>(std::floor(img.at(y, x, c) * kHistogramBins)));
        hist[c * kHistogramBins + bin] += 1.0;
      }
    }
  return hist / count;
}

}  // namespace

TEST_CASE("constant image is one region and one proposal") {
  const Image img = Image::constant(12, 9, 3, 0.4);
  const Segmentation seg = felzenszwalb_segment(img, 100, 0.8, 20);
  CHECK(seg.region_count == 1);
  const ProposalSet p = selective_search(img);
  REQUIRE(p.boxes.size() == 1);
  CHECK(p.boxes[0] == Box{0, 0, 9, 12});
  CHECK(p.merge_count == 0);
}

TEST_CASE("red and blue halves segment into the union-find oracle's two regions") {
  const Image img = halves(10, 16);
  const Segmentation seg = felzenszwalb_segment(img, 100, 0.0, 1);
  CHECK(seg.region_count == 2);
  const auto oracle = naive_segment(img, 100);
  CHECK(std::set<int>(oracle.begin(), oracle.end()).size() == 2);
  CHECK(same_partition(seg.labels, oracle));
  check_segmentation_structure(seg);
}

TEST_CASE("segmentation matches the union-find oracle on random images without smoothing") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> level(0, 3);
  for (int t = 0; t < 10; ++t) {
    Image img(8, 8, 3);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = level(rng) / 3.0;
    const Segmentation seg = felzenszwalb_segment(img, 200, 0.0, 1);
    CHECK(same_partition(seg.labels, naive_segment(img, 200)));
  }
}

TEST_CASE("half-and-half image proposes left, right and full frame") {
  const Image img = halves(10, 16);
  ProposalParams params;
  params.sigma = 0.0;
  params.min_size = 1;
  const ProposalSet p = selective_search(img, params);
  CHECK(p.initial_regions == 2);
  CHECK(p.merge_count == 1);
  REQUIRE(p.boxes.size() == 3);
  CHECK(p.boxes[0] == Box{0, 0, 8, 10});
  CHECK(p.boxes[1] == Box{8, 0, 8, 10});
  CHECK(p.boxes[2] == Box{0, 0, 16, 10});
}

TEST_CASE("region features: counts, histograms and tight boxes") {
  SyntheticSpec spec;
  spec.train_per_class = 1;
  spec.val_per_class = 1;
  spec.test_per_class = 1;
  spec.background_images = 0;
  const auto data = gen_synthetic(spec, 3);
  const Image& img = data.train.items[0].image;
  const Segmentation seg = felzenszwalb_segment(img, 30, 0.8, 5);
  check_segmentation_structure(seg);
  const auto regions = region_features(img, seg);
  REQUIRE(static_cast<int>(regions.size()) == seg.region_count);
  int total = 0;
  for (int r = 0; r < seg.region_count; ++r) {
    const RegionDescriptor& d = regions[static_cast<std::size_t>(r)];
    total += d.pixel_count;
    for (int c = 0; c < 3; ++c) CHECK(d.histogram.segment(c * kHistogramBins, kHistogramBins).sum() == doctest::Approx(1.0).epsilon(1e-12));
    int x0 = img.width(), y0 = img.height(), x1 = -1, y1 = -1;
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        if (seg.label(y, x) == r) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    CHECK(d.bbox == Box{x0, y0, x1 - x0 + 1, y1 - y0 + 1});
    CHECK((d.histogram - pixel_histogram(img, seg.labels, {r})).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(total == img.height() * img.width());
}

TEST_CASE("constant region histogram is one bin per channel") {
  const Image img = Image::constant(4, 4, 3, 0.5);
  const auto regions = region_features(img, felzenszwalb_segment(img, 100, 0.8, 1));
  REQUIRE(regions.size() == 1);
  for (int c = 0; c < 3; ++c) CHECK(regions[0].histogram[c * kHistogramBins + 12] == 1.0);
}

TEST_CASE("merged descriptor equals recomputation from pixels") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    Image img(12, 12, 3);
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x)
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = u(rng);
    const Segmentation seg = felzenszwalb_segment(img, 20, 0.0, 4);
    REQUIRE(seg.region_count >= 2);
    const auto regions = region_features(img, seg);
    const RegionDescriptor m = merge_descriptors(regions[0], regions[1]);
    CHECK(m.pixel_count == regions[0].pixel_count + regions[1].pixel_count);
    CHECK(m.bbox == box_union(regions[0].bbox, regions[1].bbox));
    CHECK((m.histogram - pixel_histogram(img, seg.labels, {0, 1})).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("similarity measures stay in range") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(16, 16, 3);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = u(rng);
  const auto regions = region_features(img, felzenszwalb_segment(img, 200, 0.5, 3));
  for (std::size_t i = 0; i < regions.size(); ++i)
    for (std::size_t j = i + 1; j < regions.size(); ++j) {
      const double hi = histogram_intersection(regions[i], regions[j]);
      CHECK(hi >= 0.0);
      CHECK(hi <= 3.0 + 1e-12);
      const double s = size_similarity(regions[i], regions[j], 256);
      const double f = fill_similarity(regions[i], regions[j], 256);
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
      CHECK(s == doctest::Approx(1.0 - (regions[i].pixel_count + regions[j].pixel_count) / 256.0));
    }
  CHECK(histogram_intersection(regions[0], regions[0]) == doctest::Approx(3.0));
}

TEST_CASE("selective search invariants on synthetic images") {
  SyntheticSpec spec;
  spec.train_per_class = 2;
  spec.val_per_class = 1;
  spec.test_per_class = 1;
  spec.background_images = 0;
  const auto data = gen_synthetic(spec, 5);
  for (const auto& item : data.train.items) {
    const ProposalSet p = selective_search(item.image);
    CHECK(p.merge_count == p.initial_regions - 1);
    CHECK(static_cast<int>(p.boxes.size()) <= 2 * p.initial_regions - 1);
    CHECK(std::set<Box>(p.boxes.begin(), p.boxes.end()).size() == p.boxes.size());
    for (const Box& b : p.boxes) CHECK(b.inside(item.image.height(), item.image.width()));
    CHECK(std::find(p.boxes.begin(), p.boxes.end(), Box{0, 0, 64, 64}) != p.boxes.end());
    check_segmentation_structure(p.segmentation);
    CHECK(p.boxes == selective_search(item.image).boxes);
  }
}
