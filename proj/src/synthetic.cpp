#include "tla/synthetic.hpp"

#include <cmath>
#include <random>

namespace tla {

namespace {

using Colour = std::array<double, 3>;

struct Palette {
  Colour body;
  Colour ink;
  Colour paper;
};

// Superclass appearance; indices wrap for more than three superclasses.
const Palette kPalettes[] = {
    {{0.62, 0.42, 0.25}, {0.12, 0.08, 0.05}, {0.96, 0.86, 0.32}},
    {{0.30, 0.46, 0.72}, {0.06, 0.10, 0.22}, {0.92, 0.92, 0.96}},
    {{0.42, 0.62, 0.30}, {0.10, 0.16, 0.06}, {0.96, 0.72, 0.80}},
};

constexpr Motif kSlotMotifs[kPartSlots][4] = {
    {Motif::horizontal_stripes, Motif::vertical_stripes, Motif::checkerboard, Motif::dots},
    {Motif::checkerboard, Motif::dots, Motif::horizontal_stripes, Motif::vertical_stripes},
};

constexpr double kPartInset = 0.08;

int motifs_per_slot(int fine_per_super) {
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(fine_per_super))));
}

class Painter {
 public:
  Painter(Image& img, std::mt19937_64& rng) : img_(img), rng_(rng) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  Colour random_colour() { return {uniform(0.0, 1.0), uniform(0.0, 1.0), uniform(0.0, 1.0)}; }

  void set(int y, int x, const Colour& c) {
    if (y < 0 || x < 0 || y >= img_.height() || x >= img_.width()) return;
    for (int ch = 0; ch < 3; ++ch) img_.at(y, x, ch) = c[static_cast<std::size_t>(ch)];
  }

  void background() {
    const Colour base = {uniform(0.15, 0.85), uniform(0.15, 0.85), uniform(0.15, 0.85)};
    const double gx = uniform(-0.15, 0.15);
    const double gy = uniform(-0.15, 0.15);
    const double n = img_.width();
    for (int y = 0; y < img_.height(); ++y)
      for (int x = 0; x < img_.width(); ++x) {
        const double shade = gx * (x / n - 0.5) + gy * (y / n - 0.5);
        set(y, x, {base[0] + shade, base[1] + shade, base[2] + shade});
      }
  }

  // Solid or striped rectangles and ellipses scattered over the frame.
  void clutter(int count) {
    for (int i = 0; i < count; ++i) {
      const int w = uniform_int(4, 20);
      const int h = uniform_int(4, 20);
      const int x0 = uniform_int(-w / 2, img_.width() - w / 2);
      const int y0 = uniform_int(-h / 2, img_.height() - h / 2);
      const bool ellipse = uniform(0.0, 1.0) < 0.5;
      const bool striped = uniform(0.0, 1.0) < 0.25;
      const Colour a = random_colour();
      const Colour b = random_colour();
      const bool vertical = uniform(0.0, 1.0) < 0.5;
      const int period = uniform_int(3, 6);
      for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) {
          if (ellipse) {
            const double dx = (x + 0.5 - x0 - w / 2.0) / (w / 2.0);
            const double dy = (y + 0.5 - y0 - h / 2.0) / (h / 2.0);
            if (dx * dx + dy * dy > 1.0) continue;
          }
          const int phase = vertical ? x - x0 : y - y0;
          set(y, x, striped && (phase % period) * 2 >= period ? b : a);
        }
    }
  }

  void silhouette(const Box& box, int superclass, const Colour& body) {
    for (int y = box.y; y < box.y + box.h; ++y)
      for (int x = box.x; x < box.x + box.w; ++x) {
        const double dx = (x + 0.5 - box.x - box.w / 2.0) / (box.w / 2.0);
        const double dy = (y + 0.5 - box.y - box.h / 2.0) / (box.h / 2.0);
        bool inside = true;
        switch (superclass % 3) {
          case 0:  // ellipse
            inside = dx * dx + dy * dy <= 1.0;
            break;
          case 1: {  // rounded rectangle
            const double r = 0.45;
            const double ex = std::max(0.0, std::abs(dx) - (1.0 - r));
            const double ey = std::max(0.0, std::abs(dy) - (1.0 - r));
            inside = ex * ex + ey * ey <= r * r;
            break;
          }
          default:  // superellipse
            inside = std::pow(std::abs(dx), 4) + std::pow(std::abs(dy), 4) <= 1.0;
        }
        if (inside) set(y, x, body);
      }
  }

  void noise(double sigma) {
    if (sigma <= 0.0) return;
    std::normal_distribution<double> n(0.0, sigma);
    for (int y = 0; y < img_.height(); ++y)
      for (int x = 0; x < img_.width(); ++x)
        for (int c = 0; c < img_.channels(); ++c) img_.at(y, x, c) += n(rng_);
    img_.clamp_values();
  }

 private:
  Image& img_;
  std::mt19937_64& rng_;
};

Colour jitter(const Colour& c, Painter& p, double amount) {
  return {std::clamp(c[0] + p.uniform(-amount, amount), 0.0, 1.0),
          std::clamp(c[1] + p.uniform(-amount, amount), 0.0, 1.0),
          std::clamp(c[2] + p.uniform(-amount, amount), 0.0, 1.0)};
}

LabeledImage make_object_image(const SyntheticSpec& spec, int fine, std::mt19937_64& rng) {
  const int n = spec.image_size;
  LabeledImage out;
  out.fine = fine;
  out.superclass = fine / spec.fine_per_super;
  out.motifs = fine_class_motifs(fine % spec.fine_per_super, spec.fine_per_super);
  out.image = Image::constant(n, n, 3, 0.0);
  Painter painter(out.image, rng);
  painter.background();
  painter.clutter(spec.clutter);

  const int side = static_cast<int>(std::lround(painter.uniform(spec.object_min, spec.object_max) * n));
  const int w = std::clamp(static_cast<int>(std::lround(side * painter.uniform(0.9, 1.1))), 8, n);
  const int h = std::clamp(static_cast<int>(std::lround(side * painter.uniform(0.9, 1.1))), 8, n);
  out.object = {painter.uniform_int(0, n - w), painter.uniform_int(0, n - h), w, h};

  const Palette& palette = kPalettes[out.superclass % 3];
  painter.silhouette(out.object, out.superclass, jitter(palette.body, painter, 0.06));

  const int pw = std::max(2, static_cast<int>(std::lround(spec.part_fraction * w)));
  const int ph = std::max(2, static_cast<int>(std::lround(spec.part_fraction * h)));
  const int inset_x = static_cast<int>(std::lround(kPartInset * w));
  const int inset_y = static_cast<int>(std::lround(kPartInset * h));
  const int slack = std::max(0, static_cast<int>(std::lround(0.03 * side)));
  auto offset = [&] { return painter.uniform_int(-slack, slack); };
  const int x0 = std::clamp(out.object.x + inset_x + offset(), out.object.x, out.object.x + w - pw);
  const int y0 = std::clamp(out.object.y + inset_y + offset(), out.object.y, out.object.y + h - ph);
  const int x1 = std::clamp(out.object.x + w - inset_x - pw + offset(), out.object.x, out.object.x + w - pw);
  const int y1 = std::clamp(out.object.y + h - inset_y - ph + offset(), out.object.y, out.object.y + h - ph);
  out.parts = {Box{x0, y0, pw, ph}, Box{x1, y1, pw, ph}};
  const Colour ink = jitter(palette.ink, painter, 0.04);
  const Colour paper = jitter(palette.paper, painter, 0.04);
  for (int s = 0; s < kPartSlots; ++s)
    paint_motif(out.image, out.parts[static_cast<std::size_t>(s)], out.motifs[static_cast<std::size_t>(s)], ink, paper,
                spec.motif_period);
  painter.noise(spec.noise);
  return out;
}

Image make_background_image(const SyntheticSpec& spec, std::mt19937_64& rng) {
  Image img = Image::constant(spec.image_size, spec.image_size, 3, 0.0);
  Painter painter(img, rng);
  painter.background();
  painter.clutter(spec.clutter);
  painter.noise(spec.noise);
  return img;
}

LabeledDataset make_split(const SyntheticSpec& spec, int per_class, std::mt19937_64& rng) {
  LabeledDataset out;
  out.items.reserve(static_cast<std::size_t>(per_class * spec.fine_classes()));
  for (int i = 0; i < per_class; ++i)
    for (int c = 0; c < spec.fine_classes(); ++c) out.items.push_back(make_object_image(spec, c, rng));
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (image_size < 16) throw Error("synthetic: image size must be at least 16");
  if (superclasses < 1) throw Error("synthetic: need at least one superclass");
  if (fine_per_super < 2) throw Error("synthetic: need at least two fine classes per superclass");
  if (motifs_per_slot(fine_per_super) > 4) throw Error("synthetic: at most 16 fine classes per superclass");
  if (train_per_class < 1 || val_per_class < 1 || test_per_class < 1 || background_images < 0)
    throw Error("synthetic: split sizes must be positive");
  if (object_min <= 0.0 || object_max > 1.0 || object_min > object_max) throw Error("synthetic: bad object size range");
  if (part_fraction <= 0.0 || 2.0 * part_fraction + 2.0 * kPartInset > 1.0)
    throw Error("synthetic: " + std::to_string(kPartSlots) + " parts of fraction " + std::to_string(part_fraction) +
                " exceed the silhouette capacity");
  if (motif_period < 2) throw Error("synthetic: motif period must be at least 2");
  if (noise < 0.0 || clutter < 0) throw Error("synthetic: negative noise or clutter");
}

std::array<Motif, kPartSlots> fine_class_motifs(int index, int fine_per_super) {
  const int m = motifs_per_slot(fine_per_super);
  return {kSlotMotifs[0][index % m], kSlotMotifs[1][index / m]};
}

void paint_motif(Image& img, const Box& box, Motif motif, const std::array<double, 3>& ink,
                 const std::array<double, 3>& paper, int period) {
  for (int y = box.y; y < box.y + box.h; ++y)
    for (int x = box.x; x < box.x + box.w; ++x) {
      if (y < 0 || x < 0 || y >= img.height() || x >= img.width()) continue;
      const int ly = y - box.y;
      const int lx = x - box.x;
      const int half = std::max(1, period / 2);
      bool dark = false;
      switch (motif) {
        case Motif::horizontal_stripes:
          dark = ly % period < half;
          break;
        case Motif::vertical_stripes:
          dark = lx % period < half;
          break;
        case Motif::checkerboard:
          dark = (ly / half + lx / half) % 2 == 0;
          break;
        case Motif::dots:
          dark = ly % period < half && lx % period < half;
          break;
      }
      const auto& c = dark ? ink : paper;
      for (int ch = 0; ch < img.channels(); ++ch) img.at(y, x, ch) = c[static_cast<std::size_t>(ch)];
    }
}

SyntheticBenchmark gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  SyntheticBenchmark out;
  out.train = make_split(spec, spec.train_per_class, rng);
  out.val = make_split(spec, spec.val_per_class, rng);
  out.test = make_split(spec, spec.test_per_class, rng);
  out.background.reserve(static_cast<std::size_t>(spec.background_images));
  for (int i = 0; i < spec.background_images; ++i) out.background.push_back(make_background_image(spec, rng));
  return out;
}

}  // namespace tla
