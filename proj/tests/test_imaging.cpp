#include <doctest.h>

#include "tla/imaging.hpp"

#include <random>
#include <string>

using namespace tla;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

Image random_image(int h, int w, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix d(c, h * w);
  for (double& v : d.reshaped()) v = u(rng);
  return Image(h, w, c, d);
}

}  // namespace

TEST_CASE("ppm reader examples") {
  std::string white = "P6 1 1 255\n";
  white += std::string(3, '\xff');
  const Image w = read_ppm(bytes_of(white));
  CHECK(w.height() == 1);
  CHECK(w.width() == 1);
  CHECK(w.channels() == 3);
  CHECK(w == Image::constant(1, 1, 3, 1.0));

  std::string ramp = "P5\n2 2\n255\n";
  ramp += std::string{'\x00', '\x55', '\xaa', '\xff'};
  const Image r = read_ppm(bytes_of(ramp));
  CHECK(r.channels() == 1);
  CHECK(r.at(0, 0, 0) == 0.0);
  CHECK(r.at(0, 1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.at(1, 0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.at(1, 1, 0) == 1.0);
}

TEST_CASE("ppm reader errors carry byte offsets") {
  CHECK_THROWS_AS(read_ppm(bytes_of("P3 1 1 255\n")), ParseError);
  try {
    read_ppm(bytes_of("P6 1 1 65535\n"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 7);
  }
  try {
    read_ppm(bytes_of("P6 2 2 255\nabc"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }
  CHECK_THROWS_AS(read_ppm(bytes_of("P6 x 1 255\n")), ParseError);
  CHECK_THROWS_AS(read_ppm(bytes_of("")), ParseError);
}

TEST_CASE("ppm header comments are skipped") {
  std::string s = "P5\n# comment\n1 1\n255\n";
  s += '\x80';
  CHECK(read_ppm(bytes_of(s)).at(0, 0, 0) == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("canonical ppm files round-trip byte for byte") {
  for (int c : {1, 3}) {
    std::vector<std::uint8_t> file = bytes_of(std::string(c == 3 ? "P6" : "P5") + "\n3 2\n255\n");
    for (int i = 0; i < 6 * c; ++i) file.push_back(static_cast<std::uint8_t>(i * 37 % 256));
    CHECK(write_ppm(read_ppm(file)) == file);
  }
}

TEST_CASE("crop examples") {
  const Image img = random_image(5, 7, 3, 1);
  CHECK(crop(img, {0, 0, 7, 5}) == img);
  const Image px = crop(img, {0, 0, 1, 1});
  for (int c = 0; c < 3; ++c) CHECK(px.at(0, 0, c) == img.at(0, 0, c));
  const Image outer = crop(img, {1, 1, 5, 3});
  CHECK(crop(outer, {2, 1, 2, 2}) == crop(img, {3, 2, 2, 2}));
  CHECK_THROWS_AS(crop(img, {4, 0, 4, 1}), Error);
  CHECK_THROWS_AS(crop(img, {-1, 0, 2, 2}), Error);
}

TEST_CASE("resize_bilinear examples") {
  const Image img = random_image(4, 6, 3, 2);
  CHECK(resize_bilinear(img, 4, 6) == img);
  const Image flat = Image::constant(3, 3, 3, 0.37);
  const Image up = resize_bilinear(flat, 7, 5);
  CHECK((up.data().array() - 0.37).abs().maxCoeff() < 1e-15);

  Matrix d(1, 2);
  d << 0.0, 1.0;
  const Image r = resize_bilinear(Image(1, 2, 1, d), 1, 3);
  CHECK(r.at(0, 0, 0) == 0.0);
  CHECK(r.at(0, 1, 0) == 0.5);
  CHECK(r.at(0, 2, 0) == 1.0);
  CHECK_THROWS_AS(resize_bilinear(img, 0, 3), Error);
}

TEST_CASE("resize stays within the input range") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Image img = random_image(3 + static_cast<int>(s % 5), 4 + static_cast<int>(s % 3), 3, s);
    const Image r = resize_bilinear(img, 9, 2 + static_cast<int>(s % 11));
    CHECK(r.data().minCoeff() >= img.data().minCoeff());
    CHECK(r.data().maxCoeff() <= img.data().maxCoeff());
  }
}

TEST_CASE("hflip examples") {
  Matrix d(1, 2);
  d << 0.25, 0.75;
  const Image ab(1, 2, 1, d);
  const Image ba = hflip(ab);
  CHECK(ba.at(0, 0, 0) == 0.75);
  CHECK(ba.at(0, 1, 0) == 0.25);
  const Image img = random_image(5, 6, 3, 3);
  CHECK(hflip(hflip(img)) == img);
  Matrix s(1, 3);
  s << 0.1, 0.9, 0.1;
  CHECK(hflip(Image(1, 3, 1, s)) == Image(1, 3, 1, s));
}

TEST_CASE("ten_views examples") {
  const Image img = random_image(9, 11, 3, 4);
  const auto views = ten_views(img, 6);
  REQUIRE(views.size() == 10);
  for (const Image& v : views) {
    CHECK(v.height() == 6);
    CHECK(v.width() == 6);
  }
  CHECK(views[0] == crop(img, {2, 1, 6, 6}));
  CHECK(views[1] == crop(img, {0, 0, 6, 6}));
  CHECK(views[2] == crop(img, {5, 0, 6, 6}));
  CHECK(views[3] == crop(img, {0, 3, 6, 6}));
  CHECK(views[4] == crop(img, {5, 3, 6, 6}));
  for (int i = 0; i < 5; ++i) CHECK(views[static_cast<std::size_t>(i + 5)] == hflip(views[static_cast<std::size_t>(i)]));

  const Image square = random_image(6, 6, 1, 5);
  const auto same = ten_views(square, 6);
  for (int i = 0; i < 5; ++i) CHECK(same[static_cast<std::size_t>(i)] == square);
  CHECK_THROWS_AS(ten_views(square, 7), Error);
}

TEST_CASE("geometric operations never alias their input") {
  const Image img = random_image(6, 6, 3, 6);
  const Image copy = img;
  Image c = crop(img, {1, 1, 3, 3});
  Image r = resize_bilinear(img, 6, 6);
  Image f = hflip(img);
  c.at(0, 0, 0) = 0.5;
  r.at(0, 0, 0) = 0.5;
  f.at(0, 0, 0) = 0.5;
  CHECK(img == copy);
}

TEST_CASE("image construction validates values") {
  CHECK_THROWS_AS(Image(2, 2, 3, Matrix::Constant(3, 4, 1.5)), Error);
  CHECK_THROWS_AS(Image(2, 2, 2), Error);
  CHECK_THROWS_AS(Image(0, 2, 1), Error);
}

TEST_CASE("box helpers") {
  CHECK(iou({0, 0, 2, 2}, {0, 0, 2, 2}) == 1.0);
  CHECK(iou({0, 0, 2, 2}, {2, 0, 2, 2}) == 0.0);
  CHECK(iou({0, 0, 2, 2}, {1, 0, 2, 2}) == doctest::Approx(1.0 / 3.0));
  CHECK(box_union({0, 0, 2, 2}, {3, 1, 1, 4}) == Box{0, 0, 4, 5});
  CHECK(warp(Image::constant(8, 8, 3, 0.2), {1, 2, 3, 4}, 5, 5).height() == 5);
}
