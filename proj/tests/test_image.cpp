#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "affina/image.hpp"
#include "test_util.hpp"

using namespace affina;

namespace {
constexpr double kPi = std::numbers::pi;

// apply the 3x3 matrix to a center-relative point
std::pair<double, double> apply(const std::array<double, 9>& m, double x, double y) {
    return {m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5]};
}
}  // namespace

TEST_CASE("affine_matrix identity") {
    const auto m = affine_matrix({0.0, 1.0, 0.0, 0.0});
    const std::array<double, 9> id{1, 0, 0, 0, 1, 0, 0, 0, 1};
    for (int i = 0; i < 9; ++i) CHECK(m[i] == id[i]);
}

TEST_CASE("affine_matrix quarter turn") {
    const auto m = affine_matrix({kPi / 2, 1.0, 0.0, 0.0});
    CHECK(m[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(m[1] == doctest::Approx(-1.0));
    CHECK(m[3] == doctest::Approx(1.0));
    CHECK(m[4] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(m[2] == 0.0);
    CHECK(m[5] == 0.0);
}

TEST_CASE("affine_matrix scale-then-translate factorization") {
    // hand-multiplied M_t * M_q for (theta=0, s=2, m=3, n=5):
    // center-relative (1,1) -> scaled (2,2) -> translated (5,7)
    const auto m = affine_matrix({0.0, 2.0, 3.0, 5.0});
    const auto [x, y] = apply(m, 1.0, 1.0);
    CHECK(x == doctest::Approx(5.0));
    CHECK(y == doctest::Approx(7.0));
}

TEST_CASE("invert_params composes to identity") {
    const AffineParams p{0.4, 1.3, 2.5, -1.5};
    const auto m = affine_matrix(p);
    const auto mi = affine_matrix(invert_params(p));
    const auto [x1, y1] = apply(m, 3.0, -2.0);
    const auto [x2, y2] = apply(mi, x1, y1);
    CHECK(x2 == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(y2 == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("warp_affine identity is bit-exact") {
    const ImageTensor img = test::smooth_random_image(33, 47, 11);
    const ImageTensor out = warp_affine(img, {0.0, 1.0, 0.0, 0.0});
    CHECK(test::hash_tensor(out) == test::hash_tensor(img));
}

TEST_CASE("integer translation moves a delta pixel exactly") {
    ImageTensor img(1, 9, 9);
    img.at(0, 4, 4) = 1.0;
    const ImageTensor out = warp_affine(img, {0.0, 1.0, 1.0, 0.0});
    CHECK(out.at(0, 4, 5) == 1.0);
    double total = 0.0;
    for (double v : out.data) total += v;
    CHECK(total == 1.0);  // no interpolation blur
}

TEST_CASE("warp round trip on a Gaussian blob") {
    const int n = 48;
    const ImageTensor img = test::gaussian_blob_image(n, n, 5);
    const AffineParams p{0.35, 1.2, 2.0, -3.0};
    const ImageTensor back = warp_inverse(warp_affine(img, p), p);
    // compare on the central half-disk only
    double max_err = 0.0;
    const double c = 0.5 * (n - 1);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            if (std::hypot(x - c, y - c) <= 0.25 * n)
                max_err = std::max(max_err, std::abs(back.at(0, y, x) - img.at(0, y, x)));
    CHECK(max_err <= 0.02);
}

TEST_CASE("warp_inverse equals warp_affine with inverted params") {
    const ImageTensor img = test::smooth_random_image(32, 32, 3);
    const AffineParams p{-0.3, 0.8, 1.0, 2.0};
    const ImageTensor a = warp_inverse(img, p);
    const ImageTensor b = warp_affine(img, invert_params(p));
    CHECK(tensor_max_abs_diff(a, b) == 0.0);
}

TEST_CASE("warp_inverse identity params") {
    const ImageTensor img = test::smooth_random_image(16, 16, 9);
    CHECK(test::hash_tensor(warp_inverse(img, {0.0, 1.0, 0.0, 0.0})) == test::hash_tensor(img));
}

TEST_CASE("half turn is self-inverse up to the lattice") {
    const ImageTensor img = test::gaussian_blob_image(32, 32, 21);
    const AffineParams p{kPi, 1.0, 0.0, 0.0};
    CHECK(tensor_max_abs_diff(warp_inverse(img, p), warp_affine(img, p)) <= 1e-9);
}

TEST_CASE("composition splits into translation after scaled-rotation") {
    const ImageTensor img = test::gaussian_blob_image(40, 40, 8);
    const AffineParams full{0.3, 1.1, 2.0, -1.0};
    const AffineParams q{0.3, 1.1, 0.0, 0.0};
    const AffineParams t{0.0, 1.0, 2.0, -1.0};
    const ImageTensor direct = warp_affine(img, full);
    const ImageTensor staged = warp_affine(warp_affine(img, q), t);
    CHECK(tensor_max_abs_diff(direct, staged) <= 0.02);
}

TEST_CASE("warped image intensities stay in [0,1]") {
    const ImageTensor img = test::smooth_random_image(24, 24, 4);
    const ImageTensor out = warp_affine(img, {0.7, 1.4, 3.0, 3.0});
    for (double v : out.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("sample_transform zero-width gives identity params") {
    const TransformDistribution d{0.0, 1.0, 1.0, 0.0, 0.0};
    Rng rng(99);
    for (int i = 0; i < 10; ++i) {
        const AffineParams p = sample_transform(d, rng);
        CHECK(p.theta == 0.0);
        CHECK(p.s == 1.0);
        CHECK(p.m == 0.0);
        CHECK(p.n == 0.0);
    }
}

TEST_CASE("sample_transform determinism") {
    const TransformDistribution d{0.5, 0.7, 1.4, 3.0, 2.0};
    Rng a(4242), b(4242);
    for (int i = 0; i < 100; ++i) {
        const AffineParams pa = sample_transform(d, a);
        const AffineParams pb = sample_transform(d, b);
        CHECK(pa.theta == pb.theta);
        CHECK(pa.s == pb.s);
        CHECK(pa.m == pb.m);
        CHECK(pa.n == pb.n);
    }
}

TEST_CASE("sample_transform theta mean is near zero") {
    const double theta_max = 30.0 * kPi / 180.0;
    const TransformDistribution d{theta_max, 1.0, 1.0, 0.0, 0.0};
    Rng rng(7);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += sample_transform(d, rng).theta;
    const double mean = sum / n;
    const double stderr_theta = theta_max / std::sqrt(3.0) / std::sqrt(double(n));
    CHECK(std::abs(mean) <= 3.0 * stderr_theta);
}

TEST_CASE("resize_bilinear same size is exact") {
    const ImageTensor img = test::smooth_random_image(20, 28, 15);
    CHECK(test::hash_tensor(resize_bilinear(img, 20, 28)) == test::hash_tensor(img));
}

TEST_CASE("resize adjoint matches the operator transpose") {
    // <A x, y> == <x, A^T y> on random tensors
    Rng rng(33);
    ImageTensor x(1, 13, 17);
    for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
    ImageTensor y(1, 9, 11);
    for (double& v : y.data) v = rng.uniform(-1.0, 1.0);
    const ImageTensor ax = resize_bilinear(x, 9, 11);
    const ImageTensor aty = resize_bilinear_adjoint(y, 13, 17);
    CHECK(tensor_dot(ax, y) == doctest::Approx(tensor_dot(x, aty)).epsilon(1e-12));
}

TEST_CASE("pnm round trip on quantized values") {
    const auto dir = std::filesystem::temp_directory_path() / "affina_image_test";
    std::filesystem::create_directories(dir);

    ImageTensor img(1, 6, 5);
    Rng rng(2);
    for (double& v : img.data) v = double(rng.uniform_index(256)) / 255.0;
    const std::string pgm = (dir / "t.pgm").string();
    write_pnm(img, pgm);
    CHECK(tensor_max_abs_diff(read_pnm(pgm), img) == 0.0);

    ImageTensor rgb(3, 4, 7);
    for (double& v : rgb.data) v = double(rng.uniform_index(256)) / 255.0;
    const std::string ppm = (dir / "t.ppm").string();
    write_pnm(rgb, ppm);
    CHECK(tensor_max_abs_diff(read_pnm(ppm), rgb) == 0.0);

    std::filesystem::remove_all(dir);
}
