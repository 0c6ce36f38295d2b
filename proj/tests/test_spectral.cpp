#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include <spectraforge/rng.hpp>
#include <spectraforge/spectral.hpp>

using namespace spectraforge;

TEST_CASE("default LED table is the eight-band head in peak order") {
    auto leds = default_led_table();
    REQUIRE(leds.size() == 8);
    for (size_t i = 1; i < leds.size(); ++i)
        REQUIRE(leds[i].lambda_peak > leds[i - 1].lambda_peak);
    REQUIRE(leds.front().lambda_peak == 395.0);
    REQUIRE(leds.front().delta_lambda == 10.0);
    REQUIRE(leds.back().lambda_peak == 940.0);
    REQUIRE(leds.back().delta_lambda == 40.0);
}

TEST_CASE("led response is a half-maximum-at-delta Gaussian") {
    // the weight ratio between peak and peak +/- delta must be exactly 1/2;
    // normalization cancels in the ratio, so this checks the sigma relation
    // independent of implementation constants
    std::vector<double> grid{500.0, 515.0, 530.0};  // peak, peak + delta
    LedBandSpec led{"x", 500.0, 15.0};
    auto w = led_response(led, grid);
    REQUIRE(w.size() == grid.size());
    REQUIRE(w[1] / w[0] == Catch::Approx(0.5).margin(1e-12));

    std::vector<double> grid2{470.0, 485.0, 500.0};
    auto w2 = led_response(led, grid2);
    REQUIRE(w2[1] / w2[2] == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("off-grid LEDs are rejected") {
    // IR LED against a visible-only grid
    LedBandSpec far{"y", 940.0, 10.0};
    std::vector<double> grid{400.0, 500.0, 600.0, 700.0};
    REQUIRE_THROWS_AS(led_response(far, grid), ValidationError);
    auto leds = default_led_table();
    REQUIRE_THROWS_AS(build_projection(leds, wavelength_grid(100, 400, 700)), ValidationError);
}

TEST_CASE("single-point grid at the peak takes all mass") {
    LedBandSpec led{"x", 500.0, 10.0};
    std::vector<double> grid{500.0};
    auto w = led_response(led, grid);
    REQUIRE(w.size() == 1);
    REQUIRE(w[0] == 1.0);
}

TEST_CASE("projection rows sum to one and sort by peak") {
    auto grid = wavelength_grid(299);
    auto leds = default_led_table();
    // scramble the table; build_projection must restore peak order
    std::swap(leds[0], leds[5]);
    std::swap(leds[2], leds[7]);
    ProjectionMatrix pm = build_projection(leds, grid);
    REQUIRE(pm.rows == 8);
    REQUIRE(pm.cols == 299);
    for (size_t i = 1; i < pm.band_wavelengths.size(); ++i)
        REQUIRE(pm.band_wavelengths[i] > pm.band_wavelengths[i - 1]);
    for (int r = 0; r < pm.rows; ++r) {
        double s = 0;
        for (int c = 0; c < pm.cols; ++c) s += pm.at(r, c);
        REQUIRE(s == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("project_cube equals the brute-force triple loop") {
    Rng rng(31);
    auto grid = wavelength_grid(299);
    ProjectionMatrix pm = build_projection(default_led_table(), grid);
    for (int trial = 0; trial < 3; ++trial) {
        SpectralCube gt(4, 4, grid);
        for (auto& v : gt.data) v = static_cast<float>(rng.uniform());
        SpectralCube out = project_cube(gt, pm);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                for (int b = 0; b < pm.rows; ++b) {
                    double acc = 0;
                    for (int c = 0; c < pm.cols; ++c)
                        acc += pm.at(b, c) * gt.at(x, y, c);
                    REQUIRE(out.at(x, y, b) == Catch::Approx(acc).margin(1e-6));
                }
    }
}

TEST_CASE("constant spectra survive projection unchanged") {
    auto grid = wavelength_grid(128);
    ProjectionMatrix pm = build_projection(default_led_table(), grid);
    SpectralCube gt(3, 3, grid);
    std::fill(gt.data.begin(), gt.data.end(), 0.42f);
    SpectralCube out = project_cube(gt, pm);
    for (float v : out.data) REQUIRE(v == Catch::Approx(0.42).margin(1e-6));
}

TEST_CASE("nearest-band projection picks one-hot rows") {
    auto grid = wavelength_grid(299);
    ProjectionMatrix pm = build_projection_nearest(default_led_table(), grid);
    for (int r = 0; r < pm.rows; ++r) {
        int ones = 0;
        double sum = 0;
        for (int c = 0; c < pm.cols; ++c) {
            double v = pm.at(r, c);
            if (v == 1.0) ++ones;
            sum += v;
        }
        REQUIRE(ones == 1);
        REQUIRE(sum == 1.0);
    }
}

namespace {

SpectralCube one_pixel(const std::vector<float>& spectrum) {
    std::vector<double> wl(spectrum.size());
    for (size_t i = 0; i < wl.size(); ++i) wl[i] = 400.0 + 10.0 * static_cast<double>(i);
    SpectralCube c(1, 1, wl);
    c.data = spectrum;
    return c;
}

}  // namespace

TEST_CASE("spectral angle fixtures") {
    SECTION("identical spectra score zero") {
        auto a = one_pixel({0.2f, 0.5f, 0.9f});
        REQUIRE(spectral_angle(a, a).at(0, 0) == 0.0f);
    }
    SECTION("scaling by two changes nothing") {
        auto a = one_pixel({0.2f, 0.5f, 0.9f});
        auto b = one_pixel({0.4f, 1.0f, 1.8f});
        REQUIRE(spectral_angle(a, b).at(0, 0) == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("orthogonal spectra score one") {
        auto a = one_pixel({1.0f, 0.0f, 0.0f});
        auto b = one_pixel({0.0f, 1.0f, 0.0f});
        REQUIRE(spectral_angle(a, b).at(0, 0) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("45 degrees normalizes to one half") {
        auto a = one_pixel({1.0f, 0.0f});
        auto b = one_pixel({1.0f, 1.0f});
        REQUIRE(spectral_angle(a, b).at(0, 0) == Catch::Approx(0.5).margin(1e-12));
    }
    SECTION("zero-vector conventions") {
        auto z = one_pixel({0.0f, 0.0f, 0.0f});
        auto a = one_pixel({0.3f, 0.1f, 0.0f});
        REQUIRE(spectral_angle(z, z).at(0, 0) == 0.0f);
        REQUIRE(spectral_angle(z, a).at(0, 0) == 1.0f);
        REQUIRE(spectral_angle(a, z).at(0, 0) == 1.0f);
    }
}

TEST_CASE("spectral angle maps stay inside [0,1]") {
    Rng rng(17);
    auto grid = wavelength_grid(16);
    SpectralCube a(40, 25, grid), b(40, 25, grid);
    for (auto& v : a.data) v = static_cast<float>(rng.uniform());
    for (auto& v : b.data) v = static_cast<float>(rng.uniform());
    AngularErrorMap m = spectral_angle(a, b);
    REQUIRE(m.e.size() == 1000);
    for (float v : m.e) {
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= 1.0f);
    }
}

TEST_CASE("class stats split by segmentation") {
    AngularErrorMap m;
    m.width = 2;
    m.height = 2;
    m.e = {0.1f, 0.2f, 0.3f, 0.4f};
    ValidityMask seg(2, 2, 1);
    seg.set(0, 0, true);   // root
    seg.set(1, 0, false);  // soil
    seg.set(0, 1, true);
    seg.set(1, 1, false);
    RootSoilStats s = class_stats(m, seg);
    REQUIRE(s.root.count == 2);
    REQUIRE(s.root.mean == Catch::Approx(0.2));
    REQUIRE(s.soil.mean == Catch::Approx(0.3));
    REQUIRE(s.root.stddev == Catch::Approx(0.1));

    ValidityMask none(2, 2, 1, false);  // everything soil
    RootSoilStats s2 = class_stats(m, none);
    REQUIRE_FALSE(s2.root.defined);
    REQUIRE(s2.soil.count == 4);
}
