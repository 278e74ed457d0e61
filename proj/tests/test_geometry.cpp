#include "doctest.h"

#include <cmath>
#include <random>

#include "superloc/geometry.hpp"

using namespace superloc;

namespace {
constexpr double kC = 3e8;
constexpr double kPi = 3.14159265358979323846;
} // namespace

TEST_CASE("toa_los examples")
{
    CHECK(toa_los({0, 300}, {0, 0}, kC) == doctest::Approx(1.0e-6).epsilon(1e-14));
    CHECK(toa_los({5, 5}, {5, 5}, kC) == 0.0);
    CHECK(toa_los({300, 400}, {0, 0}, kC) == doctest::Approx(500.0 / kC).epsilon(1e-14));
}

TEST_CASE("doa follows atan2(dx, dy)")
{
    CHECK(doa({0, 100}, {0, 0}) == doctest::Approx(0.0));
    CHECK(doa({100, 100}, {0, 0}) == doctest::Approx(kPi / 4));
    CHECK(doa({100, 0}, {0, 0}) == doctest::Approx(kPi / 2));
    CHECK(doa({0, -100}, {0, 0}) == doctest::Approx(kPi));
    CHECK_THROWS_AS(doa({3, 4}, {3, 4}), DegenerateGeometry);
}

TEST_CASE("toa_nlos examples")
{
    CHECK(toa_nlos({0, 600}, {0, 300}, {0, 0}, kC) == doctest::Approx(2.0e-6).epsilon(1e-14));
    CHECK(toa_nlos({300, 400}, {300, 0}, {0, 0}, kC) == doctest::Approx(700.0 / kC).epsilon(1e-14));
    CHECK(toa_nlos({123, 456}, {123, 456}, {1000, 0}, kC) == toa_los({123, 456}, {1000, 0}, kC));
}

TEST_CASE("single bounce never beats the direct path")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1000.0);
    for (int i = 0; i < 1000; ++i) {
        const Location t{u(rng), u(rng)}, s{u(rng), u(rng)}, b{u(rng), u(rng)};
        CHECK(toa_nlos(t, s, b, kC) >= toa_los(t, b, kC) * (1 - 1e-15));
    }
}

TEST_CASE("virtual scatterer sits on the mobile")
{
    CHECK(canonicalise_virtual_scatter({{500, 500}, std::nullopt}) == Location{500, 500});
    CHECK(canonicalise_virtual_scatter({{500, 500}, Location{200, 700}}) == Location{200, 700});
    const Location t{640, 120};
    const Location s = canonicalise_virtual_scatter({t, std::nullopt});
    CHECK(toa_nlos(t, s, {0, 1000}, kC) == doctest::Approx(toa_los(t, {0, 1000}, kC)).epsilon(1e-15));
}

TEST_CASE("delay and angle partials match central differences")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(50.0, 950.0);
    const double h = 1e-4;
    for (int i = 0; i < 50; ++i) {
        const Location t{u(rng), u(rng)}, s{u(rng), u(rng)}, b{0, 0};
        const DelayPartials p = toa_nlos_partials(t, s, b, kC);
        const double dtx = (toa_nlos(t + Location{h, 0}, s, b, kC) - toa_nlos(t - Location{h, 0}, s, b, kC)) / (2 * h);
        const double dsy = (toa_nlos(t, s + Location{0, h}, b, kC) - toa_nlos(t, s - Location{0, h}, b, kC)) / (2 * h);
        CHECK(p.d_mobile.x == doctest::Approx(dtx).epsilon(1e-6));
        CHECK(p.d_scatter.y == doctest::Approx(dsy).epsilon(1e-6));
        const Location g = doa_partials(s, b);
        const double dax = (doa(s + Location{h, 0}, b) - doa(s - Location{h, 0}, b)) / (2 * h);
        CHECK(g.x == doctest::Approx(dax).epsilon(1e-6));
    }
}

TEST_CASE("directional derivative at the collapsed point")
{
    // Moving mobile and scatterer together along the base-mobile axis: the
    // delay then grows at 1/c, moving the scatterer alone at 2/c.
    const Location b{0, 0};
    const Location t{300, 400};
    const Location u{0.6, 0.8};
    CHECK(toa_nlos_directional(t, t, b, u, u, kC) == doctest::Approx(1.0 / kC));
    CHECK(toa_nlos_directional(t, t, b, {0, 0}, u, kC) == doctest::Approx(2.0 / kC));
    const double h = 1e-3;
    CHECK((toa_nlos(t + h * u, t + h * u, b, kC) - toa_nlos(t, t, b, kC)) / h ==
          doctest::Approx(toa_nlos_directional(t, t, b, u, u, kC)).epsilon(1e-9));
}
