#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace superloc {

/// 2-D point in metres. Used for mobile, scatterer, and base-station positions.
struct Location
{
    double x = 0.0;
    double y = 0.0;

    friend constexpr Location operator+(Location a, Location b) { return {a.x + b.x, a.y + b.y}; }
    friend constexpr Location operator-(Location a, Location b) { return {a.x - b.x, a.y - b.y}; }
    friend constexpr Location operator*(double s, Location a) { return {s * a.x, s * a.y}; }
    friend constexpr bool operator==(Location a, Location b) = default;

    [[nodiscard]] double norm() const { return std::hypot(x, y); }
    [[nodiscard]] bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline double distance(Location a, Location b) { return (a - b).norm(); }

/// Axis-aligned rectangle used both as the simulation scene and the solver
/// search domain.
struct Scene
{
    Location min{0.0, 0.0};
    Location max{1000.0, 1000.0};

    [[nodiscard]] double width() const { return max.x - min.x; }
    [[nodiscard]] double height() const { return max.y - min.y; }
    [[nodiscard]] bool empty() const { return !(width() > 0.0) || !(height() > 0.0); }
    [[nodiscard]] bool contains(Location p) const
    {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
    }
};

struct PathGeometry
{
    double toa = 0.0; ///< seconds
    double doa = 0.0; ///< radians, measured from +y towards +x
};

class DegenerateGeometry : public std::runtime_error
{
public:
    explicit DegenerateGeometry(const std::string& what) : std::runtime_error(what) {}
};

/// Direct-path delay ||mobile - base|| / c.
double toa_los(Location mobile, Location base, double c);

/// Single-bounce delay (||mobile - scatter|| + ||scatter - base||) / c.
double toa_nlos(Location mobile, Location scatter, Location base, double c);

/// Arrival angle at `base` of a wave coming from `source`, atan2(dx, dy).
/// Zero along +y, +pi/2 along +x. Throws DegenerateGeometry when the two
/// points coincide.
double doa(Location source, Location base);

PathGeometry path_geometry(Location mobile, Location scatter, Location base, double c);

// Partial derivatives of the single-bounce delay and of the arrival angle.
// At mobile == scatter the mobile-scatter leg is not differentiable; the
// zero subgradient is used for that leg.
struct DelayPartials
{
    Location d_mobile;  ///< d tau / d mobile, s/m
    Location d_scatter; ///< d tau / d scatter, s/m
};

DelayPartials toa_nlos_partials(Location mobile, Location scatter, Location base, double c);

/// d theta / d scatter, rad/m.
Location doa_partials(Location source, Location base);

/// One-sided directional derivative of toa_nlos along (dir_mobile, dir_scatter).
/// Exact also at the mobile == scatter kink, where it equals
/// (|dir_mobile - dir_scatter| + <u, dir_scatter>) / c.
double toa_nlos_directional(Location mobile, Location scatter, Location base,
                            Location dir_mobile, Location dir_scatter, double c);

/// A propagation path before canonicalisation: a direct path has no scatterer.
struct PathSpec
{
    Location mobile;
    std::optional<Location> scatter;
};

/// Places the virtual scatterer of a direct path at the mobile itself, so every
/// path takes the single-bounce form. Physical scatterers pass through.
Location canonicalise_virtual_scatter(const PathSpec& path);

} // namespace superloc
