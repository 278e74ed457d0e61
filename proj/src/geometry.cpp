#include "superloc/geometry.hpp"

namespace superloc {

double toa_los(Location mobile, Location base, double c)
{
    return distance(mobile, base) / c;
}

double toa_nlos(Location mobile, Location scatter, Location base, double c)
{
    return (distance(mobile, scatter) + distance(scatter, base)) / c;
}

double doa(Location source, Location base)
{
    const Location d = source - base;
    if (d.x == 0.0 && d.y == 0.0)
        throw DegenerateGeometry("arrival angle undefined: source coincides with base station");
    return std::atan2(d.x, d.y);
}

PathGeometry path_geometry(Location mobile, Location scatter, Location base, double c)
{
    return {toa_nlos(mobile, scatter, base, c), doa(scatter, base)};
}

namespace {

Location unit_or_zero(Location v)
{
    const double n = v.norm();
    if (n == 0.0)
        return {0.0, 0.0};
    return (1.0 / n) * v;
}

double dot(Location a, Location b) { return a.x * b.x + a.y * b.y; }

} // namespace

DelayPartials toa_nlos_partials(Location mobile, Location scatter, Location base, double c)
{
    const Location u_ts = unit_or_zero(mobile - scatter);
    const Location u_sb = unit_or_zero(scatter - base);
    return {(1.0 / c) * u_ts, (1.0 / c) * (u_sb - u_ts)};
}

Location doa_partials(Location source, Location base)
{
    const Location d = source - base;
    const double r2 = d.x * d.x + d.y * d.y;
    if (r2 == 0.0)
        throw DegenerateGeometry("arrival angle undefined: source coincides with base station");
    return {d.y / r2, -d.x / r2};
}

double toa_nlos_directional(Location mobile, Location scatter, Location base,
                            Location dir_mobile, Location dir_scatter, double c)
{
    const Location ts = mobile - scatter;
    const Location dts = dir_mobile - dir_scatter;
    const double leg1 = ts.norm() == 0.0 ? dts.norm() : dot(unit_or_zero(ts), dts);
    const Location sb = scatter - base;
    const double leg2 = sb.norm() == 0.0 ? dir_scatter.norm() : dot(unit_or_zero(sb), dir_scatter);
    return (leg1 + leg2) / c;
}

Location canonicalise_virtual_scatter(const PathSpec& path)
{
    return path.scatter.value_or(path.mobile);
}

} // namespace superloc
