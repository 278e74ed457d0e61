#include "superloc/signal.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "superloc/rng.hpp"

namespace superloc {

namespace {

void require(bool ok, const std::string& field, const std::string& msg)
{
    if (!ok)
        throw std::invalid_argument(field + ": " + msg);
}

} // namespace

SystemConfig SystemConfig::defaults()
{
    SystemConfig cfg;
    cfg.bs_positions = {{0.0, 0.0}, {0.0, 1000.0}, {1000.0, 0.0}, {1000.0, 1000.0}};
    cfg.symbols = make_pilots(PilotKind::Ones, cfg.num_subcarriers);
    return cfg;
}

void SystemConfig::validate() const
{
    require(!bs_positions.empty(), "bs_positions", "at least one base station required");
    for (const auto& p : bs_positions)
        require(p.finite(), "bs_positions", "non-finite coordinate");
    require(num_antennas >= 2, "num_antennas", "must be >= 2");
    require(num_subcarriers >= 2, "num_subcarriers", "must be >= 2");
    require(subcarrier_spacing > 0.0 && std::isfinite(subcarrier_spacing), "subcarrier_spacing", "must be > 0");
    require(carrier_freq > 0.0 && std::isfinite(carrier_freq), "carrier_freq", "must be > 0");
    require(speed_of_light > 0.0 && std::isfinite(speed_of_light), "speed_of_light", "must be > 0");
    require(element_spacing >= 0.0 && std::isfinite(element_spacing), "element_spacing", "must be > 0 (or 0 for half wavelength)");
    require(spacing() <= 0.5 * wavelength() * (1.0 + 1e-12), "element_spacing", "exceeds half a wavelength (spatial aliasing)");
    require(symbols.size() == num_subcarriers, "symbols", "length must equal num_subcarriers");
    for (Eigen::Index n = 0; n < symbols.size(); ++n)
        require(std::abs(std::abs(symbols[n]) - 1.0) < 1e-9, "symbols", "pilots must have unit modulus");
}

CVector make_pilots(PilotKind kind, int n, std::uint64_t seed)
{
    CVector s = CVector::Ones(n);
    if (kind == PilotKind::Qpsk) {
        Rng rng(seed);
        std::uniform_int_distribution<int> quadrant(0, 3);
        for (int k = 0; k < n; ++k)
            s[k] = std::polar(1.0, std::numbers::pi / 4.0 + std::numbers::pi / 2.0 * quadrant(rng));
    }
    return s;
}

CVector steering(double theta, const SystemConfig& cfg)
{
    const double step = 2.0 * std::numbers::pi / cfg.wavelength() * cfg.spacing() * std::sin(theta);
    CVector a(cfg.num_antennas);
    for (int m = 0; m < cfg.num_antennas; ++m)
        a[m] = std::polar(1.0, step * m);
    return a;
}

CVector delay_vector(double tau, const SystemConfig& cfg)
{
    const double step = -2.0 * std::numbers::pi * cfg.subcarrier_spacing * tau;
    CVector b(cfg.num_subcarriers);
    for (int n = 0; n < cfg.num_subcarriers; ++n)
        b[n] = cfg.symbols[n] * std::polar(1.0, step * n);
    return b;
}

CMatrix atom(Location mobile, Location scatter, int bs_index, const SystemConfig& cfg)
{
    const Location base = cfg.bs_positions.at(static_cast<std::size_t>(bs_index));
    const PathGeometry g = path_geometry(mobile, scatter, base, cfg.speed_of_light);
    return steering(g.doa, cfg) * delay_vector(g.toa, cfg).transpose();
}

MeasurementSet synthesize(const Scenario& scenario, const SystemConfig& cfg)
{
    if (static_cast<int>(scenario.per_bs_paths.size()) != cfg.num_bs())
        throw std::invalid_argument("scenario has " + std::to_string(scenario.per_bs_paths.size()) +
                                    " path lists for " + std::to_string(cfg.num_bs()) + " base stations");
    MeasurementSet out;
    out.per_bs.reserve(scenario.per_bs_paths.size());
    for (int j = 0; j < cfg.num_bs(); ++j) {
        const auto& paths = scenario.per_bs_paths[static_cast<std::size_t>(j)];
        if (paths.empty())
            throw EmptyScenario("base station " + std::to_string(j) + " receives no paths");
        CMatrix y = CMatrix::Zero(cfg.num_antennas, cfg.num_subcarriers);
        for (const auto& p : paths) {
            const Location s = canonicalise_virtual_scatter({scenario.mobile, p.scatter});
            y += p.gain * atom(scenario.mobile, s, j, cfg);
        }
        out.per_bs.push_back(std::move(y));
    }
    return out;
}

MeasurementSet add_awgn(const MeasurementSet& measurements, double snr_db, std::uint64_t seed)
{
    MeasurementSet out = measurements;
    if (std::isinf(snr_db) && snr_db > 0.0)
        return out;
    out.snr_db = snr_db;
    out.noise_seed = seed;
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double snr_lin = std::pow(10.0, snr_db / 10.0);
    for (auto& y : out.per_bs) {
        const double entries = static_cast<double>(y.size());
        const double noise_var = y.squaredNorm() / (entries * snr_lin);
        const double sd = std::sqrt(noise_var / 2.0);
        for (Eigen::Index c = 0; c < y.cols(); ++c)
            for (Eigen::Index r = 0; r < y.rows(); ++r) {
                const double re = normal(rng);
                const double im = normal(rng);
                y(r, c) += cplx(sd * re, sd * im);
            }
    }
    return out;
}

} // namespace superloc
