#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "superloc/geometry.hpp"
#include "superloc/scenario.hpp"

namespace superloc {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

enum class PilotKind
{
    Ones,
    Qpsk,
};

/// Physical, array and waveform constants shared by every base station.
struct SystemConfig
{
    int num_antennas = 16;
    int num_subcarriers = 32;
    double subcarrier_spacing = 10e3; ///< Hz
    double carrier_freq = 2e9;        ///< Hz
    double element_spacing = 0.0;     ///< metres; 0 selects half a wavelength
    double speed_of_light = 3e8;      ///< m/s
    std::vector<Location> bs_positions;
    CVector symbols; ///< pilot s(n), length num_subcarriers

    /// Four corner base stations of the 1 km square, 32 subcarriers at 10 kHz,
    /// 2 GHz carrier, 16-element half-wavelength array, all-ones pilots.
    static SystemConfig defaults();

    [[nodiscard]] int num_bs() const { return static_cast<int>(bs_positions.size()); }
    [[nodiscard]] double wavelength() const { return speed_of_light / carrier_freq; }
    [[nodiscard]] double spacing() const
    {
        return element_spacing > 0.0 ? element_spacing : 0.5 * wavelength();
    }

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// Unit-modulus pilot sequence; Qpsk draws from {±1 ± i}/sqrt(2) with `seed`.
CVector make_pilots(PilotKind kind, int n, std::uint64_t seed = 0);

/// ULA response, element m = exp(i 2pi/lambda L sin(theta) m).
CVector steering(double theta, const SystemConfig& cfg);

/// Element n = s(n) exp(-i 2pi n df tau).
CVector delay_vector(double tau, const SystemConfig& cfg);

/// Rank-one response a(theta) b(tau)^T of a mobile/scatterer pair at one base.
CMatrix atom(Location mobile, Location scatter, int bs_index, const SystemConfig& cfg);

struct MeasurementSet
{
    std::vector<CMatrix> per_bs;
    std::optional<double> snr_db;
    std::optional<std::uint64_t> noise_seed;
};

class EmptyScenario : public std::runtime_error
{
public:
    explicit EmptyScenario(const std::string& what) : std::runtime_error(what) {}
};

/// Noise-free Y_j = sum_k gamma_jk B_j(l_t, l_sk). Direct paths are
/// canonicalised onto the virtual scatterer first.
MeasurementSet synthesize(const Scenario& scenario, const SystemConfig& cfg);

/// Adds circular complex Gaussian noise per base station so that
/// ||Y_j||^2 / E||N_j||^2 equals the requested SNR. +inf returns the input.
MeasurementSet add_awgn(const MeasurementSet& measurements, double snr_db, std::uint64_t seed);

/// sum_{m,n} conj(a_mn) b_mn.
inline cplx frobenius_inner(const CMatrix& a, const CMatrix& b)
{
    return (a.conjugate().cwiseProduct(b)).sum();
}

} // namespace superloc
