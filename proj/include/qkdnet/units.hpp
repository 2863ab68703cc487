#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace qkdnet {

inline constexpr double kPlanckJs = 6.62607015e-34;
inline constexpr double kLightSpeedMs = 2.99792458e8;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

inline double wavelength_nm_from_thz(double freq_thz) {
    return kLightSpeedMs / (freq_thz * 1e12) * 1e9;
}

inline double photon_energy_j_from_nm(double wavelength_nm) {
    return kPlanckJs * kLightSpeedMs / (wavelength_nm * 1e-9);
}

/// Shortest round-trip decimal form; locale-independent, so identical input
/// always serializes to identical bytes.
inline std::string num_str(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string num_str(long long v) {
    char buf[24];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string num_str_fixed(double v, int precision) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
    return std::string(buf, res.ptr);
}

} // namespace qkdnet
