#ifndef COOC_ATLAS_SYNTHETIC_HPP
#define COOC_ATLAS_SYNTHETIC_HPP

#include "cooc_atlas/cooc_table.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cooc_atlas {

// Ground truth co-occurrence probability on [0,1]^2: a diagonal ridge, an
// off-diagonal spot and a horizontal band (v-interval, any u) over a baseline.
struct SyntheticParams {
    double baseline = 0.01;
    double ridge_amplitude = 0.9;
    double ridge_width = 0.06;
    double spot_amplitude = 0.6;
    double spot_u = 0.15;
    double spot_v = 0.65;
    double spot_width = 0.06;
    double band_amplitude = 0.25;
    double band_lo = 0.6;
    double band_hi = 0.7;

    double f(double u, double v) const;
};

struct SyntheticData {
    CoocTable table;
    SyntheticParams params;
    std::uint64_t seed = 0;
    int samples = 0;
    std::vector<double> latent_a;
    std::vector<double> latent_b;

    double truth(std::size_t i, std::size_t j) const { return params.f(latent_a[i], latent_b[j]); }
};

// Latent positions uniform on [0,1]; each cell gets `samples` Bernoulli(f)
// draws. Draw order: all A positions, all B positions, then cells row-major.
SyntheticData generate_synthetic(int n_a, int n_b, std::uint64_t seed, int samples, const SyntheticParams& params = {});

// Three-domain analogue: ridge along u = v = w plus one off-diagonal spot.
struct SyntheticParams3 {
    double baseline = 0.01;
    double ridge_amplitude = 0.9;
    double ridge_width = 0.08;
    double spot_amplitude = 0.5;
    double spot_u = 0.2;
    double spot_v = 0.7;
    double spot_w = 0.4;
    double spot_width = 0.08;

    double f(double u, double v, double w) const;
};

struct SyntheticData3 {
    CoocTable table;
    SyntheticParams3 params;
    std::uint64_t seed = 0;
    int samples = 0;
    std::vector<double> latent_a;
    std::vector<double> latent_b;
    std::vector<double> latent_c;
};

SyntheticData3 generate_synthetic3(int n_a, int n_b, int n_c, std::uint64_t seed, int samples, const SyntheticParams3& params = {});

// Sidecar metadata: `key=value` lines (`#` comments), latent positions as
// comma-separated lists.
std::string format_sidecar(const SyntheticData& data);
std::string format_sidecar(const SyntheticData3& data);
SyntheticData read_synthetic(const std::string& table_path, const std::string& sidecar_path);

}

#endif
