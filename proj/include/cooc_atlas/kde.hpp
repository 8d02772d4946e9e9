#ifndef COOC_ATLAS_KDE_HPP
#define COOC_ATLAS_KDE_HPP

#include "cooc_atlas/cooc_table.hpp"
#include "cooc_atlas/model.hpp"

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cooc_atlas {

// Densities below exp(kLogUnderflow) are treated as zero.
inline constexpr double kLogUnderflow = -745.0;

// (2 pi sigma^2)^(-d/2) exp(-|x - c|^2 / (2 sigma^2))
double gaussian_kernel(std::span<const double> x, std::span<const double> center, double sigma);
double log_gaussian_kernel(std::span<const double> x, std::span<const double> center, double sigma);

// sqrt of the mean per-axis (population) variance.
double embedding_spread(const Eigen::MatrixXd& coords);

// h = sigma (4 / (d + 2))^(1/(d+4)) n^(-1/(d+4)); no neighbour floor.
double rule_of_thumb_bandwidth(double sigma_emp, int d, std::size_t n);

// Smallest h (bisection on [1e-6, 10] * sigma_emp, 40 steps) such that points
// have on average at least n_min other points within distance h.
double neighbor_floor_bandwidth(const Eigen::MatrixXd& coords, double sigma_emp, int n_min);

// max(h_rot, h_floor) computed on the embedding itself.
double rule_of_thumb_bandwidth(const Eigen::MatrixXd& coords, int n_min = 3);

enum class WeightForm { Positive, WithC };

struct GivenPoint {
    int domain;
    std::vector<double> point;
};

// Rectangular lattice over the first one or two axes of a domain. Lattice
// points include both endpoints of each range.
struct GridSpec {
    int axes = 2;
    std::array<double, 2> x_range{0, 1};
    std::array<double, 2> y_range{0, 0};
    int nx = 64;
    int ny = 64;

    double x(int c) const;
    double y(int r) const;
    double cell_area() const;
};

struct HeatmapGrid {
    int target_domain = 0;
    GridSpec grid;
    // Row-major: values[r * nx + c] at (x(c), y(r)).
    std::vector<double> values;
    double min_value = 0;
    double max_value = 0;
    std::size_t argmax = 0;
    // First one or two coordinates of every target item.
    std::vector<std::array<double, 2>> item_positions;
};

// Covers all target coordinates +- pad (per axis) with the given resolution.
GridSpec grid_for_domain(const Eigen::MatrixXd& coords, double pad, int resolution);

// Gaussian mixture over 2 or 3 latent domains with weights from a table:
// P(t) for the positive form, P(c, t) for the c-augmented form. All sums are
// log-sum-exp with a max shift, accumulated in cell-key order.
class DensityEvaluator {
public:
    DensityEvaluator(const EmbeddingModel& model, const CoocTable& table, WeightForm form);
    DensityEvaluator(std::vector<Eigen::MatrixXd> coords, std::vector<double> bandwidths, const CoocTable& table, WeightForm form);

    int order() const { return static_cast<int>(coords_.size()); }
    int dim(int d) const { return static_cast<int>(coords_[d].cols()); }
    WeightForm form() const { return form_; }
    const Eigen::MatrixXd& coords(int d) const { return coords_[d]; }
    double bandwidth(int d) const { return bandwidths_[d]; }
    double total_weight() const;

    double log_joint_density(const std::vector<std::vector<double>>& points, std::optional<int> c = std::nullopt) const;
    double joint_density(const std::vector<std::vector<double>>& points, std::optional<int> c = std::nullopt) const;
    double log_marginal_density(int domain, std::span<const double> point) const;
    double marginal_density(int domain, std::span<const double> point) const;

    // log r_i = log sum over cells with target index i of W(t) prod_g k(x_g | t_g).
    // Domains that are neither target nor given are integrated out.
    std::vector<double> log_conditional_weights(int target, const std::vector<GivenPoint>& given, std::optional<int> c) const;

    // q(x | given) where x holds the leading `axes` coordinates of the target
    // domain (trailing axes marginalized). Throws NumericalError when q(given)
    // underflows.
    double conditional_density(int target, std::span<const double> x, const std::vector<GivenPoint>& given,
                               std::optional<int> c = std::nullopt) const;

    HeatmapGrid conditional_grid(int target, const GridSpec& grid, const std::vector<GivenPoint>& given,
                                 std::optional<int> c = std::nullopt) const;

    // Item-level marginal weights of the chosen slice(s).
    std::vector<double> slice_marginal(int domain, std::optional<int> c) const;

private:
    struct Slice {
        std::vector<std::uint64_t> keys;
        std::vector<double> log_weights;
    };

    void check_point(int domain, std::size_t size) const;
    std::vector<double> log_kernels(int domain, std::span<const double> point, int axes) const;
    std::vector<const Slice*> slices_for(std::optional<int> c) const;
    double log_conditional_normalizer(const std::vector<double>& log_r, const std::vector<GivenPoint>& given) const;

    std::vector<Eigen::MatrixXd> coords_;
    std::vector<double> bandwidths_;
    std::array<std::size_t, 3> shape_{};
    WeightForm form_;
    std::vector<Slice> slices_;
    std::vector<std::vector<double>> marginals_;
};

}

#endif
