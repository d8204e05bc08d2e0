#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqglab/extension.hpp"
#include "sqglab/field_core.hpp"

namespace sqg {

/// beta(q) = [1/a + (1+a)(1-2a)/q] / (2a - 2/q). Throws std::domain_error
/// outside alpha in (1/sqrt 6, 1/2), q >= 20.
double dimension_bound(double alpha, double q);
/// lim_{q -> inf} beta(q) = 1/(2a^2).
double dimension_limit(double alpha);

struct CandidatePoint {
    Vec2 x{0.0, 0.0};
    double s = 0.0;
    /// Height scale r and spacetime radius rho = r^{2a - 2/q}.
    double r = 0.0;
    double rho = 0.0;
    /// int_0^r int_{B_rho(x,s)} y^b |grad theta*|^2.
    double integral = 0.0;
    /// integral / rho^beta, strictly above delta0.
    double value = 0.0;
    int scale = 0;
};

struct DetectionOptions {
    double delta0 = 1e-3;
    /// Height scales r, any order.
    std::vector<double> scales{0.1, 0.2, 0.4};
    double q = 20.0;
    /// Time is measured as anisotropy * s in the spacetime metric.
    double anisotropy = 1.0;
};

struct Detection {
    std::vector<CandidatePoint> candidates;
    double beta = 0.0;
    /// Scales sorted ascending, with their radii, lattice strides and number of centers scanned.
    std::vector<double> scales, radii;
    std::vector<int> strides;
    std::vector<std::size_t> scanned;
    /// Weighted energy of the whole trajectory up to the largest scale.
    double total_energy = 0.0;
};

/// Scans centers (grid cell, snapshot) at each scale; the finest scale uses
/// every cell and snapshot, coarser scales stride by round(rho_k / rho_min).
/// Balls are Euclidean in (x, anisotropy * s), periodic in x, clipped to the
/// trajectory in time; time integrals use the Voronoi weights of the snapshots.
/// Throws UnderResolved when the smallest ball holds fewer than 4 cells and
/// std::invalid_argument when a ball diameter exceeds L/2.
Detection detect_candidates(const Trajectory& tr, const SlabProvider& sp, const DetectionOptions& opt);

/// Direct evaluation of the spacetime ball integral at any point (no lattice).
double ball_integral(const Trajectory& tr, const SlabProvider& sp, Vec2 x, double s, double r, double rho,
                     double anisotropy = 1.0);

/// Ball in R^3 = (x1, x2, anisotropy * s).
struct SpaceTimeBall {
    std::array<double, 3> c{0.0, 0.0, 0.0};
    double radius = 0.0;
};

struct CoverResult {
    /// Indices into the input, in selection order.
    std::vector<std::size_t> selected;
    /// For each input, the selected ball of least dilation containing it.
    std::vector<std::size_t> covered_by;
    bool certificate_complete = false;
    /// max over inputs of (|c_i - c_j| + rho_i) / rho_j for the certifying j.
    double max_dilation = 0.0;
};

/// Greedy largest-radius-first selection of pairwise disjoint balls; ties by
/// lexicographic center. `period` > 0 makes the first two coordinates periodic.
CoverResult vitali_cover(const std::vector<SpaceTimeBall>& balls, double period = 0.0);
std::vector<SpaceTimeBall> candidate_balls(const std::vector<CandidatePoint>& c, double anisotropy = 1.0);
double ball_distance(const SpaceTimeBall& a, const SpaceTimeBall& b, double period = 0.0);

struct ContentBound {
    /// sum (10 rho_i)^beta over the selected balls.
    double content = 0.0;
    /// 10^beta / delta0 * sum of the selected balls' integrals.
    double local_bound = 0.0;
    /// 10^beta / delta0 * total weighted energy.
    double global_bound = 0.0;
    bool chain_holds = true;
};

/// content <= local_bound <= global_bound, compared with relative slack 1e-12.
ContentBound hausdorff_content(const CoverResult& cover, const std::vector<CandidatePoint>& candidates, double beta,
                               double delta0, double total_energy);

struct SweepRow {
    double delta0 = 0.0, eps = 0.0, beta = 0.0;
    std::size_t candidates = 0, selected = 0;
    double content = 0.0, bound = 0.0;
    bool chain_holds = true;
};

/// One row per ladder scale: eps = 2 rho_k, covering the candidates with rho <= rho_k.
std::vector<SweepRow> covering_sweep(const Detection& d, double delta0, double period, double anisotropy = 1.0);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Number of occupied boxes of side e in (x, anisotropy * s) for each size.
std::vector<std::size_t> box_counts(const std::vector<CandidatePoint>& c, const std::vector<double>& sizes,
                                    double anisotropy = 1.0);

std::string candidates_json(const Detection& d);
std::string cover_json(const CoverResult& cover, const std::vector<CandidatePoint>& c, const ContentBound& b);

}  // namespace sqg
