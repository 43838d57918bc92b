#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "dhgcn/linalg.hpp"

namespace dhgcn {

using Rng = std::mt19937_64;

inline Vector gaussian_vector(std::size_t dim, Rng& rng, double stddev = 1.0) {
    std::normal_distribution<double> nd(0.0, stddev);
    Vector v(dim);
    for (double& e : v) e = nd(rng);
    return v;
}

/// Point drawn uniformly (Euclidean volume) from the ball of the given radius.
inline Vector uniform_in_ball(std::size_t dim, double radius, Rng& rng) {
    Vector dir;
    double n = 0.0;
    do {
        dir = gaussian_vector(dim, rng);
        n = la::norm(dir);
    } while (n == 0.0);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    const double r = radius * std::pow(ud(rng), 1.0 / static_cast<double>(dim));
    for (double& e : dir) e *= r / n;
    return dir;
}

/// Random direction scaled to exactly the given norm.
inline Vector random_with_norm(std::size_t dim, double norm, Rng& rng) {
    Vector dir;
    double n = 0.0;
    do {
        dir = gaussian_vector(dim, rng);
        n = la::norm(dir);
    } while (n == 0.0);
    for (double& e : dir) e *= norm / n;
    return dir;
}

}  // namespace dhgcn
