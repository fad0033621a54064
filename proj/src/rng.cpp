#include "fimspec/rng.hpp"

namespace fimspec {

namespace {

std::uint64_t splitmix64(std::uint64_t &x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t state = master;
    std::uint64_t h = splitmix64(state);
    for (std::uint64_t p : path) {
        state = h ^ (p * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL);
        h = splitmix64(state);
    }
    return h;
}

// Filled column-major in a fixed order so that the result depends only on
// the seed.
Eigen::MatrixXd NormalStream::matrix(Eigen::Index rows, Eigen::Index cols, double scale) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * dist_(engine_);
    return m;
}

Eigen::VectorXd NormalStream::vector(Eigen::Index n, double scale) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * dist_(engine_);
    return v;
}

}  // namespace fimspec
