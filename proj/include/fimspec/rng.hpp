#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Core>

namespace fimspec {

// Mixes a master seed with a path of stream identifiers (trial, layer,
// tensor, ...) into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

// Tensor identifiers used in stream paths.
enum StreamTag : std::uint64_t {
    kStreamWeight = 1,
    kStreamBias = 2,
    kStreamInput = 3,
    kStreamTeacher = 4,
    kStreamTrial = 5,
};

class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : engine_(seed) {}

    double operator()() { return dist_(engine_); }
    Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols, double scale = 1.0);
    Eigen::VectorXd vector(Eigen::Index n, double scale = 1.0);

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> dist_;
};

}  // namespace fimspec
