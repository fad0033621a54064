#pragma once

#include <vector>

#include <Eigen/Core>

#include "fimspec/network.hpp"
#include "fimspec/spectra.hpp"
#include "fimspec/theory.hpp"

namespace fimspec {

enum class LossKind { Mse, CrossEntropy };

LossKind parse_loss(const std::string &s);
const char *loss_name(LossKind k);

struct TrainingTrace {
    std::vector<int> steps;
    std::vector<double> loss;
    std::vector<double> lambda_max_F;         // theory (simulation) or empirical (reference)
    std::vector<double> lambda_max_Fcross;    // empirical, reference trainer only
    std::vector<double> lambda_max_Fcross_lo;
    std::vector<double> lambda_max_Fcross_hi;
    Eigen::MatrixXd f_t, g_t;                 // final state, C x N
    int diverged_at = -1;
};

// 0, 1, 2, 5, 10, 20, 50, ... up to and including `steps`.
std::vector<int> log_checkpoints(int steps);

// Columns k * N + n of the dual correspond to entry (k, n).
Eigen::VectorXd flatten_outputs(const Eigen::MatrixXd &E);
Eigen::MatrixXd unflatten_outputs(const Eigen::VectorXd &v, int C, int N);

double mse_loss(const Eigen::MatrixXd &f, const Eigen::MatrixXd &y);
double cross_entropy_loss(const Eigen::MatrixXd &g, const Eigen::MatrixXd &y);

// f_{t+1} = f_t + (eta / N) Theta (y - f_t)
TrainingTrace simulate_ntk_mse(const DualGram &theta, const Eigen::MatrixXd &f0, const Eigen::MatrixXd &y,
                               double eta, int steps, std::vector<int> checkpoints = {});

// f_{t+1} = f_t + (eta / N) Theta (y - softmax(f_t)); bounds for the
// cross-entropy FIM are evaluated with the instantaneous softmax.
TrainingTrace simulate_ntk_cross(const DualGram &theta, const Eigen::MatrixXd &f0, const Eigen::MatrixXd &y,
                                 double eta, int steps, const OrderParams &op, const NetworkConfig &cfg,
                                 std::vector<int> checkpoints = {});

struct ReferenceOptions {
    bool track_spectra = false;
    std::vector<int> checkpoints;  // empty: log_checkpoints(steps)
};

// Full-batch gradient descent on the parameters. Under the NTK
// parameterization the step on omega is mapped to W by the squared scale.
TrainingTrace train_reference(const NetworkInstance &net, const Eigen::MatrixXd &x, const Eigen::MatrixXd &y,
                              double eta, int steps, LossKind loss, const ReferenceOptions &opts = {},
                              NetworkInstance *trained = nullptr);

}  // namespace fimspec
