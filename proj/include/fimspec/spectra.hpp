#pragma once

#include <limits>

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "fimspec/network.hpp"
#include "fimspec/theory.hpp"

namespace fimspec {

// Symmetric dual Gram matrix. Rows/columns are ordered k * samples + n
// for `blocks` output blocks of `samples` columns each.
struct DualGram {
    GramKind kind;
    Eigen::MatrixXd matrix;
    int samples = 0;
    int blocks = 0;
    // Trace computed independently from per-column gradient norms; NaN when
    // unknown. eigen_stats checks it against trace(matrix).
    double column_norm_trace = std::numeric_limits<double>::quiet_NaN();

    [[nodiscard]] Eigen::Index size() const { return matrix.rows(); }
};

DualGram build_dual_fim(const SignalPack &pack, const NetworkInstance &net);
DualGram build_dual_block(const SignalPack &pack, const NetworkInstance &net, int l);
// Q^{1/2} F* Q^{1/2} with Q_n = diag(g(n)) - g(n) g(n)^T; eigenvalues equal those of Q F*.
DualGram apply_softmax_q(const DualGram &dual, const Eigen::MatrixXd &g);
// Requires the NTK parameterization unless `rescale_standard` is set.
DualGram build_dual_ntk(const SignalPack &pack, const NetworkInstance &net, bool rescale_standard = false);
// output >= 0: A*_k (N x N); output < 0: summed A via stacked k blocks (CN x CN).
DualGram build_dual_metric_a(const SignalPack &pack, const NetworkInstance &net, int output);
DualGram build_dual_metric_a_block(const SignalPack &pack, const NetworkInstance &net, int l, int output);
// (I - Pi) G (I - Pi), Pi averaging over the samples of each output block.
DualGram mean_subtract(const DualGram &dual);

// Builds the dual for any kind (propagated pack required).
DualGram build_dual(const GramKind &kind, const SignalPack &pack, const NetworkInstance &net);

// Primal dimension the empirical statistics are normalized by.
double primal_dimension(const GramKind &kind, const NetworkConfig &cfg, int N);

struct Histogram {
    std::vector<double> edges;  // 101 log-spaced edges
    std::vector<long long> counts;
    long long zero_count = 0;
};

Histogram make_histogram(const std::vector<double> &values, double lambda_ref, int bins = 100);
void merge_histogram(Histogram &into, const Histogram &other);

struct SpectrumOptions {
    int top_k = -1;               // eigenvalues kept when the dual is too large; default outliers + 1
    bool eigenvectors = true;     // needed for alignment
    Eigen::Index full_threshold = 4000;
};

struct SpectrumReport {
    GramKind kind;
    std::vector<double> eigenvalues;  // descending; only the top ones when !full
    bool full = true;
    double mean = 0.0;
    double second_moment = 0.0;
    double lambda_max = 0.0;
    double min_eigenvalue = 0.0;  // NaN when !full
    std::vector<double> top;      // lambda_1..lambda_{r+1}
    double outlier_gap = 0.0;     // lambda_r / lambda_{r+1}
    double alignment = 0.0;       // NaN when not computed
    int reference_rank = 0;       // r
    int trials = 1;
};

// Number of mean-gradient directions nu_k for this dual.
int reference_rank(const DualGram &dual);
Eigen::MatrixXd reference_subspace(const DualGram &dual);

SpectrumReport eigen_stats(const DualGram &dual, double primal_dim, const SpectrumOptions &opts = {});

// Mean squared cosine of principal angles between the top-r eigenvectors
// of the dual and span{nu_k}.
double top_eigvec_alignment(const DualGram &dual);
double subspace_alignment(const Eigen::MatrixXd &V, const Eigen::MatrixXd &U);

// Largest k eigenpairs of a symmetric matrix (Lanczos with full
// reorthogonalization). Values descending.
void top_eigenpairs(const Eigen::MatrixXd &A, int k, Eigen::VectorXd &values, Eigen::MatrixXd *vectors,
                    double tol = 1e-10, int max_iter = -1);

}  // namespace fimspec
