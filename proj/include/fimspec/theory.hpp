#pragma once

#include <optional>
#include <string>

#include <Eigen/Core>

#include "fimspec/meanfield.hpp"

namespace fimspec {

enum class GramTag {
    FimMse,
    FimMseBlock,
    FimCross,
    FimCrossBlock,
    Ntk,
    NtkMeanSub,
    MetricA,
    MetricABlock,
    FimMseMeanSub
};

struct GramKind {
    GramTag tag = GramTag::FimMse;
    int layer = 0;    // block index for *Block kinds
    int output = -1;  // MetricA/MetricABlock: output k (0-based), -1 = summed over k

    GramKind() = default;
    GramKind(GramTag t, int l = 0, int k = -1) : tag(t), layer(l), output(k) {}

    // fim_mse, fim_mse_block:L, fim_cross, fim_cross_block:L, ntk, ntk_meansub,
    // fim_mse_meansub, metric_a, metric_a:K, metric_a_block:L[:K]
    static GramKind parse(const std::string &s);
    [[nodiscard]] std::string name() const;
    [[nodiscard]] bool is_block() const;
    [[nodiscard]] bool is_metric() const { return tag == GramTag::MetricA || tag == GramTag::MetricABlock; }
    [[nodiscard]] bool is_mean_subtracted() const {
        return tag == GramTag::NtkMeanSub || tag == GramTag::FimMseMeanSub;
    }
    [[nodiscard]] bool needs_softmax() const {
        return tag == GramTag::FimCross || tag == GramTag::FimCrossBlock;
    }
    // Raises DomainError when the block index does not fit cfg.
    void check(const NetworkConfig &cfg) const;
    bool operator==(const GramKind &) const = default;
};

struct EigStatsPrediction {
    GramKind kind;
    double mean = 0.0;
    double second_moment = 0.0;
    std::optional<double> lambda_max_point;
    std::optional<double> lambda_max_lower;
    std::optional<double> lambda_max_upper;
    int outlier_count = 0;
    std::string note;

    // Point value when present, otherwise the upper bound.
    [[nodiscard]] std::optional<double> lambda_max() const;
    [[nodiscard]] std::string to_json() const;
};

struct SoftmaxCoeffs {
    double beta1 = 0, beta2 = 0, beta3 = 0, beta4 = 0;
};

// g is C x N with columns on the probability simplex.
void check_simplex(const Eigen::MatrixXd &g, double tol = 1e-8);
SoftmaxCoeffs softmax_coeffs(const Eigen::MatrixXd &g);

EigStatsPrediction predict_fim_mse(const OrderParams &op, const NetworkConfig &cfg, int N);
EigStatsPrediction predict_fim_block(const OrderParams &op, const NetworkConfig &cfg, int N, int l);
EigStatsPrediction predict_fim_cross(const OrderParams &op, const NetworkConfig &cfg, int N,
                                     const SoftmaxCoeffs &coeffs);
EigStatsPrediction predict_ntk(const OrderParams &op, const NetworkConfig &cfg, int N);
EigStatsPrediction predict_metric_a(const OrderParams &op, const NetworkConfig &cfg, int N, bool per_output);
EigStatsPrediction predict_metric_a_block(const OrderParams &op, const NetworkConfig &cfg, int N, int l);

// Dispatch on kind. FimCross needs coeffs; kinds without a closed form get
// NaN statistics and a note.
EigStatsPrediction predict(const GramKind &kind, const OrderParams &op, const NetworkConfig &cfg, int N,
                           const std::optional<SoftmaxCoeffs> &coeffs = std::nullopt);

// Primal dimension used by the closed forms: alpha M^2 for F, P_l for blocks.
double theory_primal_dim(const GramKind &kind, const OrderParams &op, const NetworkConfig &cfg);

double critical_learning_rate(const EigStatsPrediction &pred);

}  // namespace fimspec
