#include "fimspec/theory.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "fimspec/errors.hpp"

namespace fimspec {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int parse_index(const std::string &s, const std::string &whole) {
    std::size_t pos = 0;
    int v = 0;
    try {
        v = std::stoi(s, &pos);
    } catch (const std::exception &) {
        throw DomainError("bad gram kind '" + whole + "'");
    }
    if (pos != s.size()) throw DomainError("bad gram kind '" + whole + "'");
    return v;
}

// (N-1)/N * x2 + x1/N
inline double mix(int N, double x1, double x2) { return (N - 1.0) / N * x2 + x1 / N; }

}  // namespace

GramKind GramKind::parse(const std::string &s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto p = s.find(':', start);
        parts.push_back(s.substr(start, p == std::string::npos ? std::string::npos : p - start));
        if (p == std::string::npos) break;
        start = p + 1;
    }
    const std::string &h = parts[0];
    auto idx = [&](std::size_t i) { return parse_index(parts.at(i), s); };
    if (parts.size() == 1) {
        if (h == "fim_mse" || h == "fim") return {GramTag::FimMse};
        if (h == "fim_cross") return {GramTag::FimCross};
        if (h == "ntk") return {GramTag::Ntk};
        if (h == "ntk_meansub") return {GramTag::NtkMeanSub};
        if (h == "fim_mse_meansub") return {GramTag::FimMseMeanSub};
        if (h == "metric_a") return {GramTag::MetricA, 0, -1};
    } else if (parts.size() == 2) {
        if (h == "fim_mse_block") return {GramTag::FimMseBlock, idx(1)};
        if (h == "fim_cross_block") return {GramTag::FimCrossBlock, idx(1)};
        if (h == "metric_a") {
            const int k = idx(1);
            if (k < 0) throw DomainError("output index must be >= 0 in '" + s + "'");
            return {GramTag::MetricA, 0, k};
        }
        if (h == "metric_a_block") return {GramTag::MetricABlock, idx(1), 0};
    } else if (parts.size() == 3 && h == "metric_a_block") {
        const int k = idx(2);
        if (k < 0) throw DomainError("output index must be >= 0 in '" + s + "'");
        return {GramTag::MetricABlock, idx(1), k};
    }
    throw DomainError("unknown gram kind '" + s + "'");
}

std::string GramKind::name() const {
    switch (tag) {
    case GramTag::FimMse: return "fim_mse";
    case GramTag::FimMseBlock: return "fim_mse_block:" + std::to_string(layer);
    case GramTag::FimCross: return "fim_cross";
    case GramTag::FimCrossBlock: return "fim_cross_block:" + std::to_string(layer);
    case GramTag::Ntk: return "ntk";
    case GramTag::NtkMeanSub: return "ntk_meansub";
    case GramTag::FimMseMeanSub: return "fim_mse_meansub";
    case GramTag::MetricA: return output < 0 ? "metric_a" : "metric_a:" + std::to_string(output);
    case GramTag::MetricABlock:
        return "metric_a_block:" + std::to_string(layer) + ":" + std::to_string(std::max(output, 0));
    }
    return "?";
}

bool GramKind::is_block() const {
    return tag == GramTag::FimMseBlock || tag == GramTag::FimCrossBlock || tag == GramTag::MetricABlock;
}

void GramKind::check(const NetworkConfig &cfg) const {
    const int L = cfg.depth;
    if (tag == GramTag::FimMseBlock || tag == GramTag::FimCrossBlock) {
        if (layer < 1 || layer > L) throw DomainError("F block index must be in 1..L");
    }
    if (tag == GramTag::MetricABlock) {
        if (layer < 0 || layer > L - 1) throw DomainError("A block index must be in 0..L-1");
    }
    if (is_metric() && output >= cfg.outputs) throw DomainError("output index out of range");
}

std::optional<double> EigStatsPrediction::lambda_max() const {
    if (lambda_max_point) return lambda_max_point;
    return lambda_max_upper;
}

std::string EigStatsPrediction::to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = kind.name();
    j["mean"] = mean;
    j["second_moment"] = second_moment;
    j["lambda_max"] = lambda_max_point ? nlohmann::ordered_json(*lambda_max_point) : nlohmann::ordered_json();
    if (lambda_max_lower || lambda_max_upper) {
        j["bounds"] = {lambda_max_lower ? nlohmann::ordered_json(*lambda_max_lower) : nlohmann::ordered_json(),
                       lambda_max_upper ? nlohmann::ordered_json(*lambda_max_upper) : nlohmann::ordered_json()};
    } else {
        j["bounds"] = nullptr;
    }
    j["outlier_count"] = outlier_count;
    if (!note.empty()) j["note"] = note;
    return j.dump();
}

void check_simplex(const Eigen::MatrixXd &g, double tol) {
    if (g.rows() < 1 || g.cols() < 1) throw DomainError("empty softmax array");
    if (!g.allFinite()) throw DomainError("non-finite softmax entries");
    if (g.minCoeff() < -1e-12 || g.maxCoeff() > 1.0 + 1e-12) throw DomainError("softmax entries outside [0,1]");
    for (Eigen::Index n = 0; n < g.cols(); ++n)
        if (std::abs(g.col(n).sum() - 1.0) > tol) throw DomainError("softmax column does not sum to 1");
}

SoftmaxCoeffs softmax_coeffs(const Eigen::MatrixXd &g) {
    check_simplex(g);
    const double N = static_cast<double>(g.cols());
    const Eigen::MatrixXd g2 = g.array().square().matrix();
    const Eigen::VectorXd sq = g2.colwise().sum().transpose();  // sum_k g_k(n)^2

    SoftmaxCoeffs c;
    c.beta1 = 1.0 - sq.sum() / N;

    // S(m,n) = sum_k g_k(m) g_k(n), T(m,n) = sum_k g_k(m)^2 g_k(n)
    const Eigen::MatrixXd S = g.transpose() * g;
    const Eigen::MatrixXd T = g2.transpose() * g;
    const Eigen::MatrixXd term = S - 2.0 * T + S.cwiseProduct(S);
    c.beta2 = (term.sum() - term.trace()) / (N * N);

    const Eigen::MatrixXd g3 = g2.cwiseProduct(g);
    double b3 = 0.0;
    for (Eigen::Index n = 0; n < g.cols(); ++n)
        b3 += g2.col(n).sum() - 2.0 * g3.col(n).sum() + sq(n) * sq(n);
    c.beta3 = b3 / N;

    const Eigen::VectorXd v = (g.array() * (1.0 - g.array())).rowwise().sum().matrix() / N;
    c.beta4 = v.maxCoeff();
    return c;
}

EigStatsPrediction predict_fim_mse(const OrderParams &op, const NetworkConfig &cfg, int N) {
    if (N < 1) throw DomainError("N must be positive");
    const double M = cfg.width, C = cfg.outputs;
    EigStatsPrediction p;
    p.kind = {GramTag::FimMse};
    p.mean = op.kappa1 * C / M;
    p.second_moment = op.alpha * C * mix(N, op.kappa1 * op.kappa1, op.kappa2 * op.kappa2);
    p.lambda_max_point = op.alpha * M * mix(N, op.kappa1, op.kappa2);
    p.outlier_count = cfg.outputs;
    return p;
}

EigStatsPrediction predict_fim_block(const OrderParams &op, const NetworkConfig &cfg, int N, int l) {
    if (N < 1) throw DomainError("N must be positive");
    if (l < 1 || l > cfg.depth) throw DomainError("F block index must be in 1..L");
    const double M = cfg.width, C = cfg.outputs;
    const double al = (l == cfg.depth) ? C / M : cfg.alpha(l);
    const double alm = cfg.alpha(l - 1);
    const double k1 = op.qtil1[l] * op.qhat1[l - 1];
    const double k2 = op.qtil2[l] * op.qhat2[l - 1];
    EigStatsPrediction p;
    p.kind = {GramTag::FimMseBlock, l};
    p.mean = k1 / al * C / M;
    p.second_moment = alm / al * mix(N, k1 * k1, k2 * k2) * C;
    p.lambda_max_point = alm * mix(N, k1, k2) * M;
    p.outlier_count = cfg.outputs;
    return p;
}

EigStatsPrediction predict_fim_cross(const OrderParams &op, const NetworkConfig &cfg, int N,
                                     const SoftmaxCoeffs &c) {
    if (N < 1) throw DomainError("N must be positive");
    const double M = cfg.width;
    EigStatsPrediction p;
    p.kind = {GramTag::FimCross};
    // The trace of Q F* already sums the per-sample factor 1 - sum_k g_k^2
    // over outputs, so no extra factor C appears here.
    p.mean = c.beta1 * op.kappa1 / M;
    p.second_moment = op.alpha * (c.beta2 * op.kappa2 * op.kappa2 + c.beta3 * op.kappa1 * op.kappa1 / N);
    p.lambda_max_lower = c.beta4 * op.alpha * M * mix(N, op.kappa1, op.kappa2);
    p.lambda_max_upper = std::sqrt(std::max(0.0, op.alpha * p.second_moment)) * M;
    p.outlier_count = cfg.outputs;
    return p;
}

EigStatsPrediction predict_ntk(const OrderParams &op, const NetworkConfig &cfg, int N) {
    if (N < 1) throw DomainError("N must be positive");
    const double C = cfg.outputs, a = op.alpha;
    EigStatsPrediction p;
    p.kind = {GramTag::Ntk};
    p.mean = a * op.kappa1p * C;
    p.second_moment = a * a * C * ((N - 1.0) * op.kappa2p * op.kappa2p + op.kappa1p * op.kappa1p);
    p.lambda_max_point = a * ((N - 1.0) * op.kappa2p + op.kappa1p);
    p.outlier_count = cfg.outputs;
    return p;
}

EigStatsPrediction predict_metric_a(const OrderParams &op, const NetworkConfig &cfg, int N, bool per_output) {
    if (N < 1) throw DomainError("N must be positive");
    const double M = cfg.width, at = op.alphat;
    EigStatsPrediction p;
    p.kind = {GramTag::MetricA, 0, per_output ? 0 : -1};
    p.mean = op.kappat1 / M;
    p.second_moment = at / M * mix(N, op.kappat1 * op.kappat1, op.kappat2 * op.kappat2);
    p.lambda_max_point = at * mix(N, op.kappat1, op.kappat2);
    p.outlier_count = 1;
    if (!per_output) {
        p.mean *= cfg.outputs;
        p.second_moment *= cfg.outputs;
        p.outlier_count = cfg.outputs;
    }
    return p;
}

EigStatsPrediction predict_metric_a_block(const OrderParams &op, const NetworkConfig &cfg, int N, int l) {
    if (N < 1) throw DomainError("N must be positive");
    if (l < 0 || l > cfg.depth - 1) throw DomainError("A block index must be in 0..L-1");
    const double Ml = cfg.layer_width(l), sw2 = cfg.sigma_w2;
    const double t1 = op.qtil1[l + 1], t2 = op.qtil2[l + 1];
    EigStatsPrediction p;
    p.kind = {GramTag::MetricABlock, l, 0};
    p.mean = sw2 * t1 / Ml;
    p.second_moment = sw2 * sw2 * mix(N, t1 * t1, t2 * t2) / Ml;
    p.lambda_max_point = sw2 * mix(N, t1, t2);
    p.outlier_count = 1;
    return p;
}

EigStatsPrediction predict(const GramKind &kind, const OrderParams &op, const NetworkConfig &cfg, int N,
                           const std::optional<SoftmaxCoeffs> &coeffs) {
    kind.check(cfg);
    EigStatsPrediction p;
    switch (kind.tag) {
    case GramTag::FimMse: return predict_fim_mse(op, cfg, N);
    case GramTag::FimMseBlock: return predict_fim_block(op, cfg, N, kind.layer);
    case GramTag::FimCross:
        if (!coeffs) throw DomainError("fim_cross prediction needs softmax coefficients");
        return predict_fim_cross(op, cfg, N, *coeffs);
    case GramTag::Ntk: return predict_ntk(op, cfg, N);
    case GramTag::MetricA: {
        p = predict_metric_a(op, cfg, N, kind.output >= 0);
        p.kind = kind;
        return p;
    }
    case GramTag::MetricABlock: {
        p = predict_metric_a_block(op, cfg, N, kind.layer);
        p.kind = kind;
        return p;
    }
    case GramTag::FimCrossBlock:
        p.note = "no closed form";
        break;
    case GramTag::NtkMeanSub:
    case GramTag::FimMseMeanSub:
        p.note = "O(1), no closed form";
        break;
    }
    p.kind = kind;
    p.mean = kNaN;
    p.second_moment = kNaN;
    p.outlier_count = 0;
    return p;
}

double theory_primal_dim(const GramKind &kind, const OrderParams &op, const NetworkConfig &cfg) {
    const double M = cfg.width;
    switch (kind.tag) {
    case GramTag::FimMse:
    case GramTag::FimCross:
    case GramTag::FimMseMeanSub: return op.alpha * M * M;
    case GramTag::FimMseBlock:
    case GramTag::FimCrossBlock: {
        const int l = kind.layer;
        const double al = (l == cfg.depth) ? cfg.outputs / M : cfg.alpha(l);
        return al * cfg.alpha(l - 1) * M * M;
    }
    case GramTag::Ntk:
    case GramTag::NtkMeanSub: return 0.0;
    case GramTag::MetricA: return op.alphat * M;
    case GramTag::MetricABlock: return cfg.layer_width(kind.layer);
    }
    return 0.0;
}

double critical_learning_rate(const EigStatsPrediction &pred) {
    const auto lm = pred.lambda_max();
    if (!lm || !std::isfinite(*lm)) throw DomainError("prediction has no lambda_max");
    if (*lm == 0.0) throw DomainError("lambda_max is zero");
    return 2.0 / *lm;
}

}  // namespace fimspec
