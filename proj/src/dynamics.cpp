#include "fimspec/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "fimspec/errors.hpp"

namespace fimspec {

namespace {

constexpr double kDivergence = 1e12;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_divergence(double loss, int step) {
    if (!std::isfinite(loss) || loss > kDivergence)
        throw DivergenceError("training diverged at step " + std::to_string(step), step);
}

void check_theta(const DualGram &theta, const Eigen::MatrixXd &f0, const Eigen::MatrixXd &y) {
    if (f0.rows() != theta.blocks || f0.cols() != theta.samples) throw ShapeError("f0 does not match the NTK");
    if (y.rows() != f0.rows() || y.cols() != f0.cols()) throw ShapeError("targets do not match f0");
}

std::vector<int> normalized(std::vector<int> cp, int steps) {
    if (cp.empty()) return log_checkpoints(steps);
    std::sort(cp.begin(), cp.end());
    cp.erase(std::unique(cp.begin(), cp.end()), cp.end());
    cp.erase(std::remove_if(cp.begin(), cp.end(), [&](int s) { return s < 0 || s > steps; }), cp.end());
    return cp;
}

}  // namespace

LossKind parse_loss(const std::string &s) {
    if (s == "mse") return LossKind::Mse;
    if (s == "cross_entropy" || s == "ce") return LossKind::CrossEntropy;
    throw DomainError("unknown loss '" + s + "'");
}

const char *loss_name(LossKind k) { return k == LossKind::Mse ? "mse" : "cross_entropy"; }

std::vector<int> log_checkpoints(int steps) {
    std::vector<int> out{0};
    const int mult[] = {1, 2, 5};
    for (long long dec = 1; dec <= steps; dec *= 10)
        for (int m : mult)
            if (m * dec <= steps) out.push_back(static_cast<int>(m * dec));
    if (out.back() != steps) out.push_back(steps);
    return out;
}

Eigen::VectorXd flatten_outputs(const Eigen::MatrixXd &E) {
    const Eigen::MatrixXd Et = E.transpose();
    return Eigen::Map<const Eigen::VectorXd>(Et.data(), Et.size());
}

Eigen::MatrixXd unflatten_outputs(const Eigen::VectorXd &v, int C, int N) {
    if (v.size() != static_cast<Eigen::Index>(C) * N) throw ShapeError("flattened output has wrong size");
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), N, C).transpose();
}

double mse_loss(const Eigen::MatrixXd &f, const Eigen::MatrixXd &y) {
    return 0.5 * (y - f).squaredNorm() / static_cast<double>(f.cols());
}

double cross_entropy_loss(const Eigen::MatrixXd &g, const Eigen::MatrixXd &y) {
    double acc = 0.0;
    for (Eigen::Index n = 0; n < g.cols(); ++n)
        for (Eigen::Index k = 0; k < g.rows(); ++k)
            if (y(k, n) != 0.0) acc -= y(k, n) * std::log(std::max(g(k, n), 1e-300));
    return acc / static_cast<double>(g.cols());
}

TrainingTrace simulate_ntk_mse(const DualGram &theta, const Eigen::MatrixXd &f0, const Eigen::MatrixXd &y,
                               double eta, int steps, std::vector<int> checkpoints) {
    check_theta(theta, f0, y);
    if (steps < 0) throw DomainError("steps must be nonnegative");
    const int C = static_cast<int>(f0.rows()), N = static_cast<int>(f0.cols());
    const auto cp = normalized(std::move(checkpoints), steps);
    TrainingTrace tr;
    Eigen::VectorXd f = flatten_outputs(f0);
    const Eigen::VectorXd yv = flatten_outputs(y);
    std::size_t next = 0;
    for (int t = 0; t <= steps; ++t) {
        const Eigen::VectorXd e = yv - f;
        const double loss = 0.5 * e.squaredNorm() / N;
        check_divergence(loss, t);
        if (next < cp.size() && cp[next] == t) {
            tr.steps.push_back(t);
            tr.loss.push_back(loss);
            ++next;
        }
        if (t == steps) break;
        f.noalias() += (eta / N) * (theta.matrix * e);
    }
    tr.f_t = unflatten_outputs(f, C, N);
    tr.g_t = softmax(tr.f_t);
    return tr;
}

TrainingTrace simulate_ntk_cross(const DualGram &theta, const Eigen::MatrixXd &f0, const Eigen::MatrixXd &y,
                                 double eta, int steps, const OrderParams &op, const NetworkConfig &cfg,
                                 std::vector<int> checkpoints) {
    check_theta(theta, f0, y);
    if (steps < 0) throw DomainError("steps must be nonnegative");
    check_simplex(y);
    const int C = static_cast<int>(f0.rows()), N = static_cast<int>(f0.cols());
    const auto cp = normalized(std::move(checkpoints), steps);
    const double lmax_f = *predict_fim_mse(op, cfg, N).lambda_max_point;
    TrainingTrace tr;
    Eigen::MatrixXd f = f0;
    const Eigen::VectorXd yv = flatten_outputs(y);
    std::size_t next = 0;
    for (int t = 0; t <= steps; ++t) {
        const Eigen::MatrixXd g = softmax(f);
        const double loss = cross_entropy_loss(g, y);
        check_divergence(loss, t);
        if (next < cp.size() && cp[next] == t) {
            const auto pred = predict_fim_cross(op, cfg, N, softmax_coeffs(g));
            tr.steps.push_back(t);
            tr.loss.push_back(loss);
            tr.lambda_max_F.push_back(lmax_f);
            tr.lambda_max_Fcross.push_back(kNaN);
            tr.lambda_max_Fcross_lo.push_back(*pred.lambda_max_lower);
            tr.lambda_max_Fcross_hi.push_back(*pred.lambda_max_upper);
            ++next;
        }
        if (t == steps) break;
        const Eigen::VectorXd step = (eta / N) * (theta.matrix * (yv - flatten_outputs(g)));
        f += unflatten_outputs(step, C, N);
    }
    tr.f_t = f;
    tr.g_t = softmax(f);
    return tr;
}

TrainingTrace train_reference(const NetworkInstance &net0, const Eigen::MatrixXd &x, const Eigen::MatrixXd &y,
                              double eta, int steps, LossKind kind, const ReferenceOptions &opts,
                              NetworkInstance *trained) {
    if (steps < 0) throw DomainError("steps must be nonnegative");
    NetworkInstance net = net0;
    const auto &cfg = net.config();
    const int L = cfg.depth, N = static_cast<int>(x.cols());
    if (y.rows() != cfg.outputs || y.cols() != N) throw ShapeError("targets have wrong shape");
    const auto cp = normalized(opts.checkpoints, steps);

    std::optional<OrderParams> op;
    if (opts.track_spectra) op = order_params(cfg);

    TrainingTrace tr;
    std::size_t next = 0;
    for (int t = 0; t <= steps; ++t) {
        const bool log = next < cp.size() && cp[next] == t;
        SignalPack p = (log && opts.track_spectra) ? propagate(net, x) : forward(net, x);
        const double loss = kind == LossKind::Mse ? mse_loss(p.f, y) : cross_entropy_loss(p.g, y);
        check_divergence(loss, t);
        if (log) {
            tr.steps.push_back(t);
            tr.loss.push_back(loss);
            if (opts.track_spectra) {
                const DualGram F = build_dual_fim(p, net);
                const DualGram Fc = apply_softmax_q(F, p.g);
                Eigen::VectorXd v;
                top_eigenpairs(F.matrix, 1, v, nullptr);
                tr.lambda_max_F.push_back(v(0));
                top_eigenpairs(Fc.matrix, 1, v, nullptr);
                tr.lambda_max_Fcross.push_back(v(0));
                const auto b = predict_fim_cross(*op, cfg, N, softmax_coeffs(p.g));
                tr.lambda_max_Fcross_lo.push_back(*b.lambda_max_lower);
                tr.lambda_max_Fcross_hi.push_back(*b.lambda_max_upper);
            } else {
                tr.lambda_max_F.push_back(kNaN);
                tr.lambda_max_Fcross.push_back(kNaN);
                tr.lambda_max_Fcross_lo.push_back(kNaN);
                tr.lambda_max_Fcross_hi.push_back(kNaN);
            }
            ++next;
        }
        if (t == steps) {
            tr.f_t = p.f;
            tr.g_t = p.g;
            break;
        }
        const Eigen::MatrixXd G = (kind == LossKind::Mse ? Eigen::MatrixXd(p.f - y) : Eigen::MatrixXd(p.g - y)) / N;
        const ParamGradients grad = loss_gradients(net, p, G);
        for (int l = 1; l <= L; ++l) {
            const double sw = net.weight_grad_scale(l), sb = net.bias_grad_scale();
            net.weight(l) -= eta * sw * sw * grad.dW[l - 1];
            net.bias(l) -= eta * sb * sb * grad.db[l - 1];
        }
    }
    if (trained) *trained = net;
    return tr;
}

}  // namespace fimspec
