#include "fimspec/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "fimspec/errors.hpp"

namespace fimspec {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_pack(const SignalPack &pack, const NetworkInstance &net) {
    const auto &cfg = net.config();
    const int L = cfg.depth;
    if (!pack.has_backward()) throw ShapeError("signal pack lacks backward signals");
    if (static_cast<int>(pack.act.size()) != L || static_cast<int>(pack.delta.size()) != L + 1)
        throw ShapeError("signal pack depth does not match network");
    if (pack.outputs() != cfg.outputs) throw ShapeError("signal pack outputs do not match network");
    for (int l = 1; l <= L; ++l) {
        if (pack.delta[l].rows() != cfg.layer_width(l) ||
            pack.delta[l].cols() != static_cast<Eigen::Index>(cfg.outputs) * pack.samples())
            throw ShapeError("backward signal " + std::to_string(l) + " has wrong shape");
        if (pack.act[l - 1].rows() != cfg.layer_width(l - 1))
            throw ShapeError("activation " + std::to_string(l - 1) + " has wrong shape");
    }
}

// G(kN+n, k'N+m) += scale * (D_k(n) . D_k'(m)) * K(n, m), lower block triangle only.
void accumulate_blocks(Eigen::MatrixXd &G, const Eigen::MatrixXd &D, const Eigen::MatrixXd *K, int blocks, int N,
                       double scale) {
    for (int k = 0; k < blocks; ++k) {
        const auto Dk = D.middleCols(static_cast<Eigen::Index>(k) * N, N);
        for (int kp = 0; kp <= k; ++kp) {
            const auto Dkp = D.middleCols(static_cast<Eigen::Index>(kp) * N, N);
            auto blk = G.block(static_cast<Eigen::Index>(k) * N, static_cast<Eigen::Index>(kp) * N, N, N);
            if (K)
                blk.noalias() += scale * (Dk.transpose() * Dkp).cwiseProduct(*K);
            else
                blk.noalias() += scale * (Dk.transpose() * Dkp);
        }
    }
}

void symmetrize_from_lower_blocks(Eigen::MatrixXd &G, int blocks, int N) {
    for (int k = 0; k < blocks; ++k)
        for (int kp = 0; kp < k; ++kp)
            G.block(static_cast<Eigen::Index>(kp) * N, static_cast<Eigen::Index>(k) * N, N, N) =
                G.block(static_cast<Eigen::Index>(k) * N, static_cast<Eigen::Index>(kp) * N, N, N).transpose();
    for (int k = 0; k < blocks; ++k) {
        auto d = G.block(static_cast<Eigen::Index>(k) * N, static_cast<Eigen::Index>(k) * N, N, N);
        Eigen::MatrixXd s = 0.5 * (d + d.transpose());
        d = s;
    }
}

// Squared norms of each column.
Eigen::VectorXd col_sq(const Eigen::MatrixXd &X) { return X.colwise().squaredNorm().transpose(); }

// Layer-l contribution to F* (scale w on the weight part, sb on the bias part).
void add_param_layer(Eigen::MatrixXd &G, double &trace, const SignalPack &pack, int l, int C, int N, double w,
                     double sb) {
    const Eigen::MatrixXd &D = pack.delta[l];
    const Eigen::MatrixXd &H = pack.act[l - 1];
    const Eigen::MatrixXd K = (w * (H.transpose() * H)).array() + sb;
    accumulate_blocks(G, D, &K, C, N, 1.0);
    const Eigen::VectorXd dn = col_sq(D);
    const Eigen::VectorXd hn = col_sq(H);
    for (int k = 0; k < C; ++k)
        for (int n = 0; n < N; ++n) trace += dn(static_cast<Eigen::Index>(k) * N + n) * (w * hn(n) + sb);
}

}  // namespace

DualGram build_dual_fim(const SignalPack &pack, const NetworkInstance &net) {
    check_pack(pack, net);
    const int L = net.depth(), C = pack.outputs(), N = pack.samples();
    DualGram d;
    d.kind = {GramTag::FimMse};
    d.samples = N;
    d.blocks = C;
    d.matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(C) * N, static_cast<Eigen::Index>(C) * N);
    double tr = 0.0;
    for (int l = 1; l <= L; ++l) add_param_layer(d.matrix, tr, pack, l, C, N, 1.0, 1.0);
    symmetrize_from_lower_blocks(d.matrix, C, N);
    d.matrix /= N;
    d.column_norm_trace = tr / N;
    return d;
}

DualGram build_dual_block(const SignalPack &pack, const NetworkInstance &net, int l) {
    check_pack(pack, net);
    const int L = net.depth(), C = pack.outputs(), N = pack.samples();
    if (l < 1 || l > L) throw DomainError("F block index must be in 1..L");
    DualGram d;
    d.kind = {GramTag::FimMseBlock, l};
    d.samples = N;
    d.blocks = C;
    d.matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(C) * N, static_cast<Eigen::Index>(C) * N);
    double tr = 0.0;
    add_param_layer(d.matrix, tr, pack, l, C, N, 1.0, 1.0);
    symmetrize_from_lower_blocks(d.matrix, C, N);
    d.matrix /= N;
    d.column_norm_trace = tr / N;
    return d;
}

DualGram apply_softmax_q(const DualGram &dual, const Eigen::MatrixXd &g) {
    const int C = dual.blocks, N = dual.samples;
    if (g.rows() != C || g.cols() != N) throw ShapeError("softmax array does not match dual");
    check_simplex(g);

    // Per-sample C x C square roots of Q_n, and the trace of Q F*. Q_n 1 = 0
    // exactly, so sqrt(Q_n) = sqrt(Q_n + J) - J with J = 1 1^T / C; the shifted
    // matrix has no spurious near-zero eigenvalue to take the root of.
    std::vector<Eigen::MatrixXd> roots(N);
    double tr = 0.0;
    const Eigen::MatrixXd J = Eigen::MatrixXd::Constant(C, C, 1.0 / C);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    for (int n = 0; n < N; ++n) {
        const Eigen::VectorXd gn = g.col(n);
        Eigen::MatrixXd Qn = Eigen::MatrixXd(gn.asDiagonal()) - gn * gn.transpose();
        if (Qn.isZero(0.0)) {  // one-hot softmax
            roots[n] = Eigen::MatrixXd::Zero(C, C);
            continue;
        }
        es.compute(Qn + J);
        if (es.info() != Eigen::Success) throw NumericalError("Q block eigensolve failed");
        const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        roots[n] = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose() - J;
        for (int k = 0; k < C; ++k)
            for (int kp = 0; kp < C; ++kp)
                tr += Qn(k, kp) * dual.matrix(static_cast<Eigen::Index>(kp) * N + n, static_cast<Eigen::Index>(k) * N + n);
    }

    auto left = [&](const Eigen::MatrixXd &X) {
        Eigen::MatrixXd Y(X.rows(), X.cols());
        Eigen::MatrixXd rows(C, X.cols());
        for (int n = 0; n < N; ++n) {
            for (int k = 0; k < C; ++k) rows.row(k) = X.row(static_cast<Eigen::Index>(k) * N + n);
            const Eigen::MatrixXd out = roots[n] * rows;
            for (int k = 0; k < C; ++k) Y.row(static_cast<Eigen::Index>(k) * N + n) = out.row(k);
        }
        return Y;
    };
    const Eigen::MatrixXd X = left(dual.matrix);
    Eigen::MatrixXd Y = left(X.transpose());

    DualGram d;
    d.kind = dual.kind;
    d.kind.tag = dual.kind.tag == GramTag::FimMseBlock ? GramTag::FimCrossBlock : GramTag::FimCross;
    d.samples = N;
    d.blocks = C;
    d.matrix = 0.5 * (Y + Y.transpose());
    d.column_norm_trace = tr;
    return d;
}

DualGram build_dual_ntk(const SignalPack &pack, const NetworkInstance &net, bool rescale_standard) {
    if (net.parameterization() == Parameterization::Standard && !rescale_standard)
        throw ParameterizationError("NTK dual needs the NTK parameterization (or explicit rescaling)");
    check_pack(pack, net);
    const auto &cfg = net.config();
    const int L = net.depth(), C = pack.outputs(), N = pack.samples();
    DualGram d;
    d.kind = {GramTag::Ntk};
    d.samples = N;
    d.blocks = C;
    d.matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(C) * N, static_cast<Eigen::Index>(C) * N);
    double tr = 0.0;
    for (int l = 1; l <= L; ++l)
        add_param_layer(d.matrix, tr, pack, l, C, N, cfg.sigma_w2 / cfg.layer_width(l - 1), cfg.sigma_b2);
    symmetrize_from_lower_blocks(d.matrix, C, N);
    d.column_norm_trace = tr;
    return d;
}

namespace {

// E_l = (W^{l+1})^T delta^{l+1}, restricted to one output block when k >= 0.
Eigen::MatrixXd input_gradients(const SignalPack &pack, const NetworkInstance &net, int l, int k) {
    const int N = pack.samples();
    if (k >= 0)
        return net.weight(l + 1).transpose() * pack.delta[l + 1].middleCols(static_cast<Eigen::Index>(k) * N, N);
    return net.weight(l + 1).transpose() * pack.delta[l + 1];
}

DualGram metric_dual(const SignalPack &pack, const NetworkInstance &net, int lo, int hi, int output) {
    check_pack(pack, net);
    const int C = pack.outputs(), N = pack.samples();
    if (output >= C) throw DomainError("output index out of range");
    const int blocks = output >= 0 ? 1 : C;
    DualGram d;
    d.samples = N;
    d.blocks = blocks;
    d.matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(blocks) * N, static_cast<Eigen::Index>(blocks) * N);
    double tr = 0.0;
    for (int l = lo; l <= hi; ++l) {
        const Eigen::MatrixXd E = input_gradients(pack, net, l, output);
        accumulate_blocks(d.matrix, E, nullptr, blocks, N, 1.0);
        tr += E.colwise().squaredNorm().sum();
    }
    symmetrize_from_lower_blocks(d.matrix, blocks, N);
    d.matrix /= N;
    d.column_norm_trace = tr / N;
    return d;
}

}  // namespace

DualGram build_dual_metric_a(const SignalPack &pack, const NetworkInstance &net, int output) {
    DualGram d = metric_dual(pack, net, 0, net.depth() - 1, output);
    d.kind = {GramTag::MetricA, 0, output < 0 ? -1 : output};
    return d;
}

DualGram build_dual_metric_a_block(const SignalPack &pack, const NetworkInstance &net, int l, int output) {
    if (l < 0 || l > net.depth() - 1) throw DomainError("A block index must be in 0..L-1");
    if (output < 0) throw DomainError("A block needs an output index");
    DualGram d = metric_dual(pack, net, l, l, output);
    d.kind = {GramTag::MetricABlock, l, output};
    return d;
}

DualGram mean_subtract(const DualGram &dual) {
    const int B = dual.blocks, N = dual.samples;
    DualGram d = dual;
    switch (dual.kind.tag) {
    case GramTag::FimMse: d.kind.tag = GramTag::FimMseMeanSub; break;
    case GramTag::Ntk: d.kind.tag = GramTag::NtkMeanSub; break;
    default: break;
    }
    Eigen::MatrixXd &G = d.matrix;
    double removed = 0.0;
    for (int k = 0; k < B; ++k) removed += dual.matrix.block(static_cast<Eigen::Index>(k) * N, static_cast<Eigen::Index>(k) * N, N, N).sum() / N;
    for (int k = 0; k < B; ++k) {
        auto rows = G.middleRows(static_cast<Eigen::Index>(k) * N, N);
        const Eigen::RowVectorXd mean = rows.colwise().mean();
        rows.rowwise() -= mean;
    }
    for (int k = 0; k < B; ++k) {
        auto cols = G.middleCols(static_cast<Eigen::Index>(k) * N, N);
        const Eigen::VectorXd mean = cols.rowwise().mean();
        cols.colwise() -= mean;
    }
    G = 0.5 * (G + G.transpose()).eval();
    // trace((I - Pi) G (I - Pi)) = trace(G) - trace(Pi G)
    d.column_norm_trace = dual.column_norm_trace - removed;
    return d;
}

DualGram build_dual(const GramKind &kind, const SignalPack &pack, const NetworkInstance &net) {
    kind.check(net.config());
    switch (kind.tag) {
    case GramTag::FimMse: return build_dual_fim(pack, net);
    case GramTag::FimMseBlock: return build_dual_block(pack, net, kind.layer);
    case GramTag::FimCross: return apply_softmax_q(build_dual_fim(pack, net), pack.g);
    case GramTag::FimCrossBlock: return apply_softmax_q(build_dual_block(pack, net, kind.layer), pack.g);
    case GramTag::Ntk: return build_dual_ntk(pack, net);
    case GramTag::NtkMeanSub: return mean_subtract(build_dual_ntk(pack, net));
    case GramTag::FimMseMeanSub: return mean_subtract(build_dual_fim(pack, net));
    case GramTag::MetricA: return build_dual_metric_a(pack, net, kind.output);
    case GramTag::MetricABlock: return build_dual_metric_a_block(pack, net, kind.layer, std::max(kind.output, 0));
    }
    throw DomainError("unhandled gram kind");
}

double primal_dimension(const GramKind &kind, const NetworkConfig &cfg, int N) {
    switch (kind.tag) {
    case GramTag::FimMse:
    case GramTag::FimCross:
    case GramTag::FimMseMeanSub: return static_cast<double>(cfg.parameter_count());
    case GramTag::FimMseBlock:
    case GramTag::FimCrossBlock: {
        const double m = cfg.layer_width(kind.layer), mp = cfg.layer_width(kind.layer - 1);
        return m * mp + m;
    }
    case GramTag::Ntk:
    case GramTag::NtkMeanSub: return N;
    case GramTag::MetricA: {
        double mh = 0.0;
        for (int l = 0; l < cfg.depth; ++l) mh += cfg.layer_width(l);
        return mh;
    }
    case GramTag::MetricABlock: return cfg.layer_width(kind.layer);
    }
    return 0.0;
}

Histogram make_histogram(const std::vector<double> &values, double lambda_ref, int bins) {
    Histogram h;
    h.counts.assign(bins, 0);
    h.edges.resize(bins + 1);
    if (!(lambda_ref > 0.0)) {
        for (int i = 0; i <= bins; ++i) h.edges[i] = 0.0;
        h.zero_count = static_cast<long long>(values.size());
        return h;
    }
    const double lo = std::log10(1e-12 * lambda_ref), hi = std::log10(lambda_ref);
    for (int i = 0; i <= bins; ++i) h.edges[i] = std::pow(10.0, lo + (hi - lo) * i / bins);
    for (double v : values) {
        if (v <= h.edges[0]) {
            ++h.zero_count;
            continue;
        }
        int b = static_cast<int>(std::floor((std::log10(v) - lo) / (hi - lo) * bins));
        b = std::clamp(b, 0, bins - 1);
        ++h.counts[b];
    }
    return h;
}

void merge_histogram(Histogram &into, const Histogram &other) {
    if (into.counts.empty()) {
        into = other;
        return;
    }
    if (into.counts.size() != other.counts.size()) throw ShapeError("histogram bin counts differ");
    for (std::size_t i = 0; i < into.counts.size(); ++i) into.counts[i] += other.counts[i];
    into.zero_count += other.zero_count;
}

int reference_rank(const DualGram &dual) { return dual.blocks; }

Eigen::MatrixXd reference_subspace(const DualGram &dual) {
    const int B = dual.blocks, N = dual.samples;
    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(B) * N, B);
    for (int k = 0; k < B; ++k) U.col(k).segment(static_cast<Eigen::Index>(k) * N, N).setConstant(1.0 / std::sqrt(N));
    return U;
}

double subspace_alignment(const Eigen::MatrixXd &V, const Eigen::MatrixXd &U) {
    if (V.rows() != U.rows()) throw ShapeError("subspace dimensions differ");
    const Eigen::Index r = std::min(V.cols(), U.cols());
    if (r == 0) return kNaN;
    return (V.transpose() * U).squaredNorm() / static_cast<double>(r);
}

SpectrumReport eigen_stats(const DualGram &dual, double primal_dim, const SpectrumOptions &opts) {
    if (!(primal_dim > 0.0)) throw DomainError("primal dimension must be positive");
    const Eigen::Index n = dual.size();
    if (n == 0) throw ShapeError("empty dual");
    if (!dual.matrix.allFinite()) throw NumericalError("dual contains non-finite entries");

    SpectrumReport rep;
    rep.kind = dual.kind;
    const double tr = dual.matrix.trace();
    if (std::isfinite(dual.column_norm_trace) &&
        std::abs(tr - dual.column_norm_trace) > 1e-8 * std::max(1.0, std::abs(tr)))
        throw NumericalError("dual trace disagrees with the accumulated gradient norms");
    rep.mean = tr / primal_dim;
    rep.second_moment = dual.matrix.squaredNorm() / primal_dim;
    const int r = reference_rank(dual);
    rep.reference_rank = r;
    const int want = static_cast<int>(std::min<Eigen::Index>(n, opts.top_k > 0 ? opts.top_k : r + 1));

    Eigen::MatrixXd V;
    if (n <= opts.full_threshold) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
            dual.matrix, opts.eigenvectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
        rep.full = true;
        rep.eigenvalues.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) rep.eigenvalues[i] = es.eigenvalues()(n - 1 - i);
        rep.min_eigenvalue = es.eigenvalues()(0);
        if (opts.eigenvectors) {
            const Eigen::Index rr = std::min<Eigen::Index>(r, n);
            V = es.eigenvectors().rightCols(rr).rowwise().reverse();
        }
    } else {
        Eigen::VectorXd vals;
        Eigen::MatrixXd vecs;
        top_eigenpairs(dual.matrix, std::max(want, r), vals, opts.eigenvectors ? &vecs : nullptr);
        rep.full = false;
        rep.eigenvalues.assign(vals.data(), vals.data() + vals.size());
        rep.min_eigenvalue = kNaN;
        if (opts.eigenvectors) V = vecs.leftCols(r);
    }
    rep.lambda_max = rep.eigenvalues.front();
    const std::size_t ntop = std::min<std::size_t>(rep.eigenvalues.size(), static_cast<std::size_t>(r) + 1);
    rep.top.assign(rep.eigenvalues.begin(), rep.eigenvalues.begin() + static_cast<std::ptrdiff_t>(ntop));
    rep.outlier_gap = (ntop == static_cast<std::size_t>(r) + 1 && rep.top[r] != 0.0) ? rep.top[r - 1] / rep.top[r] : kNaN;
    rep.alignment = opts.eigenvectors ? subspace_alignment(V, reference_subspace(dual)) : kNaN;
    return rep;
}

double top_eigvec_alignment(const DualGram &dual) {
    const int r = reference_rank(dual);
    Eigen::VectorXd vals;
    Eigen::MatrixXd vecs;
    top_eigenpairs(dual.matrix, r, vals, &vecs);
    return subspace_alignment(vecs, reference_subspace(dual));
}

}  // namespace fimspec
