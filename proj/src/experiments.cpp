#include "fimspec/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fimspec/errors.hpp"
#include "fimspec/rng.hpp"

namespace fimspec {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_ntk(const GramKind &k) { return k.tag == GramTag::Ntk || k.tag == GramTag::NtkMeanSub; }

void write_file(const fs::path &path, const std::string &content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path.string() + "'");
    f << content;
}

fs::path prepare_out(const ExperimentConfig &cfg) {
    fs::path out(cfg.out);
    fs::create_directories(out);
    write_file(out / "config.cfg", cfg.source_text);
    write_file(out / "config.effective.cfg", cfg.to_text());
    return out;
}

std::string file_tag(const GramKind &k, int M, int N) {
    std::string name = k.name();
    for (char &c : name)
        if (c == ':') c = '-';
    return name + "_M" + std::to_string(M) + "_N" + std::to_string(N);
}

std::string histogram_csv(const Histogram &h) {
    std::ostringstream os;
    os << "bin_lo,bin_hi,count\n";
    os << "0," << format_double(h.edges.empty() ? 0.0 : h.edges.front()) << ',' << h.zero_count << '\n';
    for (std::size_t i = 0; i < h.counts.size(); ++i)
        os << format_double(h.edges[i]) << ',' << format_double(h.edges[i + 1]) << ',' << h.counts[i] << '\n';
    return os.str();
}

struct Moments {
    double mean = 0, sd = 0;
};

Moments moments(const std::vector<double> &v) {
    Moments m;
    if (v.empty()) return {kNaN, kNaN};
    for (double x : v) m.mean += x;
    m.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        for (double x : v) m.sd += (x - m.mean) * (x - m.mean);
        m.sd = std::sqrt(m.sd / static_cast<double>(v.size() - 1));
    }
    return m;
}

EnsembleSpec make_spec(const ExperimentConfig &cfg, int width, int N, std::vector<GramKind> kinds) {
    EnsembleSpec s;
    s.net = cfg.network(width);
    s.param = cfg.parameterization;
    s.N = N;
    s.kinds = std::move(kinds);
    s.trials = cfg.trials;
    s.seed = cfg.seed;
    s.threads = cfg.threads;
    s.spectrum.full_threshold = cfg.full_threshold;
    s.meanfield = cfg.meanfield_options();
    return s;
}

}  // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::uint64_t trial_seed(std::uint64_t master, int trial) {
    return derive_seed(master, {kStreamTrial, static_cast<std::uint64_t>(trial)});
}

namespace {

// lambda_i(F_cross) <= lambda_i(F) for every index both reports hold.
void check_domination(const TrialResult &tr) {
    const SpectrumReport *f = nullptr, *fc = nullptr;
    for (const auto &r : tr.reports) {
        if (r.kind.tag == GramTag::FimMse) f = &r;
        if (r.kind.tag == GramTag::FimCross) fc = &r;
    }
    if (!f || !fc) return;
    const std::size_t n = std::min(f->eigenvalues.size(), fc->eigenvalues.size());
    const double tol = 1e-9 * std::max(1.0, f->lambda_max);
    for (std::size_t i = 0; i < n; ++i)
        if (fc->eigenvalues[i] > f->eigenvalues[i] + tol)
            throw NumericalError("cross-entropy eigenvalue " + std::to_string(i) + " exceeds the squared-error one");
}

}  // namespace

TrialResult run_trial(const EnsembleSpec &spec, const OrderParams &op, int trial) {
    const auto &cfg = spec.net;
    TrialResult tr;
    tr.trial = trial;
    tr.seed = trial_seed(spec.seed, trial);
    const NetworkInstance net = NetworkInstance::sample(cfg, spec.param, tr.seed);
    const Eigen::MatrixXd x = sample_inputs(spec.N, cfg.input_dim(), tr.seed);
    const SignalPack pack = propagate(net, x);

    std::optional<DualGram> fim;
    for (const auto &kind : spec.kinds) {
        kind.check(cfg);
        DualGram dual;
        if (is_ntk(kind)) {
            dual = build_dual_ntk(pack, net, /*rescale_standard=*/true);
            if (kind.tag == GramTag::NtkMeanSub) dual = mean_subtract(dual);
        } else if (kind.tag == GramTag::FimMse || kind.tag == GramTag::FimCross ||
                   kind.tag == GramTag::FimMseMeanSub) {
            if (!fim) fim = build_dual_fim(pack, net);
            if (kind.tag == GramTag::FimMse) dual = *fim;
            else if (kind.tag == GramTag::FimCross) dual = apply_softmax_q(*fim, pack.g);
            else dual = mean_subtract(*fim);
        } else {
            dual = build_dual(kind, pack, net);
        }
        SpectrumReport rep = eigen_stats(dual, primal_dimension(kind, cfg, spec.N), spec.spectrum);
        rep.kind = kind;
        tr.reports.push_back(std::move(rep));
        std::optional<SoftmaxCoeffs> coeffs;
        if (kind.needs_softmax()) coeffs = softmax_coeffs(pack.g);
        tr.theory.push_back(predict(kind, op, cfg, spec.N, coeffs));
    }
    check_domination(tr);
    return tr;
}

EnsembleResult run_ensemble(const EnsembleSpec &spec) {
    EnsembleResult res;
    res.spec = spec;
    res.op = order_params(spec.net, spec.meanfield);
    res.trials.resize(spec.trials);
    const int nthreads = std::max(1, std::min(spec.threads, spec.trials));
    if (nthreads == 1) {
        for (int t = 0; t < spec.trials; ++t) res.trials[t] = run_trial(spec, res.op, t);
        return res;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(spec.trials);
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) {
        pool.emplace_back([&] {
            for (int t = next++; t < spec.trials; t = next++) {
                try {
                    res.trials[t] = run_trial(spec, res.op, t);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            }
        });
    }
    for (auto &th : pool) th.join();
    for (auto &e : errors)
        if (e) std::rethrow_exception(e);
    return res;
}

SummaryRow summarize(const EnsembleResult &res, std::size_t i) {
    const auto &cfg = res.spec.net;
    SummaryRow r;
    r.kind = res.spec.kinds.at(i).name();
    r.M = cfg.width;
    r.N = res.spec.N;
    r.C = cfg.outputs;
    r.L = cfg.depth;
    r.trials = static_cast<int>(res.trials.size());
    std::vector<double> me, mt, se, st, le, lo, hi, al, gap, cond;
    for (const auto &t : res.trials) {
        const auto &rep = t.reports.at(i);
        const auto &th = t.theory.at(i);
        me.push_back(rep.mean);
        se.push_back(rep.second_moment);
        le.push_back(rep.lambda_max);
        al.push_back(rep.alignment);
        gap.push_back(rep.outlier_gap);
        cond.push_back(rep.full && rep.min_eigenvalue > 0.0 ? rep.lambda_max / rep.min_eigenvalue : kNaN);
        mt.push_back(th.mean);
        st.push_back(th.second_moment);
        lo.push_back(th.lambda_max_lower.value_or(th.lambda_max_point.value_or(kNaN)));
        hi.push_back(th.lambda_max_upper.value_or(th.lambda_max_point.value_or(kNaN)));
    }
    const auto m_me = moments(me), m_se = moments(se), m_le = moments(le);
    r.mean_emp = m_me.mean;
    r.mean_sd = m_me.sd;
    r.s_emp = m_se.mean;
    r.s_sd = m_se.sd;
    r.lmax_emp = m_le.mean;
    r.lmax_sd = m_le.sd;
    r.mean_theory = moments(mt).mean;
    r.s_theory = moments(st).mean;
    r.lmax_lo = moments(lo).mean;
    r.lmax_hi = moments(hi).mean;
    r.alignment = moments(al).mean;
    r.outlier_gap = moments(gap).mean;
    r.cond_proxy = moments(cond).mean;
    return r;
}

std::string summary_csv_header(bool with_cond) {
    std::string h =
        "kind,M,N,C,L,mean_emp,mean_theory,s_emp,s_theory,lmax_emp,lmax_theory_lo,lmax_theory_hi,alignment,"
        "outlier_gap,mean_emp_sd,s_emp_sd,lmax_emp_sd,trials";
    if (with_cond) h += ",cond_proxy";
    return h + "\n";
}

std::string summary_csv_row(const SummaryRow &r, bool with_cond) {
    std::ostringstream os;
    os << r.kind << ',' << r.M << ',' << r.N << ',' << r.C << ',' << r.L << ',' << format_double(r.mean_emp) << ','
       << format_double(r.mean_theory) << ',' << format_double(r.s_emp) << ',' << format_double(r.s_theory) << ','
       << format_double(r.lmax_emp) << ',' << format_double(r.lmax_lo) << ',' << format_double(r.lmax_hi) << ','
       << format_double(r.alignment) << ',' << format_double(r.outlier_gap) << ',' << format_double(r.mean_sd)
       << ',' << format_double(r.s_sd) << ',' << format_double(r.lmax_sd) << ',' << r.trials;
    if (with_cond) os << ',' << format_double(r.cond_proxy);
    os << '\n';
    return os.str();
}

std::string cmd_orderparams(const ExperimentConfig &cfg, std::ostream &log) {
    const fs::path out = prepare_out(cfg);
    const NetworkConfig net = cfg.network(cfg.widths.front());
    if (!net.non_centered()) log << "warning: network is centered (sigma_b2 = 0 with zero-mean activation)\n";
    const OrderParams op = order_params(net, cfg.meanfield_options());
    write_file(out / "orderparams.csv", order_params_csv(op));
    write_file(out / "kappas.csv", kappas_csv(op));
    log << order_params_csv(op) << kappas_csv(op);
    return (out / "orderparams.csv").string();
}

std::string cmd_predict(const ExperimentConfig &cfg, std::ostream &log) {
    const fs::path out = prepare_out(cfg);
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (int M : cfg.widths) {
        const NetworkConfig net = cfg.network(M);
        const OrderParams op = order_params(net, cfg.meanfield_options());
        for (int N : cfg.sample_counts(M)) {
            std::optional<SoftmaxCoeffs> coeffs;
            for (const auto &kind : cfg.gram_kinds()) {
                if (kind.needs_softmax() && !coeffs) {
                    // Softmax statistics of the trial-0 random network.
                    const auto seed = trial_seed(cfg.seed, 0);
                    const auto inst = NetworkInstance::sample(net, cfg.parameterization, seed);
                    coeffs = softmax_coeffs(forward(inst, sample_inputs(N, net.input_dim(), seed)).g);
                }
                const auto pred = predict(kind, op, net, N, coeffs);
                nlohmann::ordered_json j;
                j["M"] = M;
                j["N"] = N;
                j["prediction"] = nlohmann::ordered_json::parse(pred.to_json());
                const auto lm = pred.lambda_max();
                if (lm && std::isfinite(*lm) && *lm > 0.0) j["critical_learning_rate"] = critical_learning_rate(pred);
                else j["critical_learning_rate"] = nullptr;
                arr.push_back(j);
            }
        }
    }
    const std::string text = arr.dump(2) + "\n";
    write_file(out / "predictions.json", text);
    log << text;
    return (out / "predictions.json").string();
}

std::string cmd_spectrum(const ExperimentConfig &cfg, std::ostream &log) {
    const fs::path out = prepare_out(cfg);
    std::string summary = summary_csv_header();
    for (int M : cfg.widths) {
        for (int N : cfg.sample_counts(M)) {
            const auto spec = make_spec(cfg, M, N, cfg.gram_kinds());
            const auto res = run_ensemble(spec);
            for (std::size_t i = 0; i < spec.kinds.size(); ++i) {
                const auto &kind = spec.kinds[i];
                std::ostringstream sp;
                sp << "trial,index,eigenvalue\n";
                std::vector<double> all, bulk;
                double ref = 0.0;
                for (const auto &t : res.trials) {
                    const auto &rep = t.reports[i];
                    ref = std::max(ref, rep.lambda_max);
                    for (std::size_t j = 0; j < rep.eigenvalues.size(); ++j) {
                        sp << t.trial << ',' << j << ',' << format_double(rep.eigenvalues[j]) << '\n';
                        all.push_back(rep.eigenvalues[j]);
                        if (j >= static_cast<std::size_t>(rep.reference_rank)) bulk.push_back(rep.eigenvalues[j]);
                    }
                }
                const std::string tag = file_tag(kind, M, N);
                write_file(out / ("spectrum_" + tag + ".csv"), sp.str());
                write_file(out / ("histogram_" + tag + ".csv"), histogram_csv(make_histogram(all, ref)));
                write_file(out / ("histogram_bulk_" + tag + ".csv"), histogram_csv(make_histogram(bulk, ref)));
                summary += summary_csv_row(summarize(res, i));
            }
        }
    }
    write_file(out / "summary.csv", summary);
    log << summary;
    return (out / "summary.csv").string();
}

std::string cmd_compare(const ExperimentConfig &cfg, std::ostream &log) {
    const fs::path out = prepare_out(cfg);
    std::string summary = summary_csv_header();
    for (int M : cfg.widths) {
        for (int N : cfg.sample_counts(M)) {
            const auto spec = make_spec(cfg, M, N, cfg.gram_kinds());
            const auto res = run_ensemble(spec);
            for (std::size_t i = 0; i < spec.kinds.size(); ++i) {
                const std::string row = summary_csv_row(summarize(res, i));
                summary += row;
                log << row << std::flush;
            }
        }
    }
    write_file(out / "summary.csv", summary);
    return (out / "summary.csv").string();
}

std::string cmd_ntk_scaling(const ExperimentConfig &cfg, std::ostream &log) {
    const fs::path out = prepare_out(cfg);
    std::string summary = summary_csv_header(true);
    for (int M : cfg.widths) {
        for (int N : cfg.sample_counts(M)) {
            const auto spec = make_spec(cfg, M, N, cfg.gram_kinds());
            const auto res = run_ensemble(spec);
            for (std::size_t i = 0; i < spec.kinds.size(); ++i) {
                std::vector<double> scaled;
                double ref = 0.0;
                for (const auto &t : res.trials) {
                    ref = std::max(ref, t.reports[i].lambda_max / N);
                    for (double v : t.reports[i].eigenvalues) scaled.push_back(v / N);
                }
                write_file(out / ("histogram_over_N_" + file_tag(spec.kinds[i], M, N) + ".csv"),
                           histogram_csv(make_histogram(scaled, ref)));
                const std::string row = summary_csv_row(summarize(res, i), true);
                summary += row;
                log << row << std::flush;
            }
        }
    }
    write_file(out / "summary.csv", summary);
    return (out / "summary.csv").string();
}

Eigen::MatrixXd teacher_labels(const NetworkConfig &cfg, const Eigen::MatrixXd &x, std::uint64_t teacher_seed) {
    const auto teacher = NetworkInstance::sample(cfg, Parameterization::Standard,
                                                 derive_seed(teacher_seed, {kStreamTeacher}));
    const Eigen::MatrixXd f = forward(teacher, x).f;
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(f.rows(), f.cols());
    for (Eigen::Index n = 0; n < f.cols(); ++n) {
        Eigen::Index k = 0;
        f.col(n).maxCoeff(&k);
        y(k, n) = 1.0;
    }
    return y;
}

std::string cmd_train(const ExperimentConfig &cfg, std::ostream &log) {
    const fs::path out = prepare_out(cfg);
    const int M = cfg.widths.front();
    const int N = cfg.sample_counts(M).front();
    const NetworkConfig netcfg = cfg.network(M);
    const auto seed = trial_seed(cfg.seed, 0);
    const auto net = NetworkInstance::sample(netcfg, Parameterization::Ntk, seed);
    const Eigen::MatrixXd x = sample_inputs(N, netcfg.input_dim(), seed);
    const Eigen::MatrixXd y = teacher_labels(netcfg, x, cfg.teacher_seed);
    const SignalPack pack = propagate(net, x);
    const DualGram theta = build_dual_ntk(pack, net);
    const OrderParams op = order_params(netcfg, cfg.meanfield_options());

    TrainingTrace sim = cfg.loss == LossKind::CrossEntropy
                            ? simulate_ntk_cross(theta, pack.f, y, cfg.eta, cfg.steps, op, netcfg)
                            : simulate_ntk_mse(theta, pack.f, y, cfg.eta, cfg.steps);
    TrainingTrace ref;
    if (cfg.reference) {
        ReferenceOptions ro;
        ro.track_spectra = cfg.track_spectra;
        ro.checkpoints = sim.steps;
        ref = train_reference(net, x, y, cfg.eta, cfg.steps, cfg.loss, ro);
    }
    const double lmax_theory = *predict_fim_mse(op, netcfg, N).lambda_max_point;

    auto at = [](const std::vector<double> &v, std::size_t i) { return i < v.size() ? v[i] : kNaN; };
    std::ostringstream os;
    os << "step,loss_sim,loss_reference,lmax_F,lmax_Fcross_emp,lmax_lo,lmax_hi,lmax_F_theory,lmax_lo_reference,"
          "lmax_hi_reference\n";
    for (std::size_t i = 0; i < sim.steps.size(); ++i) {
        os << sim.steps[i] << ',' << format_double(sim.loss[i]) << ',' << format_double(at(ref.loss, i)) << ','
           << format_double(at(ref.lambda_max_F, i)) << ',' << format_double(at(ref.lambda_max_Fcross, i)) << ','
           << format_double(at(sim.lambda_max_Fcross_lo, i)) << ',' << format_double(at(sim.lambda_max_Fcross_hi, i))
           << ',' << format_double(lmax_theory) << ',' << format_double(at(ref.lambda_max_Fcross_lo, i)) << ','
           << format_double(at(ref.lambda_max_Fcross_hi, i)) << '\n';
    }
    write_file(out / "trace.csv", os.str());
    log << os.str();
    return (out / "trace.csv").string();
}

}  // namespace fimspec
