#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fimspec/config.hpp"
#include "fimspec/spectra.hpp"

namespace fimspec {

struct EnsembleSpec {
    NetworkConfig net;
    Parameterization param = Parameterization::Standard;
    int N = 100;
    std::vector<GramKind> kinds;
    int trials = 1;
    std::uint64_t seed = 1;
    int threads = 1;
    SpectrumOptions spectrum;
    MeanFieldOptions meanfield;
};

struct TrialResult {
    int trial = 0;
    std::uint64_t seed = 0;
    std::vector<SpectrumReport> reports;      // one per kind
    std::vector<EigStatsPrediction> theory;   // one per kind (softmax kinds use this trial's g)
};

struct EnsembleResult {
    EnsembleSpec spec;
    OrderParams op;
    std::vector<TrialResult> trials;  // ordered by trial index
};

// Seed of trial t; network and inputs are drawn from streams under it.
std::uint64_t trial_seed(std::uint64_t master, int trial);

TrialResult run_trial(const EnsembleSpec &spec, const OrderParams &op, int trial);
EnsembleResult run_ensemble(const EnsembleSpec &spec);

struct SummaryRow {
    std::string kind;
    int M = 0, N = 0, C = 0, L = 0;
    double mean_emp = 0, mean_theory = 0, s_emp = 0, s_theory = 0;
    double lmax_emp = 0, lmax_lo = 0, lmax_hi = 0;
    double alignment = 0, outlier_gap = 0;
    double mean_sd = 0, s_sd = 0, lmax_sd = 0;
    double cond_proxy = 0;  // mean over trials of lambda_max / lambda_min (NaN if unknown)
    int trials = 0;
};

SummaryRow summarize(const EnsembleResult &res, std::size_t kind_index);
std::string summary_csv_header(bool with_cond = false);
std::string summary_csv_row(const SummaryRow &r, bool with_cond = false);
std::string format_double(double v);

// Driver commands. Each writes its outputs plus an echo of the config to
// cfg.out and returns the path of the main output file.
std::string cmd_orderparams(const ExperimentConfig &cfg, std::ostream &log);
std::string cmd_predict(const ExperimentConfig &cfg, std::ostream &log);
std::string cmd_spectrum(const ExperimentConfig &cfg, std::ostream &log);
std::string cmd_compare(const ExperimentConfig &cfg, std::ostream &log);
std::string cmd_train(const ExperimentConfig &cfg, std::ostream &log);
std::string cmd_ntk_scaling(const ExperimentConfig &cfg, std::ostream &log);

// Labels from a frozen teacher with the same architecture: one-hot argmax.
Eigen::MatrixXd teacher_labels(const NetworkConfig &cfg, const Eigen::MatrixXd &x, std::uint64_t teacher_seed);

}  // namespace fimspec
