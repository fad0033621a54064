#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fimspec/dynamics.hpp"
#include "fimspec/meanfield.hpp"
#include "fimspec/network.hpp"
#include "fimspec/theory.hpp"

namespace fimspec {

// One run of the driver. Parsed from "key = value" lines; '#' starts a
// comment. Unknown or repeated keys are rejected.
struct ExperimentConfig {
    // network
    int depth = 3;
    std::vector<int> widths{1000};  // a single entry unless sweeping
    std::vector<double> width_ratios;
    int outputs = 10;
    double sigma_w2 = 3.0;
    double sigma_b2 = 0.64;
    std::vector<std::string> activations{"tanh"};
    Parameterization parameterization = Parameterization::Standard;

    // data and ensemble
    std::vector<int> samples{100};
    bool samples_equal_width = false;
    int trials = 20;
    std::uint64_t seed = 1;
    int threads = 1;
    std::vector<std::string> kinds{"fim_mse"};

    // numerics
    std::string quadrature = "default";
    MomentMethod moment_method = MomentMethod::Auto;
    int full_threshold = 2000;

    // training
    double eta = 1.0;
    int steps = 100;
    LossKind loss = LossKind::CrossEntropy;
    std::uint64_t teacher_seed = 7;
    bool reference = true;
    bool track_spectra = true;

    std::string out = "out";
    std::string source_text;  // verbatim input, echoed to the output directory

    static ExperimentConfig parse(const std::string &text);
    static ExperimentConfig load(const std::string &path);
    // Every key with its effective value; parse(to_text()) round-trips.
    [[nodiscard]] std::string to_text() const;

    [[nodiscard]] NetworkConfig network(int width) const;
    [[nodiscard]] MeanFieldOptions meanfield_options() const;
    [[nodiscard]] std::vector<GramKind> gram_kinds() const;
    // N for a sweep point at `width`.
    [[nodiscard]] std::vector<int> sample_counts(int width) const;
};

}  // namespace fimspec
