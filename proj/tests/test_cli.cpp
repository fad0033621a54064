#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fimspec/errors.hpp"
#include "fimspec/experiments.hpp"

using namespace fimspec;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path &p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / ("fimspec_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::map<std::string, std::string> read_kappas(const fs::path &p) {
    std::map<std::string, std::string> m;
    std::istringstream in(slurp(p));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto c = line.find(',');
        m[line.substr(0, c)] = line.substr(c + 1);
    }
    return m;
}

}  // namespace

TEST_CASE("config parsing") {
    const auto c = ExperimentConfig::parse(
        "# comment\n"
        "depth = 4\n"
        "width = 100, 200  # sweep\n"
        "activation = relu\n"
        "sigma_w2 = 2\n"
        "sigma_b2 = 0\n"
        "kinds = fim_mse, ntk\n"
        "samples_equal_width = true\n"
        "quadrature = hermite:61\n"
        "parameterization = ntk\n"
        "loss = mse\n");
    CHECK(c.depth == 4);
    CHECK(c.widths == std::vector<int>{100, 200});
    CHECK(c.sample_counts(200) == std::vector<int>{200});
    CHECK(c.gram_kinds().size() == 2);
    CHECK(c.parameterization == Parameterization::Ntk);
    CHECK(c.loss == LossKind::Mse);
    CHECK(c.meanfield_options().quadrature().order() == 61);
    CHECK(c.network(100).activation(2).tag() == ActivationTag::ReLU);
}

TEST_CASE("config errors carry line and field") {
    auto expect = [](const std::string &text, int line, const std::string &field) {
        try {
            (void)ExperimentConfig::parse(text);
            FAIL("expected ConfigError for: " << text);
        } catch (const ConfigError &e) {
            CHECK(e.line() == line);
            CHECK(e.field() == field);
        }
    };
    expect("depth = 3\nwidht = 10\n", 2, "widht");
    expect("depth = 3\n\ndepth = 4\n", 3, "depth");
    expect("trials = many\n", 1, "trials");
    expect("trials = 0\n", 1, "trials");
    expect("seed = -1\n", 1, "seed");
    expect("kinds = fim_mse, hessian\n", 1, "kinds");
    expect("activation = sigmoid\n", 1, "activation");
    expect("quadrature = simpson\n", 1, "quadrature");
    expect("eta =\n", 1, "eta");
    expect("reference = maybe\n", 1, "reference");
    expect("\n\njust text\n", 3, "");
    CHECK_THROWS_AS(ExperimentConfig::parse("width_ratios = 1, 1\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/cfg"), ConfigError);
}

TEST_CASE("effective config round-trips") {
    auto c = ExperimentConfig::parse("width = 64\nactivation = leaky_relu:0.3\nsigma_w2 = 0.1\nkinds = metric_a:1\n");
    const auto d = ExperimentConfig::parse(c.to_text());
    CHECK(d.to_text() == c.to_text());
    CHECK(d.sigma_w2 == c.sigma_w2);
    CHECK(d.activations == c.activations);
}

TEST_CASE("orderparams command") {
    const fs::path dir = scratch("op");
    auto c = ExperimentConfig::parse("depth = 2\nactivation = identity\nsigma_w2 = 1\nsigma_b2 = 0\nwidth = 10\n");
    c.out = (dir / "id").string();
    std::ostringstream log;
    cmd_orderparams(c, log);
    auto k = read_kappas(dir / "id" / "kappas.csv");
    CHECK(std::stod(k["kappa1"]) == doctest::Approx(2.0));
    CHECK(std::stod(k["kappa2"]) == doctest::Approx(0.0));
    CHECK(log.str().find("centered") != std::string::npos);

    c = ExperimentConfig::parse("depth = 3\nactivation = tanh\nsigma_w2 = 3\nsigma_b2 = 0.64\n");
    c.out = (dir / "tanh").string();
    cmd_orderparams(c, log);
    const auto op = order_params(c.network(c.widths.front()), c.meanfield_options());
    CHECK(slurp(dir / "tanh" / "orderparams.csv") == order_params_csv(op));
    CHECK(slurp(dir / "tanh" / "kappas.csv") == kappas_csv(op));
    CHECK(fs::exists(dir / "tanh" / "config.cfg"));
    CHECK(fs::exists(dir / "tanh" / "config.effective.cfg"));

    c = ExperimentConfig::parse("depth = 5\nactivation = relu\nsigma_w2 = 2\nsigma_b2 = 0.1\n");
    c.out = (dir / "relu").string();
    cmd_orderparams(c, log);
    std::istringstream in(slurp(dir / "relu" / "orderparams.csv"));
    std::string line;
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() >= 4 && !cells[3].empty()) {
            CHECK(std::stod(cells[3]) == doctest::Approx(1.0).epsilon(1e-12));
            ++rows;
        }
    }
    CHECK(rows == 5);
}

TEST_CASE("spectrum and compare outputs are reproducible and thread independent") {
    const fs::path dir = scratch("spec");
    const std::string text =
        "depth = 3\nwidth = 40, 60\nsamples = 12\noutputs = 3\ntrials = 4\n"
        "kinds = fim_mse, fim_cross, ntk, ntk_meansub, metric_a, metric_a_block:1:2, fim_mse_block:2, "
        "fim_cross_block:1, fim_mse_meansub\n";
    auto c = ExperimentConfig::parse(text);
    std::ostringstream log;
    c.out = (dir / "a").string();
    cmd_spectrum(c, log);
    c.out = (dir / "b").string();
    c.threads = 3;
    cmd_spectrum(c, log);
    for (const auto &e : fs::directory_iterator(dir / "a")) {
        const auto name = e.path().filename();
        if (name == "config.effective.cfg") continue;
        CHECK_MESSAGE(slurp(e.path()) == slurp(dir / "b" / name), name.string());
    }
    CHECK(fs::exists(dir / "a" / "spectrum_fim_mse_M40_N12.csv"));
    CHECK(fs::exists(dir / "a" / "histogram_bulk_metric_a_block-1-2_M60_N12.csv"));
    const std::string summary = slurp(dir / "a" / "summary.csv");
    CHECK(summary.rfind("kind,M,N,C,L,mean_emp,mean_theory,s_emp,s_theory,lmax_emp,lmax_theory_lo,lmax_theory_hi,"
                        "alignment,outlier_gap",
                        0) == 0);
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 1 + 2 * 9);

    c.out = (dir / "c").string();
    c.threads = 1;
    cmd_compare(c, log);
    c.out = (dir / "d").string();
    cmd_compare(c, log);
    CHECK(slurp(dir / "c" / "summary.csv") == slurp(dir / "d" / "summary.csv"));
    CHECK(slurp(dir / "c" / "summary.csv") == summary);
}

TEST_CASE("predict command") {
    const fs::path dir = scratch("pred");
    auto c = ExperimentConfig::parse(
        "depth = 2\nactivation = identity\nsigma_w2 = 1\nsigma_b2 = 0\nwidth = 100\noutputs = 2\nsamples = 10\n"
        "kinds = fim_mse, fim_cross, ntk_meansub\n");
    c.out = dir.string();
    std::ostringstream log;
    cmd_predict(c, log);
    const auto j = nlohmann::json::parse(slurp(dir / "predictions.json"));
    REQUIRE(j.size() == 3);
    CHECK(j[0]["prediction"]["mean"].get<double>() == doctest::Approx(0.04));
    CHECK(j[0]["critical_learning_rate"].get<double>() == doctest::Approx(0.1));
    CHECK(j[1]["prediction"]["bounds"].size() == 2);
    CHECK(j[2]["critical_learning_rate"].is_null());
}

TEST_CASE("train and ntk-scaling commands") {
    const fs::path dir = scratch("train");
    auto c = ExperimentConfig::parse(
        "depth = 3\nactivation = relu\nsigma_w2 = 2\nsigma_b2 = 0\nwidth = 64\noutputs = 2\nsamples = 16\n"
        "eta = 1\nsteps = 20\nloss = cross_entropy\nteacher_seed = 3\n");
    c.out = (dir / "t").string();
    std::ostringstream log;
    cmd_train(c, log);
    const std::string trace = slurp(dir / "t" / "trace.csv");
    CHECK(trace.rfind("step,loss_sim,loss_reference,lmax_F,lmax_Fcross_emp,lmax_lo,lmax_hi", 0) == 0);
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 1 + 6);  // steps 0, 1, 2, 5, 10, 20

    // cross-entropy gradients are bounded, so blow up is tested with squared error
    c.eta = 1e6;
    c.loss = LossKind::Mse;
    try {
        cmd_train(c, log);
        FAIL("expected divergence");
    } catch (const DivergenceError &e) {
        CHECK(e.step() >= 1);
    }

    c = ExperimentConfig::parse(
        "depth = 3\nactivation = relu\nsigma_w2 = 2\nsigma_b2 = 0\nwidth = 50\noutputs = 2\nsamples = 10, 40\n"
        "trials = 2\nkinds = ntk, ntk_meansub\n");
    c.out = (dir / "s").string();
    cmd_ntk_scaling(c, log);
    const std::string s = slurp(dir / "s" / "summary.csv");
    CHECK(s.find("cond_proxy") != std::string::npos);
    CHECK(fs::exists(dir / "s" / "histogram_over_N_ntk_M50_N40.csv"));
}

TEST_CASE("teacher labels are one-hot and seeded") {
    NetworkConfig cfg;
    cfg.depth = 3;
    cfg.width = 30;
    cfg.outputs = 3;
    cfg.sigma_w2 = 2.0;
    cfg.activations = {Activation::relu()};
    const auto x = sample_inputs(50, 30, 1);
    const auto y = teacher_labels(cfg, x, 5);
    CHECK(y == teacher_labels(cfg, x, 5));
    for (Eigen::Index n = 0; n < y.cols(); ++n) CHECK(y.col(n).sum() == 1.0);
    CHECK(y.rowwise().sum().minCoeff() > 0.0);
}

#ifdef FIMSPEC_CLI_PATH
TEST_CASE("command-line driver") {
    const fs::path dir = scratch("cli");
    {
        std::ofstream f(dir / "ok.cfg");
        f << "depth = 2\nactivation = identity\nsigma_w2 = 1\nsigma_b2 = 0\nwidth = 20\n";
        std::ofstream g(dir / "bad.cfg");
        g << "depth = 2\nsigma_w2 = x\n";
    }
    const std::string exe = FIMSPEC_CLI_PATH;
    const std::string ok = exe + " orderparams --config " + (dir / "ok.cfg").string() + " --out " +
                           (dir / "out").string() + " --seed 5 --trials 2 --threads 1 > " +
                           (dir / "stdout").string() + " 2>&1";
    CHECK(std::system(ok.c_str()) == 0);
    CHECK(fs::exists(dir / "out" / "orderparams.csv"));
    CHECK(slurp(dir / "out" / "config.effective.cfg").find("seed = 5") != std::string::npos);

    const std::string bad = exe + " orderparams --config " + (dir / "bad.cfg").string() + " 2> " +
                            (dir / "err").string();
    CHECK(std::system(bad.c_str()) != 0);
    const auto j = nlohmann::json::parse(slurp(dir / "err"));
    CHECK(j["error"] == "ConfigError");
    CHECK(j["line"] == 2);
    CHECK(j["field"] == "sigma_w2");

    const std::string usage = exe + " frobnicate 2> " + (dir / "err2").string();
    CHECK(std::system(usage.c_str()) != 0);
    CHECK(nlohmann::json::parse(slurp(dir / "err2"))["error"] == "UsageError");
}
#endif
