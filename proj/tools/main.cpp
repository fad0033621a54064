#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fimspec/errors.hpp"
#include "fimspec/experiments.hpp"

using namespace fimspec;

namespace {

using Command = std::string (*)(const ExperimentConfig &, std::ostream &);

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<std::string> out;
    std::optional<int> threads;
};

int report(const char *kind, const std::string &msg, const nlohmann::ordered_json &extra = {}) {
    nlohmann::ordered_json j;
    j["error"] = kind;
    j["message"] = msg;
    if (extra.is_object())
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    std::cerr << j.dump() << '\n';
    return 1;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Eigenvalue statistics of Fisher information, NTK and input metric matrices of wide networks"};
    app.require_subcommand(1);

    const std::map<std::string, Command> commands = {
        {"orderparams", cmd_orderparams}, {"predict", cmd_predict}, {"spectrum", cmd_spectrum},
        {"compare", cmd_compare},         {"train", cmd_train},     {"ntk-scaling", cmd_ntk_scaling},
    };
    const std::map<std::string, std::string> help = {
        {"orderparams", "order parameters and kappa constants"},
        {"predict", "theoretical eigenvalue statistics"},
        {"spectrum", "ensemble spectra and histograms"},
        {"compare", "theory versus empirics, sweeping width"},
        {"train", "NTK-simulated versus explicit training"},
        {"ntk-scaling", "NTK spectra sweeping the sample count"},
    };

    Overrides ov;
    for (const auto &[name, fn] : commands) {
        auto *sub = app.add_subcommand(name, help.at(name));
        sub->add_option("--config", ov.config, "config file")->required();
        sub->add_option("--seed", ov.seed, "master seed");
        sub->add_option("--trials", ov.trials, "number of trials")->check(CLI::PositiveNumber);
        sub->add_option("--out", ov.out, "output directory");
        sub->add_option("--threads", ov.threads, "worker threads")->check(CLI::PositiveNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        return report("UsageError", e.what());
    }

    try {
        ExperimentConfig cfg = ExperimentConfig::load(ov.config);
        if (ov.seed) cfg.seed = *ov.seed;
        if (ov.trials) cfg.trials = *ov.trials;
        if (ov.out) cfg.out = *ov.out;
        if (ov.threads) cfg.threads = *ov.threads;
        for (const auto &[name, fn] : commands) {
            if (app.got_subcommand(name)) {
                const std::string path = fn(cfg, std::cout);
                std::cerr << "wrote " << path << '\n';
            }
        }
    } catch (const ConfigError &e) {
        nlohmann::ordered_json x;
        x["line"] = e.line();
        x["field"] = e.field();
        return report(e.kind(), e.what(), x);
    } catch (const DivergenceError &e) {
        nlohmann::ordered_json x;
        x["step"] = e.step();
        return report(e.kind(), e.what(), x);
    } catch (const NumericalError &e) {
        nlohmann::ordered_json x;
        x["node"] = std::isnan(e.node()) ? nlohmann::ordered_json() : nlohmann::ordered_json(e.node());
        return report(e.kind(), e.what(), x);
    } catch (const Error &e) {
        return report(e.kind(), e.what());
    } catch (const std::exception &e) {
        return report("InternalError", e.what());
    }
    return 0;
}
