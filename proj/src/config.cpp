#include "fimspec/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "fimspec/errors.hpp"

namespace fimspec {

namespace {

std::string trim(const std::string &s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split_list(const std::string &v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct Ctx {
    int line;
    std::string key;

    [[noreturn]] void fail(const std::string &msg) const {
        throw ConfigError("line " + std::to_string(line) + ", field '" + key + "': " + msg, line, key);
    }

    long long to_ll(const std::string &s) const {
        std::size_t pos = 0;
        long long v = 0;
        try {
            v = std::stoll(s, &pos);
        } catch (const std::exception &) {
            fail("expected an integer, got '" + s + "'");
        }
        if (pos != s.size()) fail("expected an integer, got '" + s + "'");
        return v;
    }
    int to_int(const std::string &s, int lo) const {
        const long long v = to_ll(s);
        if (v < lo || v > 1000000000LL) fail("value " + s + " out of range");
        return static_cast<int>(v);
    }
    std::uint64_t to_u64(const std::string &s) const {
        std::size_t pos = 0;
        unsigned long long v = 0;
        if (!s.empty() && s[0] == '-') fail("expected an unsigned integer");
        try {
            v = std::stoull(s, &pos);
        } catch (const std::exception &) {
            fail("expected an unsigned integer, got '" + s + "'");
        }
        if (pos != s.size()) fail("expected an unsigned integer, got '" + s + "'");
        return v;
    }
    double to_double(const std::string &s) const {
        std::size_t pos = 0;
        double v = 0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception &) {
            fail("expected a number, got '" + s + "'");
        }
        if (pos != s.size()) fail("expected a number, got '" + s + "'");
        return v;
    }
    bool to_bool(const std::string &s) const {
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        fail("expected true/false, got '" + s + "'");
    }
    std::vector<int> to_ints(const std::string &s, int lo) const {
        std::vector<int> out;
        for (const auto &p : split_list(s)) out.push_back(to_int(p, lo));
        if (out.empty()) fail("empty list");
        return out;
    }
};

using Setter = std::function<void(ExperimentConfig &, const std::string &, const Ctx &)>;

const std::map<std::string, Setter> &setters() {
    static const std::map<std::string, Setter> m = {
        {"depth", [](auto &c, auto &v, auto &x) { c.depth = x.to_int(v, 2); }},
        {"width", [](auto &c, auto &v, auto &x) { c.widths = x.to_ints(v, 1); }},
        {"width_ratios",
         [](auto &c, auto &v, auto &x) {
             c.width_ratios.clear();
             for (const auto &p : split_list(v)) c.width_ratios.push_back(x.to_double(p));
         }},
        {"outputs", [](auto &c, auto &v, auto &x) { c.outputs = x.to_int(v, 1); }},
        {"sigma_w2", [](auto &c, auto &v, auto &x) { c.sigma_w2 = x.to_double(v); }},
        {"sigma_b2", [](auto &c, auto &v, auto &x) { c.sigma_b2 = x.to_double(v); }},
        {"activation",
         [](auto &c, auto &v, auto &x) {
             c.activations = split_list(v);
             if (c.activations.empty()) x.fail("empty list");
             for (const auto &a : c.activations) {
                 try {
                     (void)Activation::parse(a);
                 } catch (const DomainError &e) {
                     x.fail(e.what());
                 }
             }
         }},
        {"parameterization",
         [](auto &c, auto &v, auto &x) {
             try {
                 c.parameterization = parse_parameterization(v);
             } catch (const DomainError &e) {
                 x.fail(e.what());
             }
         }},
        {"samples", [](auto &c, auto &v, auto &x) { c.samples = x.to_ints(v, 1); }},
        {"samples_equal_width", [](auto &c, auto &v, auto &x) { c.samples_equal_width = x.to_bool(v); }},
        {"trials", [](auto &c, auto &v, auto &x) { c.trials = x.to_int(v, 1); }},
        {"seed", [](auto &c, auto &v, auto &x) { c.seed = x.to_u64(v); }},
        {"threads", [](auto &c, auto &v, auto &x) { c.threads = x.to_int(v, 1); }},
        {"kinds",
         [](auto &c, auto &v, auto &x) {
             c.kinds = split_list(v);
             if (c.kinds.empty()) x.fail("empty list");
             for (const auto &k : c.kinds) {
                 try {
                     (void)GramKind::parse(k);
                 } catch (const DomainError &e) {
                     x.fail(e.what());
                 }
             }
         }},
        {"quadrature",
         [](auto &c, auto &v, auto &x) {
             try {
                 (void)gauss::parse_rule(v);
             } catch (const DomainError &e) {
                 x.fail(e.what());
             }
             c.quadrature = v;
         }},
        {"moment_method",
         [](auto &c, auto &v, auto &x) {
             if (v == "auto") c.moment_method = MomentMethod::Auto;
             else if (v == "closed_form") c.moment_method = MomentMethod::ClosedForm;
             else if (v == "quadrature") c.moment_method = MomentMethod::Quadrature;
             else if (v == "plain_quadrature") c.moment_method = MomentMethod::PlainQuadrature;
             else x.fail("unknown moment method '" + v + "'");
         }},
        {"full_threshold", [](auto &c, auto &v, auto &x) { c.full_threshold = x.to_int(v, 1); }},
        {"eta", [](auto &c, auto &v, auto &x) { c.eta = x.to_double(v); }},
        {"steps", [](auto &c, auto &v, auto &x) { c.steps = x.to_int(v, 0); }},
        {"loss",
         [](auto &c, auto &v, auto &x) {
             try {
                 c.loss = parse_loss(v);
             } catch (const DomainError &e) {
                 x.fail(e.what());
             }
         }},
        {"teacher_seed", [](auto &c, auto &v, auto &x) { c.teacher_seed = x.to_u64(v); }},
        {"reference", [](auto &c, auto &v, auto &x) { c.reference = x.to_bool(v); }},
        {"track_spectra", [](auto &c, auto &v, auto &x) { c.track_spectra = x.to_bool(v); }},
        {"out", [](auto &c, auto &v, auto &) { c.out = v; }},
    };
    return m;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string &text) {
    ExperimentConfig c;
    c.source_text = text;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'", line);
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        const Ctx ctx{line, key};
        const auto it = setters().find(key);
        if (it == setters().end()) ctx.fail("unknown key");
        if (!seen.insert(key).second) ctx.fail("duplicate key");
        if (value.empty()) ctx.fail("missing value");
        it->second(c, value, ctx);
    }
    try {
        for (int w : c.widths) c.network(w).validate();
    } catch (const DomainError &e) {
        throw ConfigError(std::string("invalid network: ") + e.what());
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

namespace {

template <class T>
std::string join(const std::vector<T> &v) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

const char *method_name(MomentMethod m) {
    switch (m) {
    case MomentMethod::Auto: return "auto";
    case MomentMethod::ClosedForm: return "closed_form";
    case MomentMethod::Quadrature: return "quadrature";
    case MomentMethod::PlainQuadrature: return "plain_quadrature";
    }
    return "auto";
}

}  // namespace

std::string ExperimentConfig::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "depth = " << depth << '\n';
    os << "width = " << join(widths) << '\n';
    if (!width_ratios.empty()) os << "width_ratios = " << join(width_ratios) << '\n';
    os << "outputs = " << outputs << '\n';
    os << "sigma_w2 = " << sigma_w2 << '\n';
    os << "sigma_b2 = " << sigma_b2 << '\n';
    os << "activation = " << join(activations) << '\n';
    os << "parameterization = " << parameterization_name(parameterization) << '\n';
    os << "samples = " << join(samples) << '\n';
    os << "samples_equal_width = " << (samples_equal_width ? "true" : "false") << '\n';
    os << "trials = " << trials << '\n';
    os << "seed = " << seed << '\n';
    os << "threads = " << threads << '\n';
    os << "kinds = " << join(kinds) << '\n';
    os << "quadrature = " << quadrature << '\n';
    os << "moment_method = " << method_name(moment_method) << '\n';
    os << "full_threshold = " << full_threshold << '\n';
    os << "eta = " << eta << '\n';
    os << "steps = " << steps << '\n';
    os << "loss = " << loss_name(loss) << '\n';
    os << "teacher_seed = " << teacher_seed << '\n';
    os << "reference = " << (reference ? "true" : "false") << '\n';
    os << "track_spectra = " << (track_spectra ? "true" : "false") << '\n';
    os << "out = " << out << '\n';
    return os.str();
}

NetworkConfig ExperimentConfig::network(int width) const {
    NetworkConfig n;
    n.depth = depth;
    n.width = width;
    n.width_ratios = width_ratios;
    n.outputs = outputs;
    n.sigma_w2 = sigma_w2;
    n.sigma_b2 = sigma_b2;
    for (const auto &a : activations) n.activations.push_back(Activation::parse(a));
    return n;
}

MeanFieldOptions ExperimentConfig::meanfield_options() const {
    MeanFieldOptions o;
    o.method = moment_method;
    if (quadrature != "default") o.rule = gauss::parse_rule(quadrature);
    return o;
}

std::vector<GramKind> ExperimentConfig::gram_kinds() const {
    std::vector<GramKind> out;
    for (const auto &k : kinds) out.push_back(GramKind::parse(k));
    return out;
}

std::vector<int> ExperimentConfig::sample_counts(int width) const {
    if (samples_equal_width) return {width};
    return samples;
}

}  // namespace fimspec
