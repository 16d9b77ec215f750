#include "sodsynth/runconfig.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace sodsynth {

namespace {

struct Field {
    std::string name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw FormatError("bad number '" + s + "'");
    return v;
}

long long parse_int(const std::string& s) {
    std::size_t used = 0;
    long long v = std::stoll(s, &used);
    if (used != s.size()) throw FormatError("bad integer '" + s + "'");
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw FormatError("bad boolean '" + s + "' (use true/false)");
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        auto add_double = [&f](const std::string& name, std::function<double&(RunConfig&)> ref) {
            f.push_back({name,
                         [ref](const RunConfig& c) {
                             return fmt_double(ref(const_cast<RunConfig&>(c)));
                         },
                         [ref](RunConfig& c, const std::string& v) { ref(c) = parse_double(v); }});
        };
        auto add_int = [&f](const std::string& name, std::function<int&(RunConfig&)> ref) {
            f.push_back({name,
                         [ref](const RunConfig& c) {
                             return std::to_string(ref(const_cast<RunConfig&>(c)));
                         },
                         [ref](RunConfig& c, const std::string& v) {
                             ref(c) = static_cast<int>(parse_int(v));
                         }});
        };
        auto add_bool = [&f](const std::string& name, std::function<bool&(RunConfig&)> ref) {
            f.push_back({name,
                         [ref](const RunConfig& c) {
                             return ref(const_cast<RunConfig&>(c)) ? std::string("true")
                                                                   : std::string("false");
                         },
                         [ref](RunConfig& c, const std::string& v) { ref(c) = parse_bool(v); }});
        };

        // synth
        add_int("synth.k_min", [](RunConfig& c) -> int& { return c.synth.k_min; });
        add_int("synth.k_max", [](RunConfig& c) -> int& { return c.synth.k_max; });
        add_double("synth.beta1_min", [](RunConfig& c) -> double& { return c.synth.beta1_min; });
        add_double("synth.beta1_max", [](RunConfig& c) -> double& { return c.synth.beta1_max; });
        add_double("synth.beta2_min", [](RunConfig& c) -> double& { return c.synth.beta2_min; });
        add_double("synth.beta2_max", [](RunConfig& c) -> double& { return c.synth.beta2_max; });
        add_int("synth.patch_window", [](RunConfig& c) -> int& { return c.synth.patch_window; });
        add_int("synth.n_variants", [](RunConfig& c) -> int& { return c.synth.n_variants; });
        add_double("synth.feather_sigma_min",
                   [](RunConfig& c) -> double& { return c.synth.feather_sigma_min; });
        add_double("synth.feather_sigma_max",
                   [](RunConfig& c) -> double& { return c.synth.feather_sigma_max; });
        add_double("synth.strategy_weight_1",
                   [](RunConfig& c) -> double& { return c.synth.strategy_weights[0]; });
        add_double("synth.strategy_weight_2",
                   [](RunConfig& c) -> double& { return c.synth.strategy_weights[1]; });
        add_double("synth.strategy_weight_3",
                   [](RunConfig& c) -> double& { return c.synth.strategy_weights[2]; });
        add_int("synth.max_retries", [](RunConfig& c) -> int& { return c.synth.max_retries; });

        // loss
        add_double("loss.alpha1", [](RunConfig& c) -> double& { return c.loss.alpha1; });
        add_double("loss.alpha2", [](RunConfig& c) -> double& { return c.loss.alpha2; });
        add_double("loss.alpha3", [](RunConfig& c) -> double& { return c.loss.alpha3; });
        add_double("loss.gamma", [](RunConfig& c) -> double& { return c.loss.gamma; });
        add_double("loss.sigma_i", [](RunConfig& c) -> double& { return c.loss.sigma_i; });
        add_double("loss.sigma_p", [](RunConfig& c) -> double& { return c.loss.sigma_p; });
        add_int("loss.lsc_radius", [](RunConfig& c) -> int& { return c.loss.lsc_radius; });
        add_double("loss.lsc_downscale",
                   [](RunConfig& c) -> double& { return c.loss.lsc_downscale; });
        add_double("loss.ssc_downscale",
                   [](RunConfig& c) -> double& { return c.loss.ssc_downscale; });
        add_int("loss.ssim_window", [](RunConfig& c) -> int& { return c.loss.ssim_window; });
        add_double("loss.ssim_sigma", [](RunConfig& c) -> double& { return c.loss.ssim_sigma; });
        add_double("loss.ssim_c1", [](RunConfig& c) -> double& { return c.loss.ssim_c1; });
        add_double("loss.ssim_c2", [](RunConfig& c) -> double& { return c.loss.ssim_c2; });
        add_bool("loss.stop_gradient_rgib",
                 [](RunConfig& c) -> bool& { return c.loss.stop_gradient_rgib; });
        // lambda list, comma separated
        f.push_back({"loss.stage_weights",
                     [](const RunConfig& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.loss.stage_weights.size(); ++i) {
                             if (i) s += ",";
                             s += fmt_double(c.loss.stage_weights[i]);
                         }
                         return s;
                     },
                     [](RunConfig& c, const std::string& v) {
                         std::vector<double> weights;
                         std::string item;
                         std::istringstream list(v);
                         while (std::getline(list, item, ','))
                             if (!item.empty()) weights.push_back(parse_double(item));
                         if (weights.empty())
                             throw FormatError("stage_weights needs at least one value");
                         c.loss.stage_weights = std::move(weights);
                     }});

        // train
        add_int("train.epochs", [](RunConfig& c) -> int& { return c.train.epochs; });
        add_double("train.gib_only_fraction",
                   [](RunConfig& c) -> double& { return c.train.gib_only_fraction; });
        add_int("train.batch_size", [](RunConfig& c) -> int& { return c.train.batch_size; });
        add_double("train.momentum", [](RunConfig& c) -> double& { return c.train.momentum; });
        add_double("train.weight_decay",
                   [](RunConfig& c) -> double& { return c.train.weight_decay; });
        add_double("train.lr_min", [](RunConfig& c) -> double& { return c.train.lr_min; });
        add_double("train.lr_max", [](RunConfig& c) -> double& { return c.train.lr_max; });
        add_double("train.lr_peak_fraction",
                   [](RunConfig& c) -> double& { return c.train.lr_peak_fraction; });
        add_int("train.input_size", [](RunConfig& c) -> int& { return c.train.input_size; });
        add_bool("train.augment", [](RunConfig& c) -> bool& { return c.train.augment; });
        add_bool("train.use_bab", [](RunConfig& c) -> bool& { return c.train.use_bab; });
        add_bool("train.use_sc", [](RunConfig& c) -> bool& { return c.train.use_sc; });
        add_double("train.holdout_fraction",
                   [](RunConfig& c) -> double& { return c.train.holdout_fraction; });
        add_int("train.threads", [](RunConfig& c) -> int& { return c.train.threads; });
        f.push_back({"train.seed",
                     [](const RunConfig& c) { return std::to_string(c.train.seed); },
                     [](RunConfig& c, const std::string& v) {
                         c.train.seed = static_cast<std::uint64_t>(parse_int(v));
                     }});
        return f;
    }();
    return table;
}

const Field* find_field(const std::string& name) {
    for (const auto& f : fields())
        if (f.name == name) return &f;
    return nullptr;
}

} // namespace

void RunConfig::validate() const {
    loss.validate();
    train.validate();
    if (synth.k_min > synth.k_max || synth.n_variants < 1)
        throw ParameterError("RunConfig: synth ranges invalid");
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig config;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        // trim
        const auto begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        const auto end = line.find_last_not_of(" \t\r");
        line = line.substr(begin, end - begin + 1);

        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError(origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + line + "'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t");
            return s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const Field* field = find_field(key);
        if (!field)
            throw FormatError(origin + ":" + std::to_string(line_no) + ": unknown key '" + key +
                              "'");
        try {
            field->set(config, value);
        } catch (const FormatError& e) {
            throw FormatError(origin + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const std::exception& e) {
            throw FormatError(origin + ":" + std::to_string(line_no) + ": bad value '" + value +
                              "' for " + key);
        }
    }
    return config;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text, path);
}

void apply_override(RunConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw UsageError("override '" + assignment + "' must look like key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    const Field* field = find_field(key);
    if (!field) throw UsageError("unknown config key '" + key + "'");
    field->set(config, value);
}

std::string echo_config(const RunConfig& config) {
    std::string out;
    for (const auto& f : fields()) out += f.name + " = " + f.get(config) + "\n";
    return out;
}

} // namespace sodsynth
