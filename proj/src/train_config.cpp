#include "cooc_atlas/errors.hpp"
#include "cooc_atlas/trainer.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace cooc_atlas {

namespace {

double parse_real(const std::string& key, const std::string& v) {
    double x = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), x);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(x)) {
        throw UsageError("config: " + key + " expects a number, got '" + v + "'");
    }
    return x;
}

long long parse_int(const std::string& key, const std::string& v) {
    long long x = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), x);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw UsageError("config: " + key + " expects an integer, got '" + v + "'");
    }
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") {
        return true;
    }
    if (v == "false" || v == "0") {
        return false;
    }
    throw UsageError("config: " + key + " expects true or false, got '" + v + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}

int TrainConfig::dim(int domain) const {
    if (dims.size() == 1) {
        return dims[0];
    }
    return dims.at(static_cast<std::size_t>(domain));
}

double TrainConfig::noise_amplitude(int epoch) const {
    if (init != InitMethod::Gaussian) {
        return 0;
    }
    const int T = total_iters();
    return noise_frac * sigma.floor() * (1.0 - static_cast<double>(epoch) / T);
}

void TrainConfig::validate() const {
    if (dims.empty() || dims.size() > 3) {
        throw UsageError("config: dims needs 1 to 3 entries");
    }
    for (int d : dims) {
        if (d < 1) {
            throw UsageError("config: dimensions must be >= 1");
        }
    }
    if (!(lambda >= 0)) {
        throw UsageError("config: lambda must be >= 0");
    }
    pu.validate();
    if (diffusion_steps < 1) {
        throw UsageError("config: diffusion_steps must be >= 1");
    }
    if (!(init_scale_frac >= 0.01 && init_scale_frac <= 0.1)) {
        throw UsageError("config: init_scale_frac must lie in [0.01, 0.1]");
    }
    if (!(sigma.initial > 0)) {
        throw UsageError("config: sigma_initial must be positive");
    }
    if (!(sigma.fraction > 0)) {
        throw UsageError("config: sigma_fraction must be positive");
    }
    if (warmup_iters < 0 || main_iters < 0 || total_iters() < 1) {
        throw UsageError("config: iteration counts must be >= 0 with at least one epoch");
    }
    if (!(step_size > 0)) {
        throw UsageError("config: step_size must be positive");
    }
    if (!(noise_frac >= 0)) {
        throw UsageError("config: noise_frac must be >= 0");
    }
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& [k, v] : config_to_kv(TrainConfig{})) {
        out.push_back(k);
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> config_to_kv(const TrainConfig& cfg) {
    std::string dims;
    for (std::size_t i = 0; i < cfg.dims.size(); ++i) {
        dims += (i ? "," : "") + std::to_string(cfg.dims[i]);
    }
    return {
        {"dims", dims},
        {"lambda", format_double(cfg.lambda)},
        {"reg", cfg.reg == RegNorm::L2 ? "l2" : "linf"},
        {"alpha", format_double(cfg.pu.alpha)},
        {"beta", format_double(cfg.pu.beta)},
        {"diffusion_steps", std::to_string(cfg.diffusion_steps)},
        {"use_c", cfg.use_c ? "true" : "false"},
        {"init", cfg.init == InitMethod::Pca ? "pca" : "gaussian"},
        {"init_scale_frac", format_double(cfg.init_scale_frac)},
        {"sigma_policy", cfg.sigma.kind == SigmaPolicy::Kind::Fixed ? "fixed" : "variance_fraction"},
        {"sigma_initial", format_double(cfg.sigma.initial)},
        {"sigma_fraction", format_double(cfg.sigma.fraction)},
        {"warmup_iters", std::to_string(cfg.warmup_iters)},
        {"main_iters", std::to_string(cfg.main_iters)},
        {"step_size", format_double(cfg.step_size)},
        {"noise_frac", format_double(cfg.noise_frac)},
        {"seed", std::to_string(cfg.seed)},
        {"log_gap", cfg.log_gap ? "true" : "false"},
    };
}

void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "dims") {
        cfg.dims.clear();
        std::stringstream ss(value);
        std::string part;
        while (std::getline(ss, part, ',')) {
            cfg.dims.push_back(static_cast<int>(parse_int(key, trim(part))));
        }
    } else if (key == "lambda") {
        cfg.lambda = parse_real(key, value);
    } else if (key == "reg") {
        if (value == "l2") {
            cfg.reg = RegNorm::L2;
        } else if (value == "linf") {
            cfg.reg = RegNorm::Linf;
        } else {
            throw UsageError("config: reg must be l2 or linf");
        }
    } else if (key == "alpha") {
        cfg.pu.alpha = parse_real(key, value);
    } else if (key == "beta") {
        cfg.pu.beta = parse_real(key, value);
    } else if (key == "diffusion_steps") {
        cfg.diffusion_steps = static_cast<int>(parse_int(key, value));
    } else if (key == "use_c") {
        cfg.use_c = parse_bool(key, value);
    } else if (key == "init") {
        if (value == "pca") {
            cfg.init = InitMethod::Pca;
        } else if (value == "gaussian") {
            cfg.init = InitMethod::Gaussian;
        } else {
            throw UsageError("config: init must be pca or gaussian");
        }
    } else if (key == "init_scale_frac") {
        cfg.init_scale_frac = parse_real(key, value);
    } else if (key == "sigma_policy") {
        if (value == "fixed") {
            cfg.sigma.kind = SigmaPolicy::Kind::Fixed;
        } else if (value == "variance_fraction") {
            cfg.sigma.kind = SigmaPolicy::Kind::VarianceFraction;
        } else {
            throw UsageError("config: sigma_policy must be fixed or variance_fraction");
        }
    } else if (key == "sigma_initial") {
        cfg.sigma.initial = parse_real(key, value);
    } else if (key == "sigma_fraction") {
        cfg.sigma.fraction = parse_real(key, value);
    } else if (key == "warmup_iters") {
        cfg.warmup_iters = static_cast<int>(parse_int(key, value));
    } else if (key == "main_iters") {
        cfg.main_iters = static_cast<int>(parse_int(key, value));
    } else if (key == "step_size") {
        cfg.step_size = parse_real(key, value);
    } else if (key == "noise_frac") {
        cfg.noise_frac = parse_real(key, value);
    } else if (key == "seed") {
        const auto s = parse_int(key, value);
        if (s < 0) {
            throw UsageError("config: seed must be >= 0");
        }
        cfg.seed = static_cast<std::uint64_t>(s);
    } else if (key == "log_gap") {
        cfg.log_gap = parse_bool(key, value);
    } else {
        throw UsageError("config: unknown key '" + key + "'");
    }
}

TrainConfig config_from_kv(const std::vector<std::pair<std::string, std::string>>& kv, TrainConfig base) {
    for (const auto& [k, v] : kv) {
        apply_config_kv(base, k, v);
    }
    return base;
}

std::string format_config(const TrainConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : config_to_kv(cfg)) {
        out += k + "=" + v + "\n";
    }
    return out;
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
        }
        apply_config_kv(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

}
