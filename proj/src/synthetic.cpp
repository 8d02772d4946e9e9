#include "cooc_atlas/synthetic.hpp"

#include "cooc_atlas/errors.hpp"
#include "cooc_atlas/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace cooc_atlas {

namespace {

double bump(double d2, double width) {
    return std::exp(-d2 / (2 * width * width));
}

std::string item_name(char prefix, int i, int n) {
    const int width = static_cast<int>(std::to_string(n - 1).size());
    std::string num = std::to_string(i);
    return std::string(1, prefix) + std::string(width - num.size(), '0') + num;
}

std::vector<std::string> item_names(char prefix, int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) {
        out.push_back(item_name(prefix, i, n));
    }
    return out;
}

int bernoulli_count(Rng& rng, double p, int samples) {
    int c = 0;
    for (int s = 0; s < samples; ++s) {
        c += rng.uniform() < p;
    }
    return c;
}

std::string join(const std::vector<double>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) {
            out += ',';
        }
        out += format_double(xs[i]);
    }
    return out;
}

std::vector<double> split_doubles(const std::string& s) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start < s.size()) {
        auto end = s.find(',', start);
        if (end == std::string::npos) {
            end = s.size();
        }
        double x = 0;
        auto res = std::from_chars(s.data() + start, s.data() + end, x);
        if (res.ec != std::errc() || res.ptr != s.data() + end) {
            throw DataError("sidecar: malformed number list");
        }
        out.push_back(x);
        start = end + 1;
    }
    return out;
}

}

double SyntheticParams::f(double u, double v) const {
    double val = baseline;
    val += ridge_amplitude * bump((u - v) * (u - v), ridge_width);
    val += spot_amplitude * bump((u - spot_u) * (u - spot_u) + (v - spot_v) * (v - spot_v), spot_width);
    if (v >= band_lo && v <= band_hi) {
        val += band_amplitude;
    }
    return std::min(1.0, val);
}

double SyntheticParams3::f(double u, double v, double w) const {
    double val = baseline;
    val += ridge_amplitude * bump((u - v) * (u - v) + (v - w) * (v - w), ridge_width);
    val += spot_amplitude * bump((u - spot_u) * (u - spot_u) + (v - spot_v) * (v - spot_v) + (w - spot_w) * (w - spot_w), spot_width);
    return std::min(1.0, val);
}

SyntheticData generate_synthetic(int n_a, int n_b, std::uint64_t seed, int samples, const SyntheticParams& params) {
    if (n_a < 10 || n_b < 10) {
        throw UsageError("synthetic data needs at least 10 items per domain");
    }
    if (samples < 1) {
        throw UsageError("synthetic data needs samples >= 1");
    }
    SyntheticData out;
    out.params = params;
    out.seed = seed;
    out.samples = samples;
    Rng rng(seed);
    for (int i = 0; i < n_a; ++i) {
        out.latent_a.push_back(rng.uniform());
    }
    for (int j = 0; j < n_b; ++j) {
        out.latent_b.push_back(rng.uniform());
    }
    std::vector<CoocEntry> entries;
    for (int i = 0; i < n_a; ++i) {
        for (int j = 0; j < n_b; ++j) {
            const int c = bernoulli_count(rng, params.f(out.latent_a[i], out.latent_b[j]), samples);
            if (c > 0) {
                entries.push_back({static_cast<std::uint64_t>(i) * n_b + j, static_cast<double>(c)});
            }
        }
    }
    std::vector<DomainSpec> domains{DomainSpec("A", item_names('a', n_a)), DomainSpec("B", item_names('b', n_b))};
    out.table = CoocTable(std::move(domains), std::move(entries));
    return out;
}

SyntheticData3 generate_synthetic3(int n_a, int n_b, int n_c, std::uint64_t seed, int samples, const SyntheticParams3& params) {
    if (n_a < 10 || n_b < 10 || n_c < 10) {
        throw UsageError("synthetic data needs at least 10 items per domain");
    }
    if (samples < 1) {
        throw UsageError("synthetic data needs samples >= 1");
    }
    SyntheticData3 out;
    out.params = params;
    out.seed = seed;
    out.samples = samples;
    Rng rng(seed);
    for (int i = 0; i < n_a; ++i) {
        out.latent_a.push_back(rng.uniform());
    }
    for (int j = 0; j < n_b; ++j) {
        out.latent_b.push_back(rng.uniform());
    }
    for (int k = 0; k < n_c; ++k) {
        out.latent_c.push_back(rng.uniform());
    }
    std::vector<CoocEntry> entries;
    std::uint64_t key = 0;
    for (int i = 0; i < n_a; ++i) {
        for (int j = 0; j < n_b; ++j) {
            for (int k = 0; k < n_c; ++k, ++key) {
                const int c = bernoulli_count(rng, params.f(out.latent_a[i], out.latent_b[j], out.latent_c[k]), samples);
                if (c > 0) {
                    entries.push_back({key, static_cast<double>(c)});
                }
            }
        }
    }
    std::vector<DomainSpec> domains{DomainSpec("A", item_names('a', n_a)), DomainSpec("B", item_names('b', n_b)),
                                    DomainSpec("C", item_names('c', n_c))};
    out.table = CoocTable(std::move(domains), std::move(entries));
    return out;
}

std::string format_sidecar(const SyntheticData& data) {
    const auto& p = data.params;
    std::ostringstream os;
    os << "# cooc-atlas synthetic fixture, format 1\n";
    os << "order=2\n";
    os << "seed=" << data.seed << "\n";
    os << "samples=" << data.samples << "\n";
    os << "n_a=" << data.latent_a.size() << "\n";
    os << "n_b=" << data.latent_b.size() << "\n";
    os << "baseline=" << format_double(p.baseline) << "\n";
    os << "ridge_amplitude=" << format_double(p.ridge_amplitude) << "\n";
    os << "ridge_width=" << format_double(p.ridge_width) << "\n";
    os << "spot_amplitude=" << format_double(p.spot_amplitude) << "\n";
    os << "spot_u=" << format_double(p.spot_u) << "\n";
    os << "spot_v=" << format_double(p.spot_v) << "\n";
    os << "spot_width=" << format_double(p.spot_width) << "\n";
    os << "band_amplitude=" << format_double(p.band_amplitude) << "\n";
    os << "band_lo=" << format_double(p.band_lo) << "\n";
    os << "band_hi=" << format_double(p.band_hi) << "\n";
    os << "latent_a=" << join(data.latent_a) << "\n";
    os << "latent_b=" << join(data.latent_b) << "\n";
    return os.str();
}

std::string format_sidecar(const SyntheticData3& data) {
    const auto& p = data.params;
    std::ostringstream os;
    os << "# cooc-atlas synthetic fixture, format 1\n";
    os << "order=3\n";
    os << "seed=" << data.seed << "\n";
    os << "samples=" << data.samples << "\n";
    os << "n_a=" << data.latent_a.size() << "\n";
    os << "n_b=" << data.latent_b.size() << "\n";
    os << "n_c=" << data.latent_c.size() << "\n";
    os << "baseline=" << format_double(p.baseline) << "\n";
    os << "ridge_amplitude=" << format_double(p.ridge_amplitude) << "\n";
    os << "ridge_width=" << format_double(p.ridge_width) << "\n";
    os << "spot_amplitude=" << format_double(p.spot_amplitude) << "\n";
    os << "spot_u=" << format_double(p.spot_u) << "\n";
    os << "spot_v=" << format_double(p.spot_v) << "\n";
    os << "spot_w=" << format_double(p.spot_w) << "\n";
    os << "spot_width=" << format_double(p.spot_width) << "\n";
    os << "latent_a=" << join(data.latent_a) << "\n";
    os << "latent_b=" << join(data.latent_b) << "\n";
    os << "latent_c=" << join(data.latent_c) << "\n";
    return os.str();
}

SyntheticData read_synthetic(const std::string& table_path, const std::string& sidecar_path) {
    std::map<std::string, std::string> kv;
    std::istringstream in(read_file(sidecar_path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw DataError(sidecar_path + ": expected key=value");
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const std::string& k) -> const std::string& {
        auto it = kv.find(k);
        if (it == kv.end()) {
            throw DataError(sidecar_path + ": missing key " + k);
        }
        return it->second;
    };
    auto num = [&](const std::string& k) { return split_doubles(get(k)).at(0); };
    if (get("order") != "2") {
        throw DataError(sidecar_path + ": not a two-domain fixture");
    }
    SyntheticData out;
    out.table = load_cooc_table(table_path, 2);
    out.seed = std::stoull(get("seed"));
    out.samples = std::stoi(get("samples"));
    auto& p = out.params;
    p.baseline = num("baseline");
    p.ridge_amplitude = num("ridge_amplitude");
    p.ridge_width = num("ridge_width");
    p.spot_amplitude = num("spot_amplitude");
    p.spot_u = num("spot_u");
    p.spot_v = num("spot_v");
    p.spot_width = num("spot_width");
    p.band_amplitude = num("band_amplitude");
    p.band_lo = num("band_lo");
    p.band_hi = num("band_hi");
    out.latent_a = split_doubles(get("latent_a"));
    out.latent_b = split_doubles(get("latent_b"));
    if (out.latent_a.size() != out.table.shape()[0] || out.latent_b.size() != out.table.shape()[1]) {
        throw DataError(sidecar_path + ": latent positions do not match the table");
    }
    return out;
}

}
