#include "tracediff/pipeline/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>
#include <vector>

#include "tracediff/grid_io.hpp"

namespace tracediff {

namespace {

std::string fmt(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    auto r = std::from_chars(value.data(), value.data() + value.size(), out);
    if (r.ec != std::errc() || r.ptr != value.data() + value.size()) {
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + value + "'");
}

struct Field {
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&, const std::string&)> put;
};

template <class T, class M>
Field number(M member) {
    return {[member](const PipelineConfig& c) {
                if constexpr (std::is_floating_point_v<T>) {
                    return fmt(c.*member);
                } else {
                    return std::to_string(c.*member);
                }
            },
            [member](PipelineConfig& c, const std::string& k, const std::string& v) {
                c.*member = parse_number<T>(k, v);
            }};
}

template <class T, class M>
Field net_number(NetConfig PipelineConfig::*net, M member) {
    return {[net, member](const PipelineConfig& c) {
                if constexpr (std::is_floating_point_v<T>) {
                    return fmt((c.*net).*member);
                } else {
                    return std::to_string((c.*net).*member);
                }
            },
            [net, member](PipelineConfig& c, const std::string& k, const std::string& v) {
                (c.*net).*member = parse_number<T>(k, v);
            }};
}

void add_net_fields(std::vector<std::pair<std::string, Field>>& f, const std::string& prefix,
                    NetConfig PipelineConfig::*net) {
    f.push_back({prefix + ".base_channels", net_number<int>(net, &NetConfig::base_channels)});
    f.push_back({prefix + ".depth", net_number<int>(net, &NetConfig::depth)});
    f.push_back({prefix + ".gamma_embedding_dim", net_number<int>(net, &NetConfig::gamma_embedding_dim)});
    f.push_back({prefix + ".feature_channels", net_number<int>(net, &NetConfig::feature_channels)});
    f.push_back({prefix + ".velocity_scale", net_number<double>(net, &NetConfig::velocity_scale)});
}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = [] {
        using C = PipelineConfig;
        std::vector<std::pair<std::string, Field>> f;
        f.push_back({"seed", number<std::uint64_t>(&C::seed)});
        f.push_back({"image_size", number<int>(&C::image_size)});
        f.push_back({"n_per_domain", number<int>(&C::n_per_domain)});
        f.push_back({"holdout_fraction", number<double>(&C::holdout_fraction)});
        f.push_back({"k_steps", number<int>(&C::k_steps)});
        f.push_back({"beta_start", number<double>(&C::beta_start)});
        f.push_back({"beta_end", number<double>(&C::beta_end)});
        f.push_back({"infer_stride", number<int>(&C::infer_stride)});
        f.push_back({"n_samples", number<int>(&C::n_samples)});
        f.push_back({"reverse_noise",
                     {[](const C& c) { return std::string(c.reverse_noise == ReverseNoise::Beta ? "beta" : "posterior"); },
                      [](C& c, const std::string& k, const std::string& v) {
                          if (v == "beta") {
                              c.reverse_noise = ReverseNoise::Beta;
                          } else if (v == "posterior") {
                              c.reverse_noise = ReverseNoise::Posterior;
                          } else {
                              throw ConfigError("config key '" + k + "': expected beta|posterior");
                          }
                      }}});
        add_net_fields(f, "denoiser", &C::denoiser_net);
        add_net_fields(f, "regnet", &C::regnet_net);
        f.push_back({"diffusion_steps", number<int>(&C::diffusion_steps)});
        f.push_back({"batch_size", number<int>(&C::batch_size)});
        f.push_back({"diffusion_lr", number<double>(&C::diffusion_lr)});
        f.push_back({"diffusion_warmup", number<long>(&C::diffusion_warmup)});
        f.push_back({"deform_steps", number<int>(&C::deform_steps)});
        f.push_back({"deform_lr", number<double>(&C::deform_lr)});
        f.push_back({"deform_warmup", number<long>(&C::deform_warmup)});
        f.push_back({"lambda1", number<double>(&C::lambda1)});
        f.push_back({"pairing",
                     {[](const C& c) { return std::string(c.pairing == Pairing::Random ? "random" : "fixed"); },
                      [](C& c, const std::string& k, const std::string& v) {
                          if (v == "random") {
                              c.pairing = Pairing::Random;
                          } else if (v == "fixed") {
                              c.pairing = Pairing::Fixed;
                          } else {
                              throw ConfigError("config key '" + k + "': expected random|fixed");
                          }
                      }}});
        f.push_back({"use_eps_hat",
                     {[](const C& c) { return std::string(c.use_eps_hat ? "true" : "false"); },
                      [](C& c, const std::string& k, const std::string& v) { c.use_eps_hat = parse_bool(k, v); }}});
        f.push_back({"integration_steps", number<int>(&C::integration_steps)});
        f.push_back({"parzen.bins",
                     {[](const C& c) { return std::to_string(c.parzen.bins); },
                      [](C& c, const std::string& k, const std::string& v) { c.parzen.bins = parse_number<int>(k, v); }}});
        f.push_back({"n_clusters", number<int>(&C::n_clusters)});
        f.push_back({"segmenter",
                     {[](const C& c) { return std::string(c.segmenter == SegmenterKind::Threshold ? "threshold" : "net"); },
                      [](C& c, const std::string& k, const std::string& v) {
                          if (v == "threshold") {
                              c.segmenter = SegmenterKind::Threshold;
                          } else if (v == "net") {
                              c.segmenter = SegmenterKind::Net;
                          } else {
                              throw ConfigError("config key '" + k + "': expected threshold|net");
                          }
                      }}});
        return f;
    }();
    return table;
}

}  // namespace

long PipelineConfig::effective_diffusion_warmup() const {
    return std::min<long>(diffusion_warmup, diffusion_steps / 10);
}

NoiseSchedule PipelineConfig::training_schedule() const {
    return make_linear_schedule(k_steps, beta_start, beta_end);
}

NoiseSchedule PipelineConfig::inference_schedule() const {
    return training_schedule().strided(infer_stride);
}

void PipelineConfig::validate() const {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("invalid config: " + what);
    };
    need(image_size >= 8 && image_size % (1 << (std::max(denoiser_net.depth, regnet_net.depth) - 1)) == 0,
         "image_size must be >= 8 and divisible by 2^(depth-1)");
    need(n_per_domain >= 1, "n_per_domain must be >= 1");
    need(holdout_fraction >= 0.0 && holdout_fraction < 1.0, "holdout_fraction must be in [0, 1)");
    need(k_steps >= 1, "k_steps must be >= 1");
    need(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, "need 0 < beta_start <= beta_end < 1");
    need(infer_stride >= 1 && k_steps % infer_stride == 0, "infer_stride must divide k_steps");
    need(n_samples >= 1, "n_samples must be >= 1");
    need(batch_size >= 1, "batch_size must be >= 1");
    need(diffusion_steps >= 0 && deform_steps >= 0, "step counts must be >= 0");
    need(diffusion_lr > 0.0 && deform_lr > 0.0, "learning rates must be positive");
    need(lambda1 >= 0.0, "lambda1 must be >= 0");
    need(integration_steps >= 1, "integration_steps must be >= 1");
    need(n_clusters >= 2 && n_clusters <= 4, "n_clusters must be in [2, 4]");
    denoiser_net.validate();
    regnet_net.validate();
    parzen.validate();
}

std::map<std::string, std::string> PipelineConfig::to_map() const {
    std::map<std::string, std::string> out;
    for (const auto& [key, field] : fields()) out[key] = field.get(*this);
    return out;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
    for (const auto& [k, field] : fields()) {
        if (k == key) {
            field.put(*this, key, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    return parse_config(std::string(bytes.begin(), bytes.end()));
}

std::string format_config(const PipelineConfig& cfg) {
    std::string out;
    for (const auto& [key, field] : fields()) out += key + " = " + field.get(cfg) + "\n";
    return out;
}

}  // namespace tracediff
