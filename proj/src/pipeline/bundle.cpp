#include "tracediff/pipeline/bundle.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "tracediff/grid_io.hpp"

namespace tracediff {

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const Image2D& image_of(const TraceBundle& b, const std::string& name) {
    if (name == "source") return b.source;
    if (name == "translated") return b.translated;
    if (name == "structure_source") return b.structure_source;
    return b.structure_deformed;
}

Image2D& image_of(TraceBundle& b, const std::string& name) {
    return const_cast<Image2D&>(image_of(static_cast<const TraceBundle&>(b), name));
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

bool BundleDiagnostics::passed() const {
    return forward_inverse.mean < residual_mean_limit && forward_inverse.max < residual_max_limit &&
           inverse_forward.mean < residual_mean_limit && inverse_forward.max < residual_max_limit &&
           positive_jacobian >= jacobian_limit;
}

std::string BundleDiagnostics::describe() const {
    std::ostringstream s;
    s << "residual fwd/inv mean " << forward_inverse.mean << " max " << forward_inverse.max
      << ", inv/fwd mean " << inverse_forward.mean << " max " << inverse_forward.max
      << ", positive jacobian " << positive_jacobian;
    return s.str();
}

BundleDiagnostics diagnose(const TraceBundle& bundle) {
    BundleDiagnostics d;
    d.forward_inverse = composition_residual(bundle.forward_field, bundle.inverse_field);
    d.inverse_forward = composition_residual(bundle.inverse_field, bundle.forward_field);
    d.positive_jacobian = positive_jacobian_fraction(bundle.forward_field);
    return d;
}

std::string format_meta(const std::map<std::string, std::string>& meta) {
    std::string out;
    for (const auto& [k, v] : meta) {
        if (k.find('\n') != std::string::npos || v.find('\n') != std::string::npos || k.find('=') != std::string::npos) {
            throw BundleError("meta entry cannot be written: " + k);
        }
        out += k + " = " + v + "\n";
    }
    return out;
}

std::map<std::string, std::string> read_meta(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw BundleError("cannot read " + path.string());
    std::map<std::string, std::string> meta;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw BundleError(path.string() + ": bad meta line: " + line);
        meta[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return meta;
}

void write_bundle(const std::filesystem::path& dir, const TraceBundle& bundle) {
    const BundleDiagnostics diag = diagnose(bundle);
    if (!diag.passed()) {
        throw BundleError("bundle " + bundle.case_id + " rejected: " + diag.describe());
    }
    std::map<std::string, std::vector<std::uint8_t>> files;
    for (const char* name : kBundleImages) {
        files[std::string(name) + ".pgm"] = encode_pgm(image_of(bundle, name));
    }
    files["forward_field.plsg"] = encode_grid(to_grid(bundle.forward_field.disp));
    files["inverse_field.plsg"] = encode_grid(to_grid(bundle.inverse_field.disp));

    std::map<std::string, std::string> meta = bundle.meta;
    meta["case_id"] = bundle.case_id;
    meta["diag.residual_mean"] = std::to_string(diag.forward_inverse.mean);
    meta["diag.residual_max"] = std::to_string(diag.forward_inverse.max);
    meta["diag.positive_jacobian"] = std::to_string(diag.positive_jacobian);
    for (const auto& [name, bytes] : files) meta["checksum." + name] = hex64(fnv1a64(bytes));
    const std::string text = format_meta(meta);

    const std::filesystem::path tmp = dir.parent_path() / (dir.filename().string() + ".partial");
    std::filesystem::remove_all(tmp);
    std::filesystem::create_directories(tmp);
    for (const auto& [name, bytes] : files) write_file_bytes(tmp / name, bytes);
    write_file_bytes(tmp / "meta.txt", std::vector<std::uint8_t>(text.begin(), text.end()));
    std::filesystem::remove_all(dir);
    std::filesystem::rename(tmp, dir);
}

TraceBundle read_bundle(const std::filesystem::path& dir) {
    TraceBundle b;
    b.meta = read_meta(dir / "meta.txt");
    auto it = b.meta.find("case_id");
    if (it == b.meta.end()) throw BundleError(dir.string() + ": meta has no case_id");
    b.case_id = it->second;

    auto load = [&](const std::string& name) {
        const std::vector<std::uint8_t> bytes = read_file_bytes(dir / name);
        auto sum = b.meta.find("checksum." + name);
        if (sum == b.meta.end()) throw BundleError(dir.string() + ": no checksum for " + name);
        if (sum->second != hex64(fnv1a64(bytes))) throw BundleError(dir.string() + ": checksum mismatch for " + name);
        return bytes;
    };
    for (const char* name : kBundleImages) image_of(b, name) = decode_pgm(load(std::string(name) + ".pgm"));
    b.forward_field.disp = field_from_grid(decode_grid(load("forward_field.plsg")));
    b.inverse_field.disp = field_from_grid(decode_grid(load("inverse_field.plsg")));
    return b;
}

}  // namespace tracediff
