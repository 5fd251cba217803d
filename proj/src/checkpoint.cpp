#include "tracediff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "tracediff/grid_io.hpp"

namespace tracediff {

namespace {

constexpr char kMagic[4] = {'P', 'L', 'S', 'C'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes = 8) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p, int bytes = 8) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void check_meta_text(const std::string& s, const char* what) {
    if (s.find('\n') != std::string::npos) {
        throw CheckpointError(std::string("checkpoint ") + what + " contains a newline: " + s);
    }
}

struct Entry {
    std::string name;
    ad::Shape shape;
    std::uint64_t offset = 0;
    std::uint64_t count = 0;
};

void add_tensors(const std::string& prefix, const std::map<std::string, ad::Tensor>& tensors,
                 std::ostringstream& header, std::vector<double>& payload) {
    for (const auto& [name, t] : tensors) {
        check_meta_text(name, "tensor name");
        header << "tensor " << prefix << name << ' ' << t.shape.channels << ' ' << t.shape.height << ' '
               << t.shape.width << ' ' << payload.size() << ' ' << t.data.size() << '\n';
        payload.insert(payload.end(), t.data.begin(), t.data.end());
    }
}

std::map<std::string, ad::Tensor> moments(const ParamMap& m, const ModelParams& params) {
    std::map<std::string, ad::Tensor> out;
    for (const auto& [name, v] : m) out.emplace(name, ad::Tensor(params.at(name).shape, v));
    return out;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::ostringstream header;
    std::vector<double> payload;
    add_tensors("param/", ckpt.params.tensors, header, payload);
    add_tensors("adam_m/", moments(ckpt.adam.m, ckpt.params), header, payload);
    add_tensors("adam_v/", moments(ckpt.adam.v, ckpt.params), header, payload);

    std::map<std::string, std::string> meta = ckpt.meta;
    meta["kind"] = ckpt.kind;
    meta["init_seed"] = std::to_string(ckpt.params.init_seed);
    meta["adam_step"] = std::to_string(ckpt.adam.step);
    meta["net.base_channels"] = std::to_string(ckpt.net.base_channels);
    meta["net.depth"] = std::to_string(ckpt.net.depth);
    meta["net.gamma_embedding_dim"] = std::to_string(ckpt.net.gamma_embedding_dim);
    meta["net.feature_channels"] = std::to_string(ckpt.net.feature_channels);
    std::ostringstream vs;
    vs.precision(17);
    vs << ckpt.net.velocity_scale;
    meta["net.velocity_scale"] = vs.str();
    for (const auto& [k, v] : meta) {
        check_meta_text(k, "meta key");
        check_meta_text(v, "meta value");
        if (k.find(' ') != std::string::npos) throw CheckpointError("checkpoint meta key has a space: " + k);
        header << "meta " << k << ' ' << v << '\n';
    }

    const std::string text = header.str();
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_u64(out, kCheckpointVersion, 4);
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (double d : payload) put_u64(out, std::bit_cast<std::uint64_t>(d));
    return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw CheckpointError("not a checkpoint (bad magic)");
    }
    const auto version = static_cast<std::uint32_t>(get_u64(bytes.data() + 4, 4));
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint64_t text_len = get_u64(bytes.data() + 8);
    if (text_len > bytes.size() - 16) throw CheckpointError("checkpoint header truncated");
    const std::string text(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(text_len));
    const std::size_t payload_start = 16 + text_len;
    if ((bytes.size() - payload_start) % 8 != 0) throw CheckpointError("checkpoint payload misaligned");
    const std::uint64_t n_doubles = (bytes.size() - payload_start) / 8;

    Checkpoint ckpt;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "tensor") {
            Entry e;
            ls >> e.name >> e.shape.channels >> e.shape.height >> e.shape.width >> e.offset >> e.count;
            if (!ls || e.count != e.shape.size() || e.offset + e.count > n_doubles) {
                throw CheckpointError("bad tensor entry: " + line);
            }
            std::vector<double> data(e.count);
            for (std::uint64_t i = 0; i < e.count; ++i) {
                data[i] = std::bit_cast<double>(get_u64(bytes.data() + payload_start + 8 * (e.offset + i)));
            }
            const auto slash = e.name.find('/');
            const std::string group = e.name.substr(0, slash);
            const std::string name = e.name.substr(slash + 1);
            if (group == "param") {
                ckpt.params.tensors.emplace(name, ad::Tensor(e.shape, std::move(data)));
            } else if (group == "adam_m") {
                ckpt.adam.m[name] = std::move(data);
            } else if (group == "adam_v") {
                ckpt.adam.v[name] = std::move(data);
            } else {
                throw CheckpointError("unknown tensor group in " + e.name);
            }
        } else if (tag == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            ckpt.meta[key] = value;
        } else if (!tag.empty()) {
            throw CheckpointError("unknown checkpoint header line: " + line);
        }
    }

    auto take = [&](const std::string& key) {
        auto it = ckpt.meta.find(key);
        if (it == ckpt.meta.end()) throw CheckpointError("checkpoint missing meta " + key);
        std::string v = it->second;
        ckpt.meta.erase(it);
        return v;
    };
    try {
        ckpt.kind = take("kind");
        ckpt.params.init_seed = std::stoull(take("init_seed"));
        ckpt.adam.step = std::stol(take("adam_step"));
        ckpt.net.base_channels = std::stoi(take("net.base_channels"));
        ckpt.net.depth = std::stoi(take("net.depth"));
        ckpt.net.gamma_embedding_dim = std::stoi(take("net.gamma_embedding_dim"));
        ckpt.net.feature_channels = std::stoi(take("net.feature_channels"));
        ckpt.net.velocity_scale = std::stod(take("net.velocity_scale"));
    } catch (const std::logic_error& e) {
        throw CheckpointError(std::string("bad checkpoint meta value: ") + e.what());
    }
    return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file_bytes(path));
}

}  // namespace tracediff
