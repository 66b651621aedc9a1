#include "cospeech/model/checkpoint.hpp"

#include <cstdio>
#include <sstream>

#include "cospeech/errors.hpp"
#include "cospeech/io/container.hpp"
#include "cospeech/rng.hpp"

namespace cospeech {

const std::string& Checkpoint::get(const std::string& key) const {
    for (const auto& [k, v] : config)
        if (k == key) return v;
    throw FormatError("checkpoint has no config key '" + key + "'");
}

int Checkpoint::get_int(const std::string& key) const { return io::parse_count(get(key), key); }
double Checkpoint::get_real(const std::string& key) const { return io::parse_real(get(key), key); }

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t save_checkpoint(const std::filesystem::path& path, const ConfigPairs& config, const ParameterSet& params) {
    std::string manifest = "CKPT1\n[config]\n";
    for (const auto& [k, v] : config) {
        if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
            throw FormatError("config entry '" + k + "' cannot be stored");
        manifest += k + "=" + v + "\n";
    }
    manifest += "[tensors]\n";
    std::string payload;
    for (const auto& p : params) {
        if (p.name.find_first_of(" \n") != std::string::npos) throw FormatError("tensor name '" + p.name + "'");
        manifest += p.name + " " + std::to_string(p.value.rows()) + " " + std::to_string(p.value.cols()) + " " +
                    std::to_string(payload.size()) + "\n";
        io::append_f32_le(payload, io::to_f32(p.value));
    }
    manifest += "[end]\n";
    const std::uint64_t h = fnv1a64(payload.data(), payload.size());
    io::write_file(path, manifest + payload);
    return h;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path);
    const std::string where = path.string() + ": ";
    std::size_t pos = 0;
    auto next_line = [&]() {
        const std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string::npos) throw FormatError(where + "truncated manifest");
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };
    if (next_line() != "CKPT1") throw FormatError(where + "missing CKPT1 magic");
    if (next_line() != "[config]") throw FormatError(where + "missing [config] section");
    Checkpoint ck;
    std::string line;
    while ((line = next_line()) != "[tensors]") {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError(where + "bad config line '" + line + "'");
        ck.config.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    struct Entry {
        std::string name;
        int rows, cols;
        std::size_t offset;
    };
    std::vector<Entry> entries;
    while ((line = next_line()) != "[end]") {
        std::istringstream in(line);
        Entry e;
        if (!(in >> e.name >> e.rows >> e.cols >> e.offset) || e.rows < 0 || e.cols < 0)
            throw FormatError(where + "bad tensor line '" + line + "'");
        entries.push_back(e);
    }
    const std::size_t base = pos;
    std::size_t expected = 0;
    for (const auto& e : entries) {
        if (e.offset != expected) throw FormatError(where + "tensor " + e.name + " has a non-contiguous offset");
        expected += static_cast<std::size_t>(e.rows) * e.cols * sizeof(float);
    }
    if (bytes.size() - base != expected)
        throw FormatError(where + "payload is " + std::to_string(bytes.size() - base) + " bytes, manifest implies " +
                          std::to_string(expected));
    for (const auto& e : entries) {
        const int idx = ck.params.add(e.name, e.rows, e.cols);
        const auto f = io::parse_f32_le(bytes, base + e.offset, static_cast<std::size_t>(e.rows) * e.cols);
        ck.params.at(idx).value = io::from_f32(e.rows, e.cols, f);
    }
    ck.payload_hash = fnv1a64(bytes.data() + base, bytes.size() - base);
    return ck;
}

void assign_parameters(ParameterSet& dst, const ParameterSet& src, const std::string& what) {
    if (dst.size() != src.size())
        throw FormatError(what + ": expected " + std::to_string(dst.size()) + " tensors, found " +
                          std::to_string(src.size()));
    for (auto& p : dst) {
        if (!src.contains(p.name)) throw FormatError(what + ": missing tensor " + p.name);
        const auto& s = src.at(src.index_of(p.name));
        if (!s.value.same_shape(p.value))
            throw FormatError(what + ": tensor " + p.name + " has shape " + std::to_string(s.value.rows()) + "x" +
                              std::to_string(s.value.cols()));
        p.value = s.value;
    }
}

}  // namespace cospeech
