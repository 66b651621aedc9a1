#include "cospeech/io/container.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cospeech/errors.hpp"

namespace cospeech::io {

static_assert(std::endian::native == std::endian::little, "float payloads are written in host order");

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write " + path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError("short write to " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

void append_f32_le(std::string& out, const std::vector<float>& v) {
    const std::size_t at = out.size();
    out.resize(at + v.size() * sizeof(float));
    if (!v.empty()) std::memcpy(out.data() + at, v.data(), v.size() * sizeof(float));
}

std::vector<float> parse_f32_le(const std::string& bytes, std::size_t offset, std::size_t count) {
    if (offset > bytes.size() || (bytes.size() - offset) / sizeof(float) < count)
        throw FormatError("payload truncated");
    std::vector<float> v(count);
    if (count) std::memcpy(v.data(), bytes.data() + offset, count * sizeof(float));
    return v;
}

std::vector<float> to_f32(const Tensor& t) {
    std::vector<float> v(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) v[i] = static_cast<float>(t[i]);
    return v;
}

Tensor from_f32(int rows, int cols, const std::vector<float>& v, std::size_t offset) {
    Tensor t(rows, cols);
    if (offset + t.size() > v.size()) throw FormatError("payload truncated");
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = v[offset + i];
    return t;
}

void write_container(const std::filesystem::path& path, const Container& c) {
    std::string bytes;
    for (const auto& line : c.header) {
        if (line.find('\n') != std::string::npos) throw FormatError("header field contains a newline");
        bytes += line;
        bytes += '\n';
    }
    append_f32_le(bytes, c.payload);
    write_file(path, bytes);
}

Container read_container(const std::filesystem::path& path, const std::string& magic, int header_lines) {
    const std::string bytes = read_file(path);
    Container c;
    std::size_t pos = 0;
    for (int i = 0; i < header_lines; ++i) {
        const std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string::npos) throw FormatError(path.string() + ": truncated header");
        c.header.push_back(bytes.substr(pos, nl - pos));
        pos = nl + 1;
    }
    if (c.header.front() != magic) throw FormatError(path.string() + ": expected magic " + magic);
    const std::size_t rest = bytes.size() - pos;
    if (rest % sizeof(float) != 0) throw FormatError(path.string() + ": payload is not a whole number of floats");
    c.payload = parse_f32_le(bytes, pos, rest / sizeof(float));
    return c;
}

int parse_count(const std::string& field, const std::string& what) {
    int v = 0;
    const auto* end = field.data() + field.size();
    auto [p, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc() || p != end || v <= 0) throw FormatError("bad " + what + " '" + field + "'");
    return v;
}

int parse_int(const std::string& field, const std::string& what) {
    int v = 0;
    const auto* end = field.data() + field.size();
    auto [p, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc() || p != end) throw FormatError("bad " + what + " '" + field + "'");
    return v;
}

double parse_real(const std::string& field, const std::string& what) {
    std::istringstream in(field);
    double v = 0.0;
    if (!(in >> v) || !(in >> std::ws).eof()) throw FormatError("bad " + what + " '" + field + "'");
    return v;
}

std::string format_real(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace cospeech::io
