#include "cospeech/app/records.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cospeech/errors.hpp"
#include "cospeech/io/container.hpp"

namespace cospeech {

std::string step_record_json(const StepRecord& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["l_simple"] = r.loss.l_simple;
    j["l_vel"] = r.loss.l_vel;
    j["l_foot"] = r.loss.l_foot;
    j["l_total"] = r.loss.l_total;
    j["wall_time"] = r.wall_seconds;
    return j.dump();
}

StepRecord parse_step_record(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        StepRecord r{};
        r.step = j.at("step").get<long long>();
        r.loss.l_simple = j.at("l_simple").get<double>();
        r.loss.l_vel = j.at("l_vel").get<double>();
        r.loss.l_foot = j.at("l_foot").get<double>();
        r.loss.l_total = j.at("l_total").get<double>();
        r.wall_seconds = j.at("wall_time").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("training log line: ") + e.what());
    }
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path, bool append) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string());
}

void JsonlWriter::write(const std::string& line) {
    std::ofstream out(path_, std::ios::app);
    out << line << '\n';
    if (!out) throw FormatError("write failed: " + path_.string());
}

std::vector<StepRecord> read_step_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::vector<StepRecord> out;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) out.push_back(parse_step_record(line));
    return out;
}

std::string format_tsv(const Table& t) {
    auto row = [](const std::vector<std::string>& cells) {
        std::string s;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (cells[i].find_first_of("\t\n") != std::string::npos)
                throw FormatError("TSV cell contains a tab or newline");
            s += (i ? "\t" : "") + cells[i];
        }
        return s + "\n";
    };
    std::string out = row(t.header);
    for (const auto& r : t.rows) {
        if (r.size() != t.header.size()) throw ShapeMismatch("TSV row width differs from header");
        out += row(r);
    }
    return out;
}

Table parse_tsv(const std::string& text) {
    Table t;
    std::istringstream in(text);
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            const auto tab = l.find('\t', start);
            cells.push_back(l.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        return cells;
    };
    if (!std::getline(in, line)) throw FormatError("TSV without a header");
    t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != t.header.size()) throw FormatError("TSV row width differs from header");
        t.rows.push_back(std::move(cells));
    }
    return t;
}

void write_tsv(const std::filesystem::path& path, const Table& t) { io::write_file(path, format_tsv(t)); }
Table read_tsv(const std::filesystem::path& path) { return parse_tsv(io::read_file(path)); }

Table loss_table(const std::vector<StepRecord>& log) {
    Table t{{"step", "l_simple", "l_vel", "l_foot", "l_total", "wall_time"}, {}};
    for (const auto& r : log)
        t.rows.push_back({std::to_string(r.step), io::format_real(r.loss.l_simple), io::format_real(r.loss.l_vel),
                          io::format_real(r.loss.l_foot), io::format_real(r.loss.l_total),
                          io::format_real(r.wall_seconds)});
    return t;
}

Table histogram_table(const Histogram& h) {
    Table t{{"bin", "lo", "hi", "count"}, {}};
    for (std::size_t b = 0; b < h.counts.size(); ++b)
        t.rows.push_back({std::to_string(b), io::format_real(h.edges[b]), io::format_real(h.edges[b + 1]),
                          std::to_string(h.counts[b])});
    return t;
}

Histogram histogram_from_table(const Table& t) {
    if (t.header != std::vector<std::string>{"bin", "lo", "hi", "count"})
        throw FormatError("not a histogram table");
    Histogram h;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& r = t.rows[i];
        if (io::parse_int(r[0], "bin") != static_cast<int>(i)) throw FormatError("histogram bins out of order");
        if (i == 0) h.edges.push_back(io::parse_real(r[1], "lo"));
        h.edges.push_back(io::parse_real(r[2], "hi"));
        h.counts.push_back(io::parse_int(r[3], "count"));
    }
    return h;
}

}  // namespace cospeech
