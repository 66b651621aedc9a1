#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cospeech/curation/curation.hpp"
#include "cospeech/train/trainer.hpp"

namespace cospeech {

/// One JSON object per training step:
/// {"step", "l_simple", "l_vel", "l_foot", "l_total", "wall_time"}.
std::string step_record_json(const StepRecord& r);
StepRecord parse_step_record(const std::string& line);

/// Appends lines and flushes after each so a killed run keeps its history.
class JsonlWriter {
public:
    explicit JsonlWriter(const std::filesystem::path& path, bool append = false);
    void write(const std::string& line);

private:
    std::filesystem::path path_;
};

std::vector<StepRecord> read_step_log(const std::filesystem::path& path);

/// Column-labeled tab-separated table.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    friend bool operator==(const Table&, const Table&) = default;
};

std::string format_tsv(const Table& t);
Table parse_tsv(const std::string& text);
void write_tsv(const std::filesystem::path& path, const Table& t);
Table read_tsv(const std::filesystem::path& path);

/// step, l_simple, l_vel, l_foot, l_total, wall_time.
Table loss_table(const std::vector<StepRecord>& log);
/// bin, lo, hi, count.
Table histogram_table(const Histogram& h);
Histogram histogram_from_table(const Table& t);

}  // namespace cospeech
