#pragma once

// Header-plus-float32 container shared by the motion (GMC1) and mel (MEL1)
// file formats: one text line per header field, then a little-endian float32
// payload.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cospeech/tensor.hpp"

namespace cospeech::io {

struct Container {
    std::vector<std::string> header;  // header[0] is the magic
    std::vector<float> payload;
};

void write_container(const std::filesystem::path& path, const Container& c);

/// Reads `header_lines` text lines (magic included) and the remaining bytes as
/// float32. Throws FormatError on a wrong magic or a payload that is not
/// exactly `expected_floats(header)` values.
Container read_container(const std::filesystem::path& path, const std::string& magic, int header_lines);

std::vector<float> to_f32(const Tensor& t);
Tensor from_f32(int rows, int cols, const std::vector<float>& v, std::size_t offset = 0);

void append_f32_le(std::string& out, const std::vector<float>& v);
std::vector<float> parse_f32_le(const std::string& bytes, std::size_t offset, std::size_t count);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling then renames, so readers never see a partial file.
void write_file(const std::filesystem::path& path, const std::string& bytes);

/// Parses a strictly positive integer header field.
int parse_count(const std::string& field, const std::string& what);
/// Any integer; range checks belong to the caller.
int parse_int(const std::string& field, const std::string& what);
double parse_real(const std::string& field, const std::string& what);
std::string format_real(double v);

}  // namespace cospeech::io
