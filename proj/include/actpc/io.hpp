#pragma once

// Shared helpers for the "JSON header line + little-endian binary block" file
// layout and for CSV output.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "actpc/types.hpp"

namespace actpc::io {

void write_f64_le(std::ostream& out, std::span<const double> values);
std::vector<double> read_f64_le(std::istream& in, std::size_t count);

void write_i8(std::ostream& out, std::span<const std::int8_t> values);
std::vector<std::int8_t> read_i8(std::istream& in, std::size_t count);

void write_header(std::ostream& out, const nlohmann::json& header);
nlohmann::json read_header(std::istream& in);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

nlohmann::json to_json(const Mat& m);  // row-major nested arrays
Mat mat_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Vec& v);
Vec vec_from_json(const nlohmann::json& j);

/// Rejects keys outside `allowed`; `where` names the object in the message.
void require_known_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                        const std::string& where);

/// Round-trippable decimal rendering of a double.
std::string format_double(double x);

}  // namespace actpc::io
