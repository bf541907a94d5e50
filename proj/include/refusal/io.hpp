#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace refusal {

using json = nlohmann::json;

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);

json read_json_file(const std::filesystem::path& path);

// One object per non-blank line. Throws ParseError naming the line number.
std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

// Pretty-printed, trailing newline; key order is json's sorted order so
// identical inputs always produce identical bytes.
std::string dump_report(const json& report);

// Number of Unicode code points in a UTF-8 string.
std::size_t utf8_length(std::string_view text);

std::string now_rfc3339();

// Little-endian primitives for the binary formats. get_* throw ParseError
// when fewer than four bytes remain.
void put_u32(std::string& out, std::uint32_t v);
std::uint32_t get_u32(std::string_view in, std::size_t& pos);
void put_f32(std::string& out, float f);
float get_f32(std::string_view in, std::size_t& pos);

}  // namespace refusal
