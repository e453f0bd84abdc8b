#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dalign {

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

// Strict parse of a whole field; throws dalign::Error on trailing junk.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace dalign
