#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace objmodel {

/// "key = value" lines, '#' comments, blank lines ignored. Later keys win.
using KeyValues = std::map<std::string, std::string>;

KeyValues read_key_values(const std::filesystem::path& path);
KeyValues parse_key_values(const std::string& text, const std::string& origin = "<text>");
std::string format_key_values(const KeyValues& kv);

double kv_double(const KeyValues& kv, const std::string& key, double fallback);
int kv_int(const KeyValues& kv, const std::string& key, int fallback);
bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback);
std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback);
/// Whitespace- or comma-separated list of numbers.
std::vector<double> kv_doubles(const KeyValues& kv, const std::string& key, std::vector<double> fallback);

}  // namespace objmodel
